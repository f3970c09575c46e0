// Copyright 2026 The Laykari Authors
//
// Licensed under the Apache License, Version 2.0

#include "laykari/audio_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>

namespace laykari {

namespace {

uint32_t read_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 | uint32_t(b[3]) << 24;
}

uint16_t read_u16(std::istream& in) {
    unsigned char b[2];
    in.read(reinterpret_cast<char*>(b), 2);
    return uint16_t(b[0]) | uint16_t(b[1]) << 8;
}

void write_u32(std::ostream& out, uint32_t v) {
    char b[4] = {char(v & 0xff), char(v >> 8 & 0xff), char(v >> 16 & 0xff), char(v >> 24 & 0xff)};
    out.write(b, 4);
}

void write_u16(std::ostream& out, uint16_t v) {
    char b[2] = {char(v & 0xff), char(v >> 8 & 0xff)};
    out.write(b, 2);
}

constexpr uint16_t kFormatPcm = 1;
constexpr uint16_t kFormatFloat = 3;

struct WavData {
    int rate = 0;
    int channels = 0;
    // Interleaved frames, normalized to [-1, 1].
    std::vector<float> samples;
};

WavData read_wav(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw UnreadableFileError("cannot open audio file: " + path);
    }
    char tag[4];
    in.read(tag, 4);
    if (!in || std::memcmp(tag, "RIFF", 4) != 0) {
        throw UnsupportedEncodingError("not a RIFF file: " + path);
    }
    read_u32(in);
    in.read(tag, 4);
    if (!in || std::memcmp(tag, "WAVE", 4) != 0) {
        throw UnsupportedEncodingError("not a WAVE file: " + path);
    }

    uint16_t format = 0, channels = 0, bits = 0;
    uint32_t rate = 0;
    bool have_fmt = false;
    std::vector<char> payload;

    while (in.read(tag, 4)) {
        const uint32_t size = read_u32(in);
        if (!in) break;
        if (std::memcmp(tag, "fmt ", 4) == 0) {
            format = read_u16(in);
            channels = read_u16(in);
            rate = read_u32(in);
            read_u32(in); // byte rate
            read_u16(in); // block align
            bits = read_u16(in);
            have_fmt = true;
            if (size > 16) in.seekg(size - 16 + (size & 1), std::ios::cur);
        } else if (std::memcmp(tag, "data", 4) == 0) {
            payload.resize(size);
            in.read(payload.data(), size);
            if (static_cast<uint32_t>(in.gcount()) != size) {
                throw UnsupportedEncodingError("truncated data chunk: " + path);
            }
            if (size & 1) in.seekg(1, std::ios::cur);
            break;
        } else {
            in.seekg(size + (size & 1), std::ios::cur);
        }
    }

    if (!have_fmt) {
        throw UnsupportedEncodingError("missing fmt chunk: " + path);
    }
    if (channels < 1 || channels > 2) {
        throw UnsupportedEncodingError("unsupported channel count " + std::to_string(channels) +
                                       ": " + path);
    }
    const bool pcm16 = format == kFormatPcm && bits == 16;
    const bool f32 = format == kFormatFloat && bits == 32;
    if (!pcm16 && !f32) {
        throw UnsupportedEncodingError("unsupported encoding (format=" + std::to_string(format) +
                                       ", bits=" + std::to_string(bits) + "): " + path);
    }

    const size_t bytes_per_sample = pcm16 ? 2 : 4;
    const size_t n = payload.size() / bytes_per_sample;
    if (n == 0) {
        throw ZeroLengthStreamError("zero-length audio stream: " + path);
    }

    WavData wav;
    wav.rate = static_cast<int>(rate);
    wav.channels = channels;
    wav.samples.resize(n);
    if (pcm16) {
        for (size_t i = 0; i < n; ++i) {
            int16_t s;
            std::memcpy(&s, payload.data() + 2 * i, 2);
            wav.samples[i] = static_cast<float>(s) / 32768.0f;
        }
    } else {
        for (size_t i = 0; i < n; ++i) {
            float s;
            std::memcpy(&s, payload.data() + 4 * i, 4);
            wav.samples[i] = std::isfinite(s) ? std::clamp(s, -1.0f, 1.0f) : 0.0f;
        }
    }
    return wav;
}

double bessel_i0(double x) {
    // Series expansion; converges quickly for the window arguments used here.
    double sum = 1.0, term = 1.0;
    const double q = x * x / 4.0;
    for (int k = 1; k < 64; ++k) {
        term *= q / (k * static_cast<double>(k));
        sum += term;
        if (term < 1e-16 * sum) break;
    }
    return sum;
}

} // namespace

std::vector<float> resample(const std::vector<float>& x, int src_rate, int dst_rate) {
    if (src_rate <= 0 || dst_rate <= 0) {
        throw ValidationError("resample rates must be positive");
    }
    if (src_rate == dst_rate) return x;
    if (x.empty()) return {};

    const double ratio = static_cast<double>(dst_rate) / src_rate;
    const size_t n_out = static_cast<size_t>(std::llround(x.size() * ratio));

    // Cutoff slightly under the lower Nyquist, in cycles per input sample.
    const double fc = 0.97 * 0.5 * std::min(1.0, ratio);
    const double beta = 9.0;
    const int half = static_cast<int>(std::ceil(24.0 / (2.0 * fc)));
    const double i0_beta = bessel_i0(beta);

    std::vector<float> y(n_out);
    const int n_in = static_cast<int>(x.size());
    for (size_t n = 0; n < n_out; ++n) {
        const double center = n / ratio;
        const int m0 = std::max(0, static_cast<int>(std::ceil(center)) - half);
        const int m1 = std::min(n_in - 1, static_cast<int>(std::floor(center)) + half);
        double acc = 0.0;
        for (int m = m0; m <= m1; ++m) {
            const double u = m - center;
            const double a = 2.0 * fc * u;
            const double sinc = a == 0.0 ? 1.0 : std::sin(std::numbers::pi * a) / (std::numbers::pi * a);
            const double frac = u / half;
            const double win = bessel_i0(beta * std::sqrt(std::max(0.0, 1.0 - frac * frac))) / i0_beta;
            acc += x[m] * 2.0 * fc * sinc * win;
        }
        y[n] = static_cast<float>(acc);
    }
    return y;
}

AudioBuffer load_audio(const std::string& path, int target_rate, bool mixdown) {
    if (target_rate <= 0) {
        throw ValidationError("target_rate must be positive: " + path);
    }
    WavData wav = read_wav(path);

    std::vector<float> mono;
    if (wav.channels == 1) {
        mono = std::move(wav.samples);
    } else if (mixdown) {
        mono.resize(wav.samples.size() / 2);
        for (size_t i = 0; i < mono.size(); ++i) {
            mono[i] = 0.5f * (wav.samples[2 * i] + wav.samples[2 * i + 1]);
        }
    } else {
        throw UnsupportedEncodingError("multi-channel file without mixdown: " + path);
    }

    AudioBuffer buf;
    buf.rate = target_rate;
    buf.samples = wav.rate == target_rate ? std::move(mono) : resample(mono, wav.rate, target_rate);
    for (float& s : buf.samples) s = std::clamp(s, -1.0f, 1.0f);
    return buf;
}

void write_wav(const std::string& path, const AudioBuffer& buf) {
    if (buf.rate <= 0) {
        throw ValidationError("buffer rate must be positive: " + path);
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw UnreadableFileError("cannot open file for writing: " + path);
    }
    const uint32_t data_bytes = static_cast<uint32_t>(buf.samples.size() * 2);
    out.write("RIFF", 4);
    write_u32(out, 36 + data_bytes);
    out.write("WAVE", 4);
    out.write("fmt ", 4);
    write_u32(out, 16);
    write_u16(out, kFormatPcm);
    write_u16(out, 1);
    write_u32(out, static_cast<uint32_t>(buf.rate));
    write_u32(out, static_cast<uint32_t>(buf.rate) * 2);
    write_u16(out, 2);
    write_u16(out, 16);
    out.write("data", 4);
    write_u32(out, data_bytes);
    for (float s : buf.samples) {
        const auto q = static_cast<int16_t>(std::lrintf(std::clamp(s, -1.0f, 1.0f) * 32767.0f));
        write_u16(out, static_cast<uint16_t>(q));
    }
    if (!out) {
        throw IoError("failed writing wav: " + path);
    }
}

} // namespace laykari
