// Copyright 2026 The Laykari Authors
//
// Licensed under the Apache License, Version 2.0

#include "laykari/features.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <cstring>
#include <numbers>

#include "fft.hpp"

namespace laykari {

namespace {

constexpr char kCacheMagic[4] = {'L', 'M', 'E', 'L'};
constexpr uint32_t kCacheVersion = 1;

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

void write_or_throw(std::FILE* f, const void* data, size_t n, const std::string& path) {
    if (std::fwrite(data, 1, n, f) != n) {
        throw IoError("short write: " + path);
    }
}

void read_or_throw(std::FILE* f, void* data, size_t n, const std::string& path) {
    if (std::fread(data, 1, n, f) != n) {
        throw FormatError("truncated mel cache: " + path);
    }
}

} // namespace

void FeatConfig::validate() const {
    if (rate <= 0) throw ConfigError("feature rate must be positive");
    if (window_s <= 0.0 || hop_s <= 0.0) throw ConfigError("window and hop must be positive");
    if (hop_s > window_s) throw ConfigError("hop longer than window");
    if (n_mels < 1) throw ConfigError("need at least one mel band");
    if (!(fmin_hz >= 0.0 && fmin_hz < fmax_hz)) throw ConfigError("bad mel frequency range");
    if (fmax_hz > rate / 2.0) throw ConfigError("mel range exceeds Nyquist");
    if (n_fft < window_samples()) throw ConfigError("n_fft shorter than analysis window");
    if (log_scale <= 0.0) throw ConfigError("log_scale must be positive");
}

std::vector<double> mel_filterbank(const FeatConfig& cfg) {
    cfg.validate();
    const int n_bins = cfg.n_fft / 2 + 1;
    const double mel_lo = hz_to_mel(cfg.fmin_hz);
    const double mel_hi = hz_to_mel(cfg.fmax_hz);
    std::vector<double> edges(cfg.n_mels + 2);
    for (int i = 0; i < cfg.n_mels + 2; ++i) {
        edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (cfg.n_mels + 1));
    }
    std::vector<double> fb(static_cast<size_t>(cfg.n_mels) * n_bins, 0.0);
    for (int m = 0; m < cfg.n_mels; ++m) {
        const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
        for (int b = 0; b < n_bins; ++b) {
            const double f = static_cast<double>(b) * cfg.rate / cfg.n_fft;
            double w = 0.0;
            if (f > lo && f < hi) {
                w = f <= mid ? (f - lo) / (mid - lo) : (hi - f) / (hi - mid);
            }
            fb[static_cast<size_t>(m) * n_bins + b] = w;
        }
    }
    return fb;
}

MelMatrix log_mel(const AudioBuffer& audio, const FeatConfig& cfg) {
    cfg.validate();
    if (audio.rate != cfg.rate) {
        throw ValidationError("audio rate " + std::to_string(audio.rate) +
                              " does not match feature rate " + std::to_string(cfg.rate));
    }
    const int win = cfg.window_samples();
    const int hop = cfg.hop_samples();
    const long n = static_cast<long>(audio.samples.size());
    if (n < win) throw ValidationError("audio shorter than one analysis window");

    std::vector<double> hann(win);
    for (int i = 0; i < win; ++i) {
        hann[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / win);
    }
    const std::vector<double> fb = mel_filterbank(cfg);
    const int n_bins = cfg.n_fft / 2 + 1;
    const detail::Fft fft(cfg.n_fft);

    // Frames are centred on i * hop with reflect padding at the edges.
    const int n_frames = 1 + static_cast<int>(n / hop);
    const int half = win / 2;
    auto sample_at = [&](long idx) -> double {
        if (idx < 0) idx = -idx;
        if (idx >= n) idx = 2 * (n - 1) - idx;
        return audio.samples[static_cast<size_t>(std::clamp(idx, 0L, n - 1))];
    };

    MelMatrix out;
    out.n_mels = cfg.n_mels;
    out.n_frames = n_frames;
    out.hop_s = static_cast<double>(hop) / cfg.rate;
    out.values.assign(static_cast<size_t>(cfg.n_mels) * n_frames, 0.0f);

    std::vector<std::complex<double>> buf(cfg.n_fft);
    std::vector<double> mag(n_bins);
    for (int t = 0; t < n_frames; ++t) {
        const long start = static_cast<long>(t) * hop - half;
        for (int i = 0; i < win; ++i) buf[i] = sample_at(start + i) * hann[i];
        std::fill(buf.begin() + win, buf.end(), std::complex<double>(0.0, 0.0));
        fft.forward(buf.data());
        for (int b = 0; b < n_bins; ++b) mag[b] = std::abs(buf[b]);
        for (int m = 0; m < cfg.n_mels; ++m) {
            const double* row = fb.data() + static_cast<size_t>(m) * n_bins;
            double acc = 0.0;
            for (int b = 0; b < n_bins; ++b) acc += row[b] * mag[b];
            out.at(m, t) = static_cast<float>(std::log1p(cfg.log_scale * acc));
        }
    }
    return out;
}

MelExample make_example(const MelMatrix& mel, int start_frame) {
    if (mel.n_mels != MelExample::kMels) {
        throw ValidationError("expected " + std::to_string(MelExample::kMels) + " mel bands, got " +
                              std::to_string(mel.n_mels));
    }
    if (start_frame < 0 || start_frame + MelExample::kFrames > mel.n_frames) {
        throw ValidationError("example window [" + std::to_string(start_frame) + ", " +
                              std::to_string(start_frame + MelExample::kFrames) +
                              ") outside spectrogram with " + std::to_string(mel.n_frames) + " frames");
    }
    MelExample ex;
    ex.values.resize(static_cast<size_t>(MelExample::kMels) * MelExample::kFrames);
    float lo = mel.at(0, start_frame), hi = lo;
    for (int m = 0; m < MelExample::kMels; ++m) {
        for (int t = 0; t < MelExample::kFrames; ++t) {
            const float v = mel.at(m, start_frame + t);
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    }
    const float span = hi - lo;
    for (int m = 0; m < MelExample::kMels; ++m) {
        for (int t = 0; t < MelExample::kFrames; ++t) {
            const float v = mel.at(m, start_frame + t);
            ex.values[static_cast<size_t>(m) * MelExample::kFrames + t] =
                span > 0.0f ? (v - lo) / span : 0.0f;
        }
    }
    return ex;
}

void write_mel_cache(const std::string& path, const MelMatrix& mel) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw IoError("cannot open for writing: " + path);
    try {
        write_or_throw(f, kCacheMagic, 4, path);
        const uint32_t header[3] = {kCacheVersion, static_cast<uint32_t>(mel.n_mels),
                                    static_cast<uint32_t>(mel.n_frames)};
        write_or_throw(f, header, sizeof(header), path);
        write_or_throw(f, &mel.hop_s, sizeof(double), path);
        write_or_throw(f, mel.values.data(), mel.values.size() * sizeof(float), path);
    } catch (...) {
        std::fclose(f);
        throw;
    }
    std::fclose(f);
}

MelMatrix read_mel_cache(const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw IoError("cannot open: " + path);
    MelMatrix mel;
    try {
        char magic[4];
        read_or_throw(f, magic, 4, path);
        if (std::memcmp(magic, kCacheMagic, 4) != 0) {
            throw FormatError("not a mel cache file: " + path);
        }
        uint32_t header[3];
        read_or_throw(f, header, sizeof(header), path);
        if (header[0] != kCacheVersion) {
            throw FormatError("unsupported mel cache version " + std::to_string(header[0]) + ": " + path);
        }
        mel.n_mels = static_cast<int>(header[1]);
        mel.n_frames = static_cast<int>(header[2]);
        read_or_throw(f, &mel.hop_s, sizeof(double), path);
        if (mel.n_mels < 1 || mel.n_frames < 1 || !(mel.hop_s > 0.0)) {
            throw FormatError("bad mel cache dimensions: " + path);
        }
        mel.values.resize(static_cast<size_t>(mel.n_mels) * mel.n_frames);
        read_or_throw(f, mel.values.data(), mel.values.size() * sizeof(float), path);
    } catch (...) {
        std::fclose(f);
        throw;
    }
    std::fclose(f);
    return mel;
}

} // namespace laykari
