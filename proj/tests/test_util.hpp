// Copyright 2026 The Laykari Authors
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

namespace laykari::testing {

struct TempDir {
    std::string path;
    TempDir() {
        char tmpl[] = "/tmp/laykari_test_XXXXXX";
        path = ::mkdtemp(tmpl);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    std::string file(const std::string& name) const { return path + "/" + name; }
};

enum class WavEncoding { Pcm16, Pcm8, Float32 };

// Minimal WAV writer independent of the library code, for fixtures the
// production writer refuses to produce (stereo, 8-bit, float).
inline void write_wav_file(const std::string& path, int rate, int channels, WavEncoding enc,
                           const std::vector<float>& interleaved) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    auto u32 = [&](uint32_t v) { std::fwrite(&v, 4, 1, f); };
    auto u16 = [&](uint16_t v) { std::fwrite(&v, 2, 1, f); };
    const int bits = enc == WavEncoding::Pcm8 ? 8 : enc == WavEncoding::Pcm16 ? 16 : 32;
    const uint16_t fmt = enc == WavEncoding::Float32 ? 3 : 1;
    const uint32_t data_bytes = static_cast<uint32_t>(interleaved.size() * bits / 8);
    std::fwrite("RIFF", 1, 4, f);
    u32(36 + data_bytes);
    std::fwrite("WAVE", 1, 4, f);
    std::fwrite("fmt ", 1, 4, f);
    u32(16);
    u16(fmt);
    u16(static_cast<uint16_t>(channels));
    u32(static_cast<uint32_t>(rate));
    u32(static_cast<uint32_t>(rate * channels * bits / 8));
    u16(static_cast<uint16_t>(channels * bits / 8));
    u16(static_cast<uint16_t>(bits));
    std::fwrite("data", 1, 4, f);
    u32(data_bytes);
    for (float s : interleaved) {
        if (enc == WavEncoding::Float32) {
            std::fwrite(&s, 4, 1, f);
        } else if (enc == WavEncoding::Pcm16) {
            const float c = s < -1.0f ? -1.0f : (s > 1.0f ? 1.0f : s);
            const int16_t q = static_cast<int16_t>(std::lrintf(c * 32767.0f));
            std::fwrite(&q, 2, 1, f);
        } else {
            const float c = s < -1.0f ? -1.0f : (s > 1.0f ? 1.0f : s);
            const uint8_t q = static_cast<uint8_t>(std::lrintf((c * 0.5f + 0.5f) * 255.0f));
            std::fwrite(&q, 1, 1, f);
        }
    }
    std::fclose(f);
}

inline std::vector<float> sine(double hz, int rate, double dur_s, double amp = 0.5) {
    std::vector<float> x(static_cast<size_t>(dur_s * rate));
    for (size_t i = 0; i < x.size(); ++i) {
        x[i] = static_cast<float>(amp * std::sin(2.0 * std::numbers::pi * hz * i / rate));
    }
    return x;
}

inline bool near_abs(double a, double b, double tol) { return std::fabs(a - b) <= tol; }

inline double rms(const std::vector<float>& x) {
    double acc = 0.0;
    for (float v : x) acc += static_cast<double>(v) * v;
    return x.empty() ? 0.0 : std::sqrt(acc / x.size());
}

// Naive DFT peak on a 1 Hz grid, used as an independent frequency oracle.
inline double dominant_hz(const std::vector<float>& x, int rate, int max_hz) {
    double best_mag = -1.0;
    int best_f = 0;
    for (int f = 1; f <= max_hz; ++f) {
        double re = 0.0, im = 0.0;
        const double w = 2.0 * std::numbers::pi * f / rate;
        for (size_t i = 0; i < x.size(); ++i) {
            re += x[i] * std::cos(w * i);
            im -= x[i] * std::sin(w * i);
        }
        const double mag = re * re + im * im;
        if (mag > best_mag) {
            best_mag = mag;
            best_f = f;
        }
    }
    return best_f;
}

} // namespace laykari::testing
