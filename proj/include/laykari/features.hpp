// Copyright 2026 The Laykari Authors
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <string>
#include <vector>

#include "laykari/audio_io.hpp"
#include "laykari/errors.hpp"

namespace laykari {

// Log-compressed mel spectrogram settings. Defaults give 40 bands at a
// 20 ms frame hop, which is what the classifier input grid assumes.
struct FeatConfig {
    double window_s = 0.040;
    double hop_s = 0.020;
    int n_mels = 40;
    double fmin_hz = 20.0;
    double fmax_hz = 8000.0;
    int rate = kPipelineRate;
    int n_fft = 1024;
    double log_scale = 1000.0;

    int window_samples() const { return static_cast<int>(window_s * rate + 0.5); }
    int hop_samples() const { return static_cast<int>(hop_s * rate + 0.5); }
    void validate() const;
};

// Row-major [n_mels][n_frames] spectrogram with uniform frame spacing.
struct MelMatrix {
    int n_mels = 0;
    int n_frames = 0;
    double hop_s = 0.0;
    std::vector<float> values;

    float at(int mel, int frame) const { return values[static_cast<size_t>(mel) * n_frames + frame]; }
    float& at(int mel, int frame) { return values[static_cast<size_t>(mel) * n_frames + frame]; }
    double frame_time(int frame) const { return frame * hop_s; }
};

// Fixed-size classifier input slice, min-max normalised to [0, 1].
struct MelExample {
    static constexpr int kMels = 40;
    static constexpr int kFrames = 400;
    std::vector<float> values; // row-major [kMels][kFrames]

    float at(int mel, int frame) const { return values[static_cast<size_t>(mel) * kFrames + frame]; }
};

// Triangular filterbank on the HTK mel scale, row-major [n_mels][n_fft/2 + 1].
std::vector<double> mel_filterbank(const FeatConfig& cfg);

// Windowed STFT magnitudes folded through the filterbank and compressed as
// log(1 + log_scale * x). Frames are centred: frame i covers time i * hop_s.
MelMatrix log_mel(const AudioBuffer& audio, const FeatConfig& cfg = {});

// Cuts a 400-frame window starting at start_frame and rescales it to [0, 1].
// A constant window comes back as all zeros.
MelExample make_example(const MelMatrix& mel, int start_frame);

void write_mel_cache(const std::string& path, const MelMatrix& mel);
MelMatrix read_mel_cache(const std::string& path);

} // namespace laykari
