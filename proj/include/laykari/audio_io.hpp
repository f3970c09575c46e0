// Copyright 2026 The Laykari Authors
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <string>
#include <vector>

#include "laykari/errors.hpp"

namespace laykari {

/// Canonical sampling rate of the analysis pipeline. Downstream modules
/// assume buffers at this rate and assert it.
inline constexpr int kPipelineRate = 16000;

/// Mono audio signal. Samples are amplitudes in [-1, 1].
struct AudioBuffer {
    std::vector<float> samples;
    int rate = kPipelineRate;

    double duration() const {
        return rate > 0 ? static_cast<double>(samples.size()) / rate : 0.0;
    }
};

class UnreadableFileError : public IoError {
public:
    using IoError::IoError;
};

class UnsupportedEncodingError : public FormatError {
public:
    using FormatError::FormatError;
};

class ZeroLengthStreamError : public FormatError {
public:
    using FormatError::FormatError;
};

/// Band-limited sample-rate conversion (windowed-sinc kernel, Kaiser window).
/// Output length is round(len * dst_rate / src_rate).
std::vector<float> resample(const std::vector<float>& x, int src_rate, int dst_rate);

/// Decode a RIFF/WAVE file (PCM 16-bit LE or IEEE float 32-bit, 1-2 channels)
/// into a mono buffer at target_rate. Stereo input is averaged when mixdown
/// is set and rejected otherwise.
AudioBuffer load_audio(const std::string& path, int target_rate = kPipelineRate,
                       bool mixdown = true);

/// Write a mono buffer as PCM 16-bit LE WAV.
void write_wav(const std::string& path, const AudioBuffer& buf);

} // namespace laykari
