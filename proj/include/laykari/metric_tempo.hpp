// Copyright 2026 The Laykari Authors
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "laykari/errors.hpp"
#include "laykari/features.hpp"

namespace laykari {

// Metric tempo search band in BPM.
struct TempoRange {
    double lo = 35.0;
    double hi = 75.0;
    void validate() const {
        if (!(lo > 0.0 && lo < hi)) throw ConfigError("tempo range requires 0 < lo < hi");
    }
    bool contains(double bpm) const { return bpm >= lo - 1e-9 && bpm <= hi + 1e-9; }
};

// Onset detection function sampled on the mel frame grid.
struct OdfSeries {
    double hop_s = 0.02;
    std::vector<double> values;
    double duration() const { return values.size() * hop_s; }
};

// Windowed autocorrelation scores. Column c corresponds to a lag of
// (c + 1) * lag_step_s seconds; out-of-range columns are zeroed.
struct CandidateFrames {
    double hop_s = 0.5;
    double lag_step_s = 0.02;
    int n_lags = 0;
    TempoRange range;
    std::vector<double> times;
    std::vector<double> scores; // row-major [times.size()][n_lags]

    double score(size_t frame, int lag_col) const { return scores[frame * n_lags + lag_col]; }
    double& score(size_t frame, int lag_col) { return scores[frame * n_lags + lag_col]; }
    double lag_to_bpm(int lag_col) const { return 60.0 / ((lag_col + 1) * lag_step_s); }
};

// BPM time series at a fixed hop; NaN marks frames with no defined value.
struct TempoTrack {
    std::vector<double> times;
    std::vector<double> bpm;
    size_t size() const { return times.size(); }
    bool defined(size_t i) const { return std::isfinite(bpm[i]); }
};

// Half-wave rectified spectral flux, summed over mel bands. First frame is 0.
OdfSeries odf(const MelMatrix& mel);

// Autocorrelation of mean-removed 12 s ODF windows at a 0.5 s hop, lags up to
// 2 s, normalised by the window's zero-lag energy and rectified to [0, 1].
CandidateFrames acf_candidates(const OdfSeries& series, const TempoRange& range = {});

// Best lag path under per-frame log scores with a |log(bpm ratio)| jump cost.
TempoTrack viterbi_smooth(const CandidateFrames& cands, double jump_penalty = 5.0);

// Halve or double into [lo, hi]; when no power of two lands inside, the
// nearest candidate by log distance is clamped to the range.
double fold_to_range(double bpm, const TempoRange& range);

// Cycle-wise tempo from sam times: 60 * matras / cycle duration, held constant
// across each cycle, sampled every 0.5 s from t = 0 up to the last sam.
TempoTrack mt_from_sams(const std::vector<double>& sam_times, int matras_per_cycle);

// Full pipeline over a spectrogram: odf -> acf_candidates -> viterbi_smooth,
// then edge-replicated onto the 0.5 s grid covering the whole spectrogram.
TempoTrack estimate_metric_tempo(const MelMatrix& mel, const TempoRange& range = {},
                                 double jump_penalty = 5.0);

void write_tempo_csv(const std::string& path, const TempoTrack& track);
TempoTrack read_tempo_csv(const std::string& path);

} // namespace laykari
