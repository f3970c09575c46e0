// Copyright 2026 The Laykari Authors
//
// Licensed under the Apache License, Version 2.0

#include "laykari/metric_tempo.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace laykari {

namespace {

constexpr double kWindowS = 12.0;
constexpr double kHopS = 0.5;
constexpr double kMaxLagS = 2.0;
constexpr double kLogEps = 1e-9;

std::vector<int> in_range_lags(const CandidateFrames& cands) {
    std::vector<int> lags;
    for (int c = 0; c < cands.n_lags; ++c) {
        if (cands.range.contains(cands.lag_to_bpm(c))) lags.push_back(c);
    }
    return lags;
}

} // namespace

OdfSeries odf(const MelMatrix& mel) {
    if (mel.n_frames < 1 || mel.n_mels < 1) throw ValidationError("empty spectrogram");
    OdfSeries out;
    out.hop_s = mel.hop_s;
    out.values.assign(mel.n_frames, 0.0);
    for (int m = 0; m < mel.n_mels; ++m) {
        const float* row = mel.values.data() + static_cast<size_t>(m) * mel.n_frames;
        for (int t = 1; t < mel.n_frames; ++t) {
            const double d = static_cast<double>(row[t]) - row[t - 1];
            if (d > 0.0) out.values[t] += d;
        }
    }
    return out;
}

CandidateFrames acf_candidates(const OdfSeries& series, const TempoRange& range) {
    range.validate();
    if (series.hop_s <= 0.0) throw ValidationError("odf hop must be positive");
    const int win = static_cast<int>(kWindowS / series.hop_s + 0.5);
    const int hop = static_cast<int>(kHopS / series.hop_s + 0.5);
    const int n = static_cast<int>(series.values.size());
    if (n < win) throw ValidationError("odf shorter than one analysis window (12 s)");

    CandidateFrames cands;
    cands.hop_s = kHopS;
    cands.lag_step_s = series.hop_s;
    cands.n_lags = static_cast<int>(kMaxLagS / series.hop_s + 0.5);
    cands.range = range;
    const int n_frames = 1 + (n - win) / hop;
    cands.times.resize(n_frames);
    cands.scores.assign(static_cast<size_t>(n_frames) * cands.n_lags, 0.0);

    std::vector<double> w(win);
    for (int f = 0; f < n_frames; ++f) {
        const int start = f * hop;
        cands.times[f] = (start + win / 2) * series.hop_s;
        double mean = 0.0;
        for (int j = 0; j < win; ++j) mean += series.values[start + j];
        mean /= win;
        for (int j = 0; j < win; ++j) w[j] = series.values[start + j] - mean;
        double energy = 0.0;
        for (int j = 0; j < win; ++j) energy += w[j] * w[j];
        if (energy <= 1e-20) continue; // silent window: all scores stay 0
        for (int c = 0; c < cands.n_lags; ++c) {
            const int lag = c + 1;
            if (!range.contains(cands.lag_to_bpm(c))) continue;
            double acc = 0.0;
            for (int j = 0; j + lag < win; ++j) acc += w[j] * w[j + lag];
            cands.score(f, c) = std::max(0.0, acc / energy);
        }
    }
    return cands;
}

TempoTrack viterbi_smooth(const CandidateFrames& cands, double jump_penalty) {
    if (jump_penalty < 0.0) throw ConfigError("jump penalty must be non-negative");
    const std::vector<int> states = in_range_lags(cands);
    if (states.empty()) throw ValidationError("no lags fall inside the tempo range");
    const size_t n_frames = cands.times.size();
    const size_t n_states = states.size();

    std::vector<double> log_bpm(n_states);
    for (size_t s = 0; s < n_states; ++s) log_bpm[s] = std::log(cands.lag_to_bpm(states[s]));

    std::vector<double> prev(n_states), cur(n_states);
    std::vector<int> back(n_frames * n_states, 0);
    for (size_t s = 0; s < n_states; ++s) prev[s] = std::log(cands.score(0, states[s]) + kLogEps);
    for (size_t f = 1; f < n_frames; ++f) {
        for (size_t s = 0; s < n_states; ++s) {
            double best = -std::numeric_limits<double>::infinity();
            int best_p = 0;
            for (size_t p = 0; p < n_states; ++p) {
                const double v = prev[p] - jump_penalty * std::abs(log_bpm[s] - log_bpm[p]);
                if (v > best) {
                    best = v;
                    best_p = static_cast<int>(p);
                }
            }
            cur[s] = best + std::log(cands.score(f, states[s]) + kLogEps);
            back[f * n_states + s] = best_p;
        }
        prev.swap(cur);
    }

    size_t tail = 0;
    for (size_t s = 1; s < n_states; ++s) {
        if (prev[s] > prev[tail]) tail = s;
    }
    std::vector<size_t> path(n_frames);
    path[n_frames - 1] = tail;
    for (size_t f = n_frames - 1; f > 0; --f) {
        path[f - 1] = static_cast<size_t>(back[f * n_states + path[f]]);
    }

    TempoTrack track;
    track.times = cands.times;
    track.bpm.resize(n_frames);
    for (size_t f = 0; f < n_frames; ++f) track.bpm[f] = cands.lag_to_bpm(states[path[f]]);
    return track;
}

double fold_to_range(double bpm, const TempoRange& range) {
    range.validate();
    if (!(bpm > 0.0)) throw ValidationError("bpm must be positive");
    double inside = 0.0, nearest = 0.0;
    double best_inside = std::numeric_limits<double>::infinity();
    double best_dist = std::numeric_limits<double>::infinity();
    for (int k = -60; k <= 60; ++k) {
        const double c = bpm * std::pow(2.0, k);
        if (range.contains(c)) {
            const double d = std::abs(std::log(c / bpm));
            if (d < best_inside) {
                best_inside = d;
                inside = c;
            }
        } else {
            const double d = c < range.lo ? std::log(range.lo / c) : std::log(c / range.hi);
            if (d < best_dist) {
                best_dist = d;
                nearest = c;
            }
        }
    }
    if (best_inside < std::numeric_limits<double>::infinity()) return inside;
    return std::clamp(nearest, range.lo, range.hi);
}

TempoTrack mt_from_sams(const std::vector<double>& sam_times, int matras_per_cycle) {
    if (sam_times.size() < 2) throw ValidationError("need at least two sam times");
    if (matras_per_cycle < 1) throw ValidationError("matras per cycle must be positive");
    for (size_t i = 1; i < sam_times.size(); ++i) {
        if (!(sam_times[i] > sam_times[i - 1])) {
            throw ValidationError("sam times must be strictly increasing (index " + std::to_string(i) + ")");
        }
    }
    TempoTrack track;
    const double last = sam_times.back();
    for (int i = 0; i * kHopS < last - 1e-9; ++i) {
        const double t = i * kHopS;
        track.times.push_back(t);
        if (t < sam_times.front()) {
            track.bpm.push_back(std::numeric_limits<double>::quiet_NaN());
            continue;
        }
        size_t c = std::upper_bound(sam_times.begin(), sam_times.end(), t) - sam_times.begin();
        if (c == 0) c = 1;
        if (c >= sam_times.size()) c = sam_times.size() - 1;
        track.bpm.push_back(60.0 * matras_per_cycle / (sam_times[c] - sam_times[c - 1]));
    }
    return track;
}

TempoTrack estimate_metric_tempo(const MelMatrix& mel, const TempoRange& range, double jump_penalty) {
    const TempoTrack windows = viterbi_smooth(acf_candidates(odf(mel), range), jump_penalty);
    const double dur = (mel.n_frames - 1) * mel.hop_s;
    const int n = std::max(1, static_cast<int>(dur / kHopS + 1e-9));
    TempoTrack track;
    track.times.resize(n);
    track.bpm.resize(n);
    for (int i = 0; i < n; ++i) {
        const double t = i * kHopS;
        track.times[i] = t;
        // Nearest analysis window, clamped: replicates edges where no full
        // 12 s window exists.
        const double pos = (t - windows.times.front()) / kHopS;
        const long idx = std::clamp(std::lround(pos), 0L, static_cast<long>(windows.size()) - 1);
        track.bpm[i] = windows.bpm[static_cast<size_t>(idx)];
    }
    return track;
}

void write_tempo_csv(const std::string& path, const TempoTrack& track) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << "time_s,bpm\n";
    char line[64];
    for (size_t i = 0; i < track.size(); ++i) {
        if (track.defined(i)) {
            std::snprintf(line, sizeof(line), "%.3f,%.6f\n", track.times[i], track.bpm[i]);
        } else {
            std::snprintf(line, sizeof(line), "%.3f,nan\n", track.times[i]);
        }
        out << line;
    }
    if (!out) throw IoError("short write: " + path);
}

TempoTrack read_tempo_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open: " + path);
    std::string line;
    if (!std::getline(in, line) || line != "time_s,bpm") {
        throw FormatError("missing time_s,bpm header: " + path);
    }
    TempoTrack track;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const size_t comma = line.find(',');
        if (comma == std::string::npos) {
            throw FormatError(path + ":" + std::to_string(line_no) + ": expected time_s,bpm");
        }
        try {
            track.times.push_back(std::stod(line.substr(0, comma)));
            track.bpm.push_back(std::stod(line.substr(comma + 1)));
        } catch (const std::exception&) {
            throw FormatError(path + ":" + std::to_string(line_no) + ": bad number");
        }
        if (track.times.size() > 1 && !(track.times.back() > track.times[track.times.size() - 2])) {
            throw FormatError(path + ":" + std::to_string(line_no) + ": times not increasing");
        }
    }
    return track;
}

} // namespace laykari
