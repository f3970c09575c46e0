// Copyright 2026 The Laykari Authors
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "laykari/audio_io.hpp"
#include "laykari/dataset.hpp"
#include "laykari/errors.hpp"

namespace laykari {

// Metric tempo breakpoint. A single point means a constant tempo; two points
// with distinct times give a linear drift; a repeated time makes a step.
struct MtPoint {
    double time_s = 0.0;
    double bpm = 60.0;
};

struct SynthSectionSpec {
    double duration_s = 0.0;
    int stm_vocal = 1;
    int stm_pakhawaj = 1;
};

// Recipe for a synthetic concert: click/pulse streams whose event rates are
// exact multiples of a known metric tempo, plus exact annotations. Serves as
// ground truth for the estimators, so only event density distinguishes the
// classes; both streams share the same timbre family across all labels.
struct SynthSpec {
    std::vector<MtPoint> mt_bpm{{0.0, 60.0}};
    std::vector<SynthSectionSpec> schedule;
    int matras_per_cycle = 12;
    double noise_floor = 0.005;
    uint64_t rng_seed = 0;

    void validate() const;
    double total_duration() const;
};

struct SynthConcert {
    AudioBuffer mixture;
    AudioBuffer vocal;
    AudioBuffer pakhawaj;
    ConcertAnnotation annotation;
};

// Metric tempo in BPM at time t (piecewise linear, held flat past the ends).
double mt_at(const SynthSpec& spec, double t);

// Cumulative beat count from 0 to t.
double beats_at(const SynthSpec& spec, double t);

// Inverse of beats_at; exact per-segment quadratic solve.
double time_of_beat(const SynthSpec& spec, double beats);

SynthConcert generate_concert(const SynthSpec& spec);

// Writes mixture.wav, vocal.wav, pakhawaj.wav, sections.csv and concert.json
// under dir. The annotation's concert id is set to the directory name.
void save_concert(const std::string& dir, const SynthConcert& concert);

} // namespace laykari
