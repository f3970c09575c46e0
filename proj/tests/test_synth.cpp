// Copyright 2026 The Laykari Authors
//
// Licensed under the Apache License, Version 2.0

#include <cmath>
#include <vector>

#include <doctest.h>

#include "laykari/dataset.hpp"
#include "laykari/features.hpp"
#include "laykari/metric_tempo.hpp"
#include "laykari/synth.hpp"
#include "test_util.hpp"

using namespace laykari;
using namespace laykari::testing;

namespace {

// Counts amplitude bursts separated by at least min_gap_s of quiet onset.
// Works on the noise-free per-stream signals only.
int count_events(const std::vector<float>& x, int rate, double min_gap_s = 0.1) {
    const auto gap = static_cast<long long>(min_gap_s * rate);
    long long last = -gap;
    int count = 0;
    for (size_t i = 0; i < x.size(); ++i) {
        if (std::fabs(x[i]) > 0.02 && static_cast<long long>(i) - last >= gap) {
            ++count;
            last = static_cast<long long>(i);
        }
    }
    return count;
}

SynthSpec basic_spec(double bpm, double dur, int stm_v, int stm_p) {
    SynthSpec spec;
    spec.mt_bpm = {{0.0, bpm}};
    spec.schedule = {{dur, stm_v, stm_p}};
    spec.rng_seed = 7;
    return spec;
}

// Fraction of frames whose argmax-lag tempo lies within 4% of bpm.
double acf_hit_rate(const AudioBuffer& audio, double bpm) {
    const MelMatrix mel = log_mel(audio);
    TempoRange range{bpm * 0.8, bpm * 1.25};
    const CandidateFrames cands = acf_candidates(odf(mel), range);
    if (cands.times.empty()) return 0.0;
    int hits = 0;
    for (size_t t = 0; t < cands.times.size(); ++t) {
        int best = 0;
        for (int c = 1; c < cands.n_lags; ++c) {
            if (cands.score(t, c) > cands.score(t, best)) best = c;
        }
        if (cands.score(t, best) > 0.0 && std::fabs(cands.lag_to_bpm(best) / bpm - 1.0) <= 0.04) {
            ++hits;
        }
    }
    return static_cast<double>(hits) / cands.times.size();
}

} // namespace

TEST_CASE("constant tempo concert places events at the advertised rates") {
    const SynthConcert c = generate_concert(basic_spec(60.0, 30.0, 1, 2));

    CHECK(count_events(c.vocal.samples, c.vocal.rate) == 30);
    CHECK(count_events(c.pakhawaj.samples, c.pakhawaj.rate) == 60);
    CHECK(c.mixture.samples.size() == 30 * 16000);

    REQUIRE(c.annotation.sections.size() == 1);
    CHECK(c.annotation.sections[0].start_s == 0.0);
    CHECK(c.annotation.sections[0].end_s == 30.0);
    CHECK(*c.annotation.sections[0].stm_net == 2);

    // 60 BPM with 12 matras per cycle puts a sam every 12 s.
    REQUIRE(c.annotation.sam_times_s.size() == 3);
    CHECK(near_abs(c.annotation.sam_times_s[0], 0.0, 1e-9));
    CHECK(near_abs(c.annotation.sam_times_s[1], 12.0, 1e-9));
    CHECK(near_abs(c.annotation.sam_times_s[2], 24.0, 1e-9));
}

TEST_CASE("schedule boundaries become annotation boundaries") {
    SynthSpec spec;
    spec.mt_bpm = {{0.0, 60.0}};
    spec.schedule = {{10.0, 1, 4}, {10.0, 2, 8}};
    const SynthConcert c = generate_concert(spec);

    REQUIRE(c.annotation.sections.size() == 2);
    CHECK(c.annotation.sections[0].end_s == 10.0);
    CHECK(c.annotation.sections[1].start_s == 10.0);
    CHECK(*c.annotation.sections[0].stm_net == 4);
    CHECK(*c.annotation.sections[1].stm_net == 8);
    CHECK_NOTHROW(c.annotation.validate());
}

TEST_CASE("emitted sam times recover a drifting metric tempo within 4 percent") {
    SynthSpec spec;
    spec.mt_bpm = {{0.0, 60.0}, {60.0, 66.0}};
    spec.schedule = {{60.0, 1, 1}};
    const SynthConcert c = generate_concert(spec);
    REQUIRE(c.annotation.sam_times_s.size() >= 5);

    const TempoTrack track = mt_from_sams(c.annotation.sam_times_s, 12);
    REQUIRE(track.size() > 0);
    for (size_t i = 0; i < track.size(); ++i) {
        if (!track.defined(i)) continue;
        const double truth = mt_at(spec, track.times[i]);
        CHECK(std::fabs(track.bpm[i] / truth - 1.0) <= 0.04);
    }
}

TEST_CASE("onset autocorrelation recovers the surface tempo of clean streams") {
    const SynthConcert c = generate_concert(basic_spec(60.0, 40.0, 1, 2));

    CHECK(acf_hit_rate(c.vocal, 60.0) >= 0.95);
    CHECK(acf_hit_rate(c.pakhawaj, 120.0) >= 0.95);
    CHECK(acf_hit_rate(c.mixture, 120.0) >= 0.95); // net rate dominates in range

    // The full metric-tempo pipeline agrees on the stream whose rate is the
    // metric tempo itself.
    const TempoTrack track = estimate_metric_tempo(log_mel(c.vocal));
    int within = 0, defined = 0;
    for (size_t i = 0; i < track.size(); ++i) {
        if (!track.defined(i)) continue;
        ++defined;
        if (std::fabs(track.bpm[i] / 60.0 - 1.0) <= 0.04) ++within;
    }
    REQUIRE(defined > 0);
    CHECK(static_cast<double>(within) / defined >= 0.95);
}

TEST_CASE("beat clock and its inverse agree on drifting and stepped tempo") {
    SynthSpec spec;
    spec.mt_bpm = {{0.0, 60.0}, {20.0, 70.0}, {20.0, 50.0}, {40.0, 55.0}};
    spec.schedule = {{45.0, 1, 1}};

    CHECK(near_abs(mt_at(spec, 0.0), 60.0, 1e-12));
    CHECK(near_abs(mt_at(spec, 10.0), 65.0, 1e-12));
    CHECK(near_abs(mt_at(spec, 20.001), 50.0, 0.01));
    CHECK(near_abs(mt_at(spec, 44.0), 55.0, 1e-12));

    const double total_beats = beats_at(spec, 45.0);
    CHECK(total_beats > 0.0);
    for (double b = 0.0; b < total_beats; b += 0.7) {
        const double t = time_of_beat(spec, b);
        CHECK(near_abs(beats_at(spec, t), b, 1e-6));
    }
}

TEST_CASE("generation is deterministic for a fixed seed") {
    const SynthConcert a = generate_concert(basic_spec(55.0, 12.0, 2, 4));
    const SynthConcert b = generate_concert(basic_spec(55.0, 12.0, 2, 4));
    CHECK(a.mixture.samples == b.mixture.samples);
    CHECK(a.vocal.samples == b.vocal.samples);
    CHECK(a.annotation.sam_times_s == b.annotation.sam_times_s);

    SynthSpec other = basic_spec(55.0, 12.0, 2, 4);
    other.rng_seed = 8;
    CHECK(generate_concert(other).mixture.samples != a.mixture.samples);
}

TEST_CASE("synth spec validation rejects out-of-contract values") {
    CHECK_THROWS_AS(generate_concert(basic_spec(80.0, 10.0, 1, 1)), ConfigError);
    CHECK_THROWS_AS(generate_concert(basic_spec(30.0, 10.0, 1, 1)), ConfigError);
    CHECK_THROWS_AS(generate_concert(basic_spec(60.0, 4.0, 1, 1)), ConfigError);
    CHECK_THROWS_AS(generate_concert(basic_spec(60.0, 10.0, 16, 1)), ConfigError);
    CHECK_THROWS_AS(generate_concert(basic_spec(60.0, 10.0, 1, 3)), ConfigError);

    SynthSpec spec = basic_spec(60.0, 10.0, 1, 1);
    spec.schedule.clear();
    CHECK_THROWS_AS(generate_concert(spec), ConfigError);

    spec = basic_spec(60.0, 10.0, 1, 1);
    spec.matras_per_cycle = 0;
    CHECK_THROWS_AS(generate_concert(spec), ConfigError);

    spec = basic_spec(60.0, 10.0, 1, 1);
    spec.noise_floor = 1.0;
    CHECK_THROWS_AS(generate_concert(spec), ConfigError);

    spec = basic_spec(60.0, 10.0, 1, 1);
    spec.mt_bpm = {{0.0, 60.0}, {5.0, 50.0}, {2.0, 55.0}};
    CHECK_THROWS_AS(generate_concert(spec), ConfigError);
}

TEST_CASE("saved concert round-trips through the annotation loader") {
    TempDir tmp;
    const std::string dir = tmp.file("raag_x");
    const SynthConcert c = generate_concert(basic_spec(60.0, 15.0, 2, 8));
    save_concert(dir, c);

    const ConcertAnnotation ann = load_annotations(dir);
    CHECK(ann.concert_id == "raag_x");
    CHECK(ann.matras_per_cycle == 12);
    REQUIRE(ann.sections.size() == 1);
    CHECK(*ann.sections[0].stm_vocal == 2);
    CHECK(*ann.sections[0].stm_pakhawaj == 8);
    CHECK(*ann.sections[0].stm_net == 8);
    REQUIRE(ann.sam_times_s.size() == c.annotation.sam_times_s.size());
    for (size_t i = 0; i < ann.sam_times_s.size(); ++i) {
        CHECK(near_abs(ann.sam_times_s[i], c.annotation.sam_times_s[i], 1e-9));
    }

    const AudioBuffer mix = load_audio(dir + "/mixture.wav");
    CHECK(near_abs(mix.duration(), 15.0, 0.001));
}
