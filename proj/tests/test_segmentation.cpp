// Copyright 2026 The Laykari Authors
//
// Licensed under the Apache License, Version 2.0

#include <cmath>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <doctest.h>

#include "laykari/segmentation.hpp"
#include "laykari/synth.hpp"
#include "test_util.hpp"

using namespace laykari;
using namespace laykari::testing;

namespace {

StmTrack one_hot_track(const std::vector<int>& frame_values, std::vector<int> class_set) {
    StmTrack t;
    t.class_values = std::move(class_set);
    t.probs.assign(frame_values.size() * t.class_values.size(), 0.0f);
    for (size_t i = 0; i < frame_values.size(); ++i) {
        t.times.push_back(i * 0.5);
        int cls = -1;
        for (size_t c = 0; c < t.class_values.size(); ++c) {
            if (t.class_values[c] == frame_values[i]) cls = static_cast<int>(c);
        }
        REQUIRE(cls >= 0);
        t.probs[i * t.class_values.size() + cls] = 1.0f;
    }
    return t;
}

Section make_section(double start, double end, int voc, int pakh, int net) {
    Section s;
    s.start_s = start;
    s.end_s = end;
    s.stm_vocal = voc;
    s.stm_pakhawaj = pakh;
    s.stm_net = net;
    return s;
}

AudioBuffer noise_audio(double dur_s, uint64_t seed) {
    AudioBuffer buf;
    buf.samples.resize(static_cast<size_t>(dur_s * buf.rate));
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> u(-0.5f, 0.5f);
    for (auto& s : buf.samples) s = u(rng);
    return buf;
}

} // namespace

TEST_CASE("track argmax breaks ties toward the lower multiple") {
    StmTrack t;
    t.class_values = {1, 2, 4, 8};
    t.times = {0.0};
    t.probs = {0.4f, 0.4f, 0.15f, 0.05f};
    CHECK(t.argmax(0) == 0);
    CHECK(t.value(0) == 1);
}

TEST_CASE("framewise classification covers one minute with 120 frames") {
    Model model = build_model(variant_config("1.a", 4), 3);
    const AudioBuffer audio = noise_audio(60.0, 1);

    const StmTrack track = framewise_stm(model, audio);
    CHECK(track.times.size() == 120);
    CHECK(track.times.front() == 0.0);
    CHECK(near_abs(track.times.back(), 59.5, 1e-12));
    CHECK_NOTHROW(track.validate());

    // A frame away from the edges must match classifying its excerpt alone.
    const MelMatrix mel = log_mel(audio);
    const int start = static_cast<int>(std::lround(10.0 / mel.hop_s)) - 200;
    const auto single = forward(model, make_example(mel, start));
    const size_t row = 20; // t = 10.0 s
    for (int c = 0; c < track.n_classes(); ++c) {
        CHECK(track.prob(row, c) == single[c]);
    }

    CHECK_THROWS_AS(framewise_stm(model, noise_audio(7.0, 2)), ValidationError);
}

TEST_CASE("seg1 marks a boundary exactly where a track flips") {
    std::vector<int> voc(100, 2), pakh(100, 2);
    for (size_t i = 50; i < 100; ++i) pakh[i] = 8;
    const StmTrack tv = one_hot_track(voc, {1, 2, 4, 8});
    const StmTrack tp = one_hot_track(pakh, {1, 2, 4, 8, 16});
    const StmTrack tn = one_hot_track(std::vector<int>(100, 4), {1, 2, 4, 8, 16});

    const auto as_max = assemble_seg1(tv, tp, tn, NetMode::as_max);
    REQUIRE(as_max.size() == 2);
    CHECK(as_max[0].start_s == 0.0);
    CHECK(as_max[0].end_s == 25.0);
    CHECK(*as_max[0].stm_net == 2);
    CHECK(as_max[1].end_s == 50.0);
    CHECK(*as_max[1].stm_net == 8);

    const auto from_model = assemble_seg1(tv, tp, tn, NetMode::from_model);
    REQUIRE(from_model.size() == 2);
    CHECK(*from_model[0].stm_net == 4);
    CHECK(*from_model[1].stm_net == 4);
    CHECK(*from_model[1].stm_pakhawaj == 8);

    const auto single = assemble_seg1(tv, tv, tv, NetMode::as_max);
    CHECK(single.size() == 1);
    CHECK(single[0].end_s == 50.0);
}

TEST_CASE("seg1 rejects mismatched grids") {
    const StmTrack a = one_hot_track({1, 1, 1}, {1, 2, 4, 8});
    const StmTrack b = one_hot_track({1, 1}, {1, 2, 4, 8});
    CHECK_THROWS_AS(assemble_seg1(a, b, a, NetMode::as_max), ValidationError);
}

TEST_CASE("seg2 picks the highest mean-confidence consistent tuple") {
    StmTrack voc;
    voc.class_values = {1, 2, 4, 8};
    voc.times = {0.0};
    StmTrack pakh;
    pakh.class_values = {1, 2, 4, 8, 16};
    pakh.times = {0.0};
    StmTrack net = pakh;

    voc.probs = {0.1f, 0.6f, 0.2f, 0.1f};
    pakh.probs = {0.05f, 0.1f, 0.7f, 0.1f, 0.05f};
    net.probs = {0.02f, 0.05f, 0.8f, 0.08f, 0.05f};
    auto secs = assemble_seg2(voc, pakh, net);
    REQUIRE(secs.size() == 1);
    CHECK(*secs[0].stm_vocal == 2);
    CHECK(*secs[0].stm_pakhawaj == 4);
    CHECK(*secs[0].stm_net == 4);

    // A confident net model can pull the pakhawaj estimate up to keep the
    // tuple consistent.
    voc.probs = {0.0f, 0.6f, 0.0f, 0.0f};
    pakh.probs = {0.0f, 0.0f, 0.35f, 0.3f, 0.0f};
    net.probs = {0.0f, 0.0f, 0.2f, 0.9f, 0.0f};
    secs = assemble_seg2(voc, pakh, net);
    REQUIRE(secs.size() == 1);
    CHECK(*secs[0].stm_vocal == 2);
    CHECK(*secs[0].stm_pakhawaj == 8);
    CHECK(*secs[0].stm_net == 8);
}

TEST_CASE("seg2 equals seg1 on one-hot tracks that already agree") {
    std::mt19937_64 rng(17);
    const std::vector<int> voc_set{1, 2, 4, 8};
    const std::vector<int> pakh_set{1, 2, 4, 8, 16};
    std::vector<int> voc, pakh, net;
    for (int i = 0; i < 60; ++i) {
        voc.push_back(voc_set[rng() % voc_set.size()]);
        pakh.push_back(pakh_set[rng() % pakh_set.size()]);
        net.push_back(std::max(voc.back(), pakh.back()));
    }
    const StmTrack tv = one_hot_track(voc, voc_set);
    const StmTrack tp = one_hot_track(pakh, pakh_set);
    const StmTrack tn = one_hot_track(net, pakh_set);

    const auto a = assemble_seg2(tv, tp, tn);
    const auto b = assemble_seg1(tv, tp, tn, NetMode::as_max);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].start_s == b[i].start_s);
        CHECK(*a[i].stm_vocal == *b[i].stm_vocal);
        CHECK(*a[i].stm_pakhawaj == *b[i].stm_pakhawaj);
        CHECK(*a[i].stm_net == *b[i].stm_net);
    }
}

TEST_CASE("seg2 output always satisfies the max rule") {
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    StmTrack voc, pakh, net;
    voc.class_values = {1, 2, 4, 8};
    pakh.class_values = {1, 2, 4, 8, 16};
    net.class_values = {1, 2, 4, 8, 16};
    for (int i = 0; i < 200; ++i) {
        const double t = i * 0.5;
        voc.times.push_back(t);
        pakh.times.push_back(t);
        net.times.push_back(t);
        for (int c = 0; c < 4; ++c) voc.probs.push_back(u(rng));
        for (int c = 0; c < 5; ++c) pakh.probs.push_back(u(rng));
        for (int c = 0; c < 5; ++c) net.probs.push_back(u(rng));
    }
    for (const Section& s : assemble_seg2(voc, pakh, net)) {
        CHECK(*s.stm_net == std::max(*s.stm_vocal, *s.stm_pakhawaj));
    }
}

TEST_CASE("short sections merge into their neighbours") {
    const auto a = make_section(0, 10, 1, 1, 1);
    const auto b = make_section(10, 13, 2, 2, 2);
    const auto c = make_section(13, 23, 4, 4, 4);

    auto merged = smooth_sections({a, b, c});
    REQUIRE(merged.size() == 2);
    CHECK(merged[0].end_s == 13.0);
    CHECK(*merged[0].stm_net == 1);
    CHECK(merged[1].end_s == 23.0);
    CHECK(*merged[1].stm_net == 4);

    // Leading short sections adopt the successor's label instead.
    auto leading = smooth_sections({make_section(0, 3, 2, 2, 2), make_section(3, 13, 1, 1, 1)});
    REQUIRE(leading.size() == 1);
    CHECK(leading[0].start_s == 0.0);
    CHECK(leading[0].end_s == 13.0);
    CHECK(*leading[0].stm_net == 1);

    // With prefer_next, interior short sections look rightward.
    auto next = smooth_sections({a, b, c}, 5.0, true);
    REQUIRE(next.size() == 2);
    CHECK(next[0].end_s == 10.0);
    CHECK(next[1].start_s == 10.0);
    CHECK(*next[1].stm_net == 4);

    auto trailing = smooth_sections({a, make_section(10, 13, 2, 2, 2)});
    REQUIRE(trailing.size() == 1);
    CHECK(trailing[0].end_s == 13.0);
    CHECK(*trailing[0].stm_net == 1);
}

TEST_CASE("same-label neighbours coalesce before the length rule applies") {
    const auto merged = smooth_sections({
        make_section(0, 10, 1, 1, 1),
        make_section(10, 13, 2, 2, 2),
        make_section(13, 16, 2, 2, 2),
        make_section(16, 26, 4, 4, 4),
    });
    REQUIRE(merged.size() == 3);
    CHECK(merged[1].start_s == 10.0);
    CHECK(merged[1].end_s == 16.0);
    CHECK(*merged[1].stm_net == 2);
}

TEST_CASE("smoothing rejects gapped input and preserves coverage") {
    CHECK_THROWS_AS(smooth_sections({make_section(0, 10, 1, 1, 1),
                                     make_section(11, 20, 2, 2, 2)}),
                    ValidationError);

    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> dur(0.5, 9.0);
    const std::vector<int> vals{1, 2, 4, 8, 16};
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<Section> seq;
        double t = 0.0;
        const int n = 1 + static_cast<int>(rng() % 12);
        for (int i = 0; i < n; ++i) {
            const double d = dur(rng);
            const int v = vals[rng() % 4];
            const int p = vals[rng() % 5];
            seq.push_back(make_section(t, t + d, v, p, std::max(v, p)));
            t += d;
        }
        const auto out = smooth_sections(seq);
        REQUIRE(!out.empty());
        CHECK(out.front().start_s == seq.front().start_s);
        CHECK(near_abs(out.back().end_s, seq.back().end_s, 1e-9));
        for (size_t i = 0; i < out.size(); ++i) {
            if (i > 0) {
                CHECK(out[i].start_s == out[i - 1].end_s);
                CHECK(!(*out[i].stm_vocal == *out[i - 1].stm_vocal &&
                        *out[i].stm_pakhawaj == *out[i - 1].stm_pakhawaj &&
                        *out[i].stm_net == *out[i - 1].stm_net));
            }
            if (out.size() > 1) CHECK(out[i].duration() >= 5.0 - 1e-9);
        }
    }
}

TEST_CASE("surface tempo multiplies the metric tempo per frame") {
    TempoTrack mt;
    mt.times = {0.0, 0.5, 1.0};
    mt.bpm = {60.0, 55.0, std::nan("")};
    StmTrack stm = one_hot_track({4, 16, 2}, {1, 2, 4, 8, 16});

    const TempoTrack st = surface_tempo_bpm(mt, stm);
    CHECK(st.bpm[0] == 240.0);
    CHECK(st.bpm[1] == 880.0);
    CHECK(!st.defined(2));

    TempoTrack off = mt;
    off.times[1] = 0.6;
    CHECK_THROWS_AS(surface_tempo_bpm(off, stm), ValidationError);
    mt.times.pop_back();
    mt.bpm.pop_back();
    CHECK_THROWS_AS(surface_tempo_bpm(mt, stm), ValidationError);
}

TEST_CASE("section and track CSV files round-trip") {
    TempDir tmp;
    const std::vector<Section> secs{make_section(0, 12.25, 1, 2, 2),
                                    make_section(12.25, 30, 4, 16, 16)};
    write_sections_csv(tmp.file("est.csv"), secs);
    const auto back = read_sections_csv(tmp.file("est.csv"));
    REQUIRE(back.size() == 2);
    CHECK(near_abs(back[0].end_s, 12.25, 1e-6));
    CHECK(*back[1].stm_pakhawaj == 16);
    CHECK(!back[0].excluded);

    StmTrack t = one_hot_track({1, 2}, {1, 2, 4, 8});
    write_track_csv(tmp.file("track.csv"), t);
    std::ifstream f(tmp.file("track.csv"));
    std::string header;
    std::getline(f, header);
    CHECK(header == "time_s,p_1,p_2,p_4,p_8");
    int rows = 0;
    std::string line;
    while (std::getline(f, line)) ++rows;
    CHECK(rows == 2);

    CHECK_THROWS_AS(read_sections_csv(tmp.file("missing.csv")), IoError);
}

TEST_CASE("cross-validated analysis picks the fold model that never saw the section") {
    std::vector<Model> models;
    for (int f = 0; f < 2; ++f) {
        Model m = build_model(variant_config("1.a", 4), 50 + f);
        m.metadata["held_out_fold"] = std::to_string(f);
        m.metadata["train_sections"] = f == 0 ? "c#1" : "c#0";
        models.push_back(std::move(m));
    }

    ConcertAnnotation ann;
    ann.concert_id = "c";
    ann.sections.push_back(make_section(0, 10, 1, 1, 1));
    ann.sections.push_back(make_section(10, 20, 2, 2, 2));

    FoldAssignment folds;
    folds.fold_of_section = {{"c#0", 0}, {"c#1", 1}};

    const AudioBuffer audio = noise_audio(20.0, 9);
    const CvAnalysis cv = framewise_stm_cv(models, audio, ann, folds);
    CHECK(cv.track.times.size() == 40);
    CHECK_NOTHROW(cv.track.validate());
    for (size_t i = 0; i < cv.track.times.size(); ++i) {
        const int expect = cv.track.times[i] < 10.0 ? 0 : 1;
        CHECK(cv.model_of_frame[i] == expect);
    }

    // Tampered provenance trips the leak check.
    models[0].metadata["train_sections"] = "c#0,c#1";
    CHECK_THROWS_AS(framewise_stm_cv(models, audio, ann, folds), Error);
    models[0].metadata["train_sections"] = "c#1";

    FoldAssignment unknown;
    unknown.fold_of_section = {{"c#0", 5}, {"c#1", 1}};
    CHECK_THROWS_AS(framewise_stm_cv(models, audio, ann, unknown), ConfigError);

    std::vector<Model> none;
    CHECK_THROWS_AS(framewise_stm_cv(none, audio, ann, folds), ConfigError);
}
