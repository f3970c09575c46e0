// Copyright 2026 The Laykari Authors
//
// Licensed under the Apache License, Version 2.0

#include <algorithm>
#include <fstream>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <doctest.h>

#include "laykari/dataset.hpp"
#include "laykari/metric_tempo.hpp"
#include "laykari/synth.hpp"
#include "test_util.hpp"

using namespace laykari;
using namespace laykari::testing;

namespace {

void write_file(const std::string& path, const std::string& text) {
    std::ofstream f(path);
    f << text;
}

template <class E, class Fn>
std::string message_of(Fn&& fn) {
    try {
        fn();
    } catch (const E& e) {
        return e.what();
    }
    FAIL("expected exception was not thrown");
    return {};
}

// One click per second at the given rate multiple, for tempo oracles.
AudioBuffer click_train(double events_per_s, double dur_s) {
    AudioBuffer buf;
    buf.samples.assign(static_cast<size_t>(dur_s * buf.rate), 0.0f);
    const double step = buf.rate / events_per_s;
    for (double pos = 0.0; pos < buf.samples.size(); pos += step) {
        const auto start = static_cast<size_t>(pos);
        for (size_t i = start; i < std::min(start + 40, buf.samples.size()); ++i) {
            buf.samples[i] = 0.8f * (1.0f - static_cast<float>(i - start) / 40.0f);
        }
    }
    return buf;
}

// Median ACF-argmax tempo over all analysis frames.
double detected_bpm(const AudioBuffer& audio, double lo, double hi) {
    const CandidateFrames cands = acf_candidates(odf(log_mel(audio)), TempoRange{lo, hi});
    std::vector<double> bpm;
    for (size_t t = 0; t < cands.times.size(); ++t) {
        int best = 0;
        for (int c = 1; c < cands.n_lags; ++c) {
            if (cands.score(t, c) > cands.score(t, best)) best = c;
        }
        if (cands.score(t, best) > 0.0) bpm.push_back(cands.lag_to_bpm(best));
    }
    REQUIRE(!bpm.empty());
    std::sort(bpm.begin(), bpm.end());
    return bpm[bpm.size() / 2];
}

ConcertAnnotation one_section_ann(double start, double end, int net) {
    ConcertAnnotation ann;
    ann.concert_id = "c";
    Section s;
    s.start_s = start;
    s.end_s = end;
    s.stm_net = net;
    ann.sections.push_back(s);
    return ann;
}

void add_fold_section(std::vector<LabeledExample>& out, const std::string& id, int label,
                      int count) {
    for (int i = 0; i < count; ++i) {
        LabeledExample ex;
        ex.label = label;
        ex.section_id = id;
        ex.concert_id = "c";
        out.push_back(ex);
    }
}

std::vector<int> fold_example_counts(const std::vector<LabeledExample>& exs,
                                     const FoldAssignment& fa, int k) {
    std::vector<int> counts(k, 0);
    for (const auto& ex : exs) ++counts[fa.fold_of_section.at(ex.section_id)];
    return counts;
}

} // namespace

TEST_CASE("stream class sets follow the instrument conventions") {
    CHECK(class_values(Stream::mixture) == std::vector<int>{1, 2, 4, 8, 16});
    CHECK(class_values(Stream::vocal) == std::vector<int>{1, 2, 4, 8});
    CHECK(class_values(Stream::pakhawaj) == std::vector<int>{1, 2, 4, 8, 16});
    CHECK(class_index(Stream::vocal, 16) == -1);
    CHECK(class_index(Stream::mixture, 16) == 4);
    CHECK(class_index(Stream::pakhawaj, 1) == 0);
    CHECK(class_index(Stream::mixture, 3) == -1);
    CHECK(parse_stream("vocal") == Stream::vocal);
    CHECK(std::string(stream_name(Stream::pakhawaj)) == "pakhawaj");
    CHECK_THROWS_AS(parse_stream("drums"), ConfigError);
}

TEST_CASE("annotation loader reads labels, pauses and the excluded flag") {
    TempDir tmp;
    write_file(tmp.file("sections.csv"),
               "start_s,end_s,stm_vocal,stm_pakhawaj,stm_net\n"
               "0.0,20.0,1,2,2\n"
               "20.0,30.0,na,na,na\n"
               "30.0,42.5,6,2,6\n");
    write_file(tmp.file("concert.json"),
               "{\"sam_times_s\": [0.0, 8.0, 16.0], \"matras_per_cycle\": 10}");

    const ConcertAnnotation ann = load_annotations(tmp.path);
    REQUIRE(ann.sections.size() == 3);
    CHECK(ann.matras_per_cycle == 10);
    CHECK(ann.sam_times_s.size() == 3);

    CHECK(*ann.sections[0].stm_vocal == 1);
    CHECK(*ann.sections[0].stm_net == 2);
    CHECK(!ann.sections[0].excluded);

    CHECK(!ann.sections[1].stm_net.has_value());
    CHECK(!ann.sections[1].excluded);

    CHECK(*ann.sections[2].stm_vocal == 6);
    CHECK(ann.sections[2].excluded);
}

TEST_CASE("annotation loader names the offending line") {
    TempDir tmp;
    write_file(tmp.file("concert.json"), "{\"sam_times_s\": [0.0], \"matras_per_cycle\": 12}");

    write_file(tmp.file("sections.csv"),
               "start_s,end_s,stm_vocal,stm_pakhawaj,stm_net\n"
               "0.0,10.0,1,1,1\n"
               "10.0,20.0,fast,1,1\n");
    const std::string unknown = message_of<FormatError>([&] { load_annotations(tmp.path); });
    CHECK(unknown.find(":3:") != std::string::npos);
    CHECK(unknown.find("fast") != std::string::npos);

    write_file(tmp.file("sections.csv"),
               "start_s,end_s,stm_vocal,stm_pakhawaj,stm_net\n"
               "0.0,10.0,1,1,1\n"
               "8.0,20.0,2,2,2\n");
    const std::string overlap = message_of<ValidationError>([&] { load_annotations(tmp.path); });
    CHECK(overlap.find(":3:") != std::string::npos);
    CHECK(overlap.find("line 2") != std::string::npos);

    write_file(tmp.file("sections.csv"), "time,end\n");
    CHECK_THROWS_AS(load_annotations(tmp.path), FormatError);

    write_file(tmp.file("sections.csv"),
               "start_s,end_s,stm_vocal,stm_pakhawaj,stm_net\n"
               "0.0,10.0,1,2,4\n");
    const std::string badnet = message_of<ValidationError>([&] { load_annotations(tmp.path); });
    CHECK(badnet.find("max") != std::string::npos);

    write_file(tmp.file("sections.csv"),
               "start_s,end_s,stm_vocal,stm_pakhawaj,stm_net\n"
               "0.0,10.0,1,1,1\n");
    write_file(tmp.file("concert.json"), "{\"sam_times_s\": [0.0, 5.0, 5.0], \"matras_per_cycle\": 12}");
    CHECK_THROWS_AS(load_annotations(tmp.path), ValidationError);
}

TEST_CASE("annotation loader requires the sidecar json") {
    TempDir tmp;
    write_file(tmp.file("sections.csv"),
               "start_s,end_s,stm_vocal,stm_pakhawaj,stm_net\n"
               "0.0,10.0,1,1,1\n");
    CHECK_THROWS_AS(load_annotations(tmp.path), IoError);

    write_file(tmp.file("concert.json"), "{\"sam_times_s\": [0.0]");
    CHECK_THROWS_AS(load_annotations(tmp.path), FormatError);
}

TEST_CASE("annotations round-trip through save and load") {
    TempDir tmp;
    const std::string dir = tmp.file("alap");
    ConcertAnnotation ann;
    ann.concert_id = "ignored";
    ann.sam_times_s = {0.25, 9.875, 19.5};
    ann.matras_per_cycle = 14;
    Section a;
    a.start_s = 0.0;
    a.end_s = 12.5;
    a.stm_vocal = 2;
    a.stm_pakhawaj = 16;
    a.stm_net = 16;
    Section b;
    b.start_s = 12.5;
    b.end_s = 20.0;
    ann.sections = {a, b};

    save_annotations(dir, ann);
    const ConcertAnnotation back = load_annotations(dir);
    CHECK(back.concert_id == "alap");
    CHECK(back.matras_per_cycle == 14);
    REQUIRE(back.sections.size() == 2);
    CHECK(near_abs(back.sections[0].end_s, 12.5, 1e-6));
    CHECK(*back.sections[0].stm_pakhawaj == 16);
    CHECK(!back.sections[1].stm_net.has_value());
    REQUIRE(back.sam_times_s.size() == 3);
    CHECK(near_abs(back.sam_times_s[1], 9.875, 1e-9));
}

TEST_CASE("time scaling changes tempo and duration by the chosen factor") {
    const AudioBuffer clicks = click_train(1.0, 30.0);

    const AudioBuffer same = time_scale(clicks, 1.0);
    CHECK(same.samples == clicks.samples);

    const AudioBuffer faster = time_scale(clicks, 1.2);
    CHECK(near_abs(faster.duration(), 30.0 / 1.2, 0.02));
    CHECK(near_abs(detected_bpm(faster, 50.0, 90.0), 72.0, 72.0 * 0.04));

    const AudioBuffer slower = time_scale(clicks, 0.84);
    CHECK(near_abs(slower.duration(), 30.0 / 0.84, 0.02));
    CHECK(near_abs(detected_bpm(slower, 40.0, 70.0), 50.4, 50.4 * 0.04));

    CHECK_THROWS_AS(time_scale(clicks, 0.5), ValidationError);
    CHECK_THROWS_AS(time_scale(clicks, 1.21), ValidationError);
    CHECK_THROWS_AS(time_scale(clicks, 0.86), ValidationError);
}

TEST_CASE("a 20 s section yields two non-overlapping examples") {
    const ConcertAnnotation ann = one_section_ann(0.0, 20.0, 4);
    const AudioBuffer audio = click_train(4.0, 20.0);

    const auto exs = extract_examples(ann, audio, Stream::mixture);
    REQUIRE(exs.size() == 2);
    for (const auto& ex : exs) {
        CHECK(ex.label == class_index(Stream::mixture, 4));
        CHECK(ex.scale_factor == 1.0);
        CHECK(ex.section_id == "c#0");
        CHECK(ex.example.values.size() == MelExample::kMels * MelExample::kFrames);
    }
}

TEST_CASE("a 7 s section only yields an example after stretching") {
    const ConcertAnnotation ann = one_section_ann(0.0, 7.0, 1);
    const AudioBuffer audio = click_train(1.0, 7.0);

    const auto exs = extract_examples(ann, audio, Stream::mixture);
    REQUIRE(exs.size() == 1);
    CHECK(exs[0].scale_factor == 0.84);
}

TEST_CASE("extraction slices exactly the annotated span") {
    ConcertAnnotation ann = one_section_ann(2.0, 12.0, 2);
    AudioBuffer audio = click_train(2.0, 14.0);

    const auto exs = extract_examples(ann, audio, Stream::mixture);
    REQUIRE(exs.size() == 1);

    AudioBuffer slice;
    slice.samples.assign(audio.samples.begin() + 2 * slice.rate,
                         audio.samples.begin() + 12 * slice.rate);
    const MelExample manual = make_example(log_mel(slice), 0);
    CHECK(exs[0].example.values == manual.values);
}

TEST_CASE("extraction validates its inputs") {
    const ConcertAnnotation ann = one_section_ann(0.0, 20.0, 4);
    const AudioBuffer audio = click_train(4.0, 20.0);

    CHECK_THROWS_AS(extract_examples(ann, click_train(4.0, 10.0), Stream::mixture),
                    ValidationError);

    ExtractConfig cfg;
    cfg.target_per_class = -1;
    CHECK_THROWS_AS(extract_examples(ann, audio, Stream::mixture, cfg), ConfigError);

    cfg = {};
    cfg.min_hop_s = 0.0;
    CHECK_THROWS_AS(extract_examples(ann, audio, Stream::mixture, cfg), ConfigError);
}

TEST_CASE("excluded and out-of-set labels produce no examples for that stream") {
    ConcertAnnotation ann;
    ann.concert_id = "c";
    Section s;
    s.start_s = 0.0;
    s.end_s = 20.0;
    s.stm_vocal = 16; // legal for net and pakhawaj, outside the vocal set
    s.stm_pakhawaj = 16;
    s.stm_net = 16;
    ann.sections.push_back(s);
    const AudioBuffer audio = click_train(8.0, 20.0);

    CHECK(extract_examples(ann, audio, Stream::vocal).empty());
    const auto mix = extract_examples(ann, audio, Stream::mixture);
    REQUIRE(!mix.empty());
    CHECK(mix[0].label == class_index(Stream::mixture, 16));

    ann.sections[0].excluded = true;
    CHECK(extract_examples(ann, audio, Stream::mixture).empty());
}

TEST_CASE("per-class targets balance the synthetic corpus within ten percent") {
    SynthSpec spec;
    spec.mt_bpm = {{0.0, 60.0}};
    spec.schedule = {{40.0, 1, 1}, {30.0, 2, 2}, {20.0, 4, 4}, {15.0, 8, 8}};
    spec.rng_seed = 3;
    const SynthConcert c = generate_concert(spec);

    const auto exs = extract_examples(c.annotation, c.mixture, Stream::mixture);
    REQUIRE(!exs.empty());
    std::map<int, int> per_class;
    for (const auto& ex : exs) {
        CHECK(ex.label >= 0);
        CHECK(ex.label < static_cast<int>(class_values(Stream::mixture).size()));
        ++per_class[ex.label];
    }
    REQUIRE(per_class.size() == 4);
    int lo = 1 << 30, hi = 0;
    for (const auto& [label, n] : per_class) {
        lo = std::min(lo, n);
        hi = std::max(hi, n);
    }
    CHECK(hi - lo <= std::max(1, hi / 10));

    for (const auto& ex : extract_examples(c.annotation, c.vocal, Stream::vocal)) {
        CHECK(ex.label < static_cast<int>(class_values(Stream::vocal).size()));
    }
}

TEST_CASE("greedy fold assignment matches the hand-traced counts") {
    std::vector<LabeledExample> exs;
    const std::vector<int> sizes{10, 9, 1, 1, 1, 1};
    for (size_t i = 0; i < sizes.size(); ++i) {
        add_fold_section(exs, "c#" + std::to_string(i), 0, sizes[i]);
    }
    const FoldAssignment fa = make_folds(exs, 3, 42);
    std::vector<int> counts = fold_example_counts(exs, fa, 3);
    std::sort(counts.begin(), counts.end());
    CHECK(counts == std::vector<int>{2, 10, 11});
}

TEST_CASE("equal sections spread evenly over the folds") {
    std::vector<LabeledExample> exs;
    for (int i = 0; i < 6; ++i) add_fold_section(exs, "s" + std::to_string(i), 1, 4);
    const FoldAssignment fa = make_folds(exs, 3, 0);
    const std::vector<int> counts = fold_example_counts(exs, fa, 3);
    CHECK(counts == std::vector<int>{8, 8, 8});
    CHECK(fa.warnings.empty());
}

TEST_CASE("fold assignment is deterministic and balanced per class") {
    std::mt19937_64 rng(5);
    std::vector<LabeledExample> exs;
    std::map<std::string, int> section_class;
    for (int cls = 0; cls < 4; ++cls) {
        const int n_sections = 3 + static_cast<int>(rng() % 5);
        for (int s = 0; s < n_sections; ++s) {
            const std::string id = "cls" + std::to_string(cls) + "#" + std::to_string(s);
            add_fold_section(exs, id, cls, 1 + static_cast<int>(rng() % 9));
            section_class[id] = cls;
        }
    }

    const FoldAssignment fa = make_folds(exs, 3, 9);
    const FoldAssignment fb = make_folds(exs, 3, 9);
    CHECK(fa.fold_of_section == fb.fold_of_section);

    std::map<int, std::vector<int>> sections_per_fold;
    for (const auto& [id, fold] : fa.fold_of_section) {
        auto& v = sections_per_fold[section_class.at(id)];
        v.resize(3, 0);
        ++v[fold];
    }
    for (const auto& [cls, v] : sections_per_fold) {
        const auto [mn, mx] = std::minmax_element(v.begin(), v.end());
        CHECK(*mx - *mn <= 1);
    }
}

TEST_CASE("fold assignment flags thin classes and rejects bad input") {
    std::vector<LabeledExample> exs;
    add_fold_section(exs, "a", 0, 3);
    add_fold_section(exs, "b", 0, 3);
    const FoldAssignment fa = make_folds(exs, 3, 0);
    REQUIRE(fa.warnings.size() == 1);
    CHECK(fa.fold_of_section.size() == 2);

    CHECK_THROWS_AS(make_folds(exs, 1, 0), ConfigError);
    CHECK_THROWS_AS(make_folds({}, 3, 0), ValidationError);

    std::vector<LabeledExample> bad;
    add_fold_section(bad, "a", 0, 2);
    add_fold_section(bad, "a", 1, 2);
    CHECK_THROWS_AS(make_folds(bad, 3, 0), ValidationError);
}
