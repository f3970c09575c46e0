// Copyright 2026 The Laykari Authors
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "laykari/audio_io.hpp"
#include "laykari/errors.hpp"
#include "laykari/features.hpp"

namespace laykari {

// Which audio stream an example or model refers to. The vocal stream's class
// set stops at 8; the pakhawaj regularly reaches 16, and the mixture inherits
// the union through the net label.
enum class Stream { mixture, vocal, pakhawaj };

const char* stream_name(Stream s);
Stream parse_stream(const std::string& name);

// Surface tempo multiple values a classifier head distinguishes for a stream.
const std::vector<int>& class_values(Stream s);

// Index of value within the stream's class set, or -1.
int class_index(Stream s, int stm_value);

// One annotated span of a concert. Instrument labels are absent for pauses
// and for spans where the instrument is silent.
struct Section {
    double start_s = 0.0;
    double end_s = 0.0;
    std::optional<int> stm_vocal;
    std::optional<int> stm_pakhawaj;
    std::optional<int> stm_net;
    // Label present but outside the usable class sets; kept for bookkeeping,
    // skipped by example extraction and evaluation.
    bool excluded = false;

    double duration() const { return end_s - start_s; }
    std::optional<int> label(Stream s) const;
};

struct ConcertAnnotation {
    std::string concert_id;
    std::vector<double> sam_times_s;
    int matras_per_cycle = 0;
    std::vector<Section> sections;

    void validate() const;
};

struct LabeledExample {
    MelExample example;
    int label = -1; // index into class_values(stream)
    std::string section_id;
    std::string concert_id;
    Stream stream = Stream::mixture;
    double scale_factor = 1.0;
};

struct FoldAssignment {
    std::map<std::string, int> fold_of_section;
    std::vector<std::string> warnings;
};

// Reads `<dir>/sections.csv` plus the sidecar `<dir>/concert.json`
// (sam_times_s, matras_per_cycle). The concert id is the directory name.
// Sections with labels outside the class sets are kept but flagged excluded.
ConcertAnnotation load_annotations(const std::string& dir);

// Writes sections.csv and concert.json under dir (created if missing).
void save_annotations(const std::string& dir, const ConcertAnnotation& ann);

// The augmentation factor grid: 0.80 to 1.20 in steps of 0.04.
const std::vector<double>& time_scale_grid();

// Resamples so periodic content speeds up by `factor` and the duration
// shrinks to 1/factor. Only grid factors are accepted; 1.0 is the identity.
AudioBuffer time_scale(const AudioBuffer& audio, double factor);

struct ExtractConfig {
    // Desired examples per class; 0 means the median per-class base count.
    int target_per_class = 0;
    double min_hop_s = 0.5;
    double max_hop_s = 8.0;
    FeatConfig feat;
};

// Cuts labelled 8 s examples from every usable section of one stream. The
// hop is per class (rarer classes sampled denser), and classes short of the
// target are topped up by re-extracting at time-scale factors closest to 1.
std::vector<LabeledExample> extract_examples(const ConcertAnnotation& ann,
                                             const AudioBuffer& audio, Stream stream,
                                             const ExtractConfig& cfg = {});

// Groups examples by section and greedily assigns each section (largest
// first) to the fold holding the fewest sections of its class, so every fold
// sees a similar class mix. A class with fewer than k sections is assigned
// best-effort and reported in warnings.
FoldAssignment make_folds(const std::vector<LabeledExample>& examples, int k = 3,
                          uint64_t rng_seed = 0);

} // namespace laykari
