// Copyright 2026 The Laykari Authors
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <string>
#include <vector>

#include "laykari/dataset.hpp"
#include "laykari/errors.hpp"
#include "laykari/metric_tempo.hpp"
#include "laykari/stm_model.hpp"

namespace laykari {

// Per-frame class probabilities on the 0.5 s analysis grid.
struct StmTrack {
    std::vector<int> class_values;
    double hop_s = 0.5;
    std::vector<double> times;
    std::vector<float> probs; // row-major [times.size()][class_values.size()]

    int n_classes() const { return static_cast<int>(class_values.size()); }
    float prob(size_t frame, int cls) const {
        return probs[frame * class_values.size() + cls];
    }
    // Ties break toward the lower surface tempo multiple.
    int argmax(size_t frame) const {
        int best = 0;
        for (int c = 1; c < n_classes(); ++c) {
            if (prob(frame, c) > prob(frame, best)) best = c;
        }
        return best;
    }
    int value(size_t frame) const { return class_values[argmax(frame)]; }
    void validate() const;
};

enum class NetMode { from_model, as_max };

// Classifies 8 s excerpts centred every 0.5 s; the first and last 4 s
// replicate the edge excerpts so the grid covers the whole signal.
StmTrack framewise_stm(Model& model, const AudioBuffer& audio);

// As framewise_stm, but every excerpt is classified by the fold model whose
// training set excluded the ground-truth section the excerpt falls in.
// Model metadata must carry held_out_fold and train_sections; a model whose
// train_sections contains the excerpt's section is a hard error.
struct CvAnalysis {
    StmTrack track;
    std::vector<int> model_of_frame;
};
CvAnalysis framewise_stm_cv(std::vector<Model>& fold_models, const AudioBuffer& audio,
                            const ConcertAnnotation& ann, const FoldAssignment& folds);

// Boundary wherever the per-frame label tuple changes. Sections carry the
// tuple as (stm_vocal, stm_pakhawaj, stm_net); the net label comes from the
// net model's own track or from max(vocal, pakhawaj).
std::vector<Section> assemble_seg1(const StmTrack& voc, const StmTrack& pakh,
                                   const StmTrack& net, NetMode net_mode);

// Joint decoding: per frame, the (vocal, pakhawaj, net = max) tuple with the
// highest mean confidence across the three tracks.
std::vector<Section> assemble_seg2(const StmTrack& voc, const StmTrack& pakh,
                                   const StmTrack& net);

// Merges every section shorter than min_dur_s into its predecessor (or, for
// a leading section or when prefer_next is set, into its successor), then
// coalesces equal neighbours, repeating until stable.
std::vector<Section> smooth_sections(const std::vector<Section>& seq, double min_dur_s = 5.0,
                                     bool prefer_next = false);

// bpm_t = metric tempo_t times the frame's s.t.m. value. Undefined metric
// tempo frames stay undefined.
TempoTrack surface_tempo_bpm(const TempoTrack& mt, const StmTrack& stm);

void write_sections_csv(const std::string& path, const std::vector<Section>& sections);
std::vector<Section> read_sections_csv(const std::string& path);

// Header time_s,p_<v> for each class value v.
void write_track_csv(const std::string& path, const StmTrack& track);

} // namespace laykari
