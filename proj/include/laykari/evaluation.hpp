// Copyright 2026 The Laykari Authors
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <limits>
#include <map>
#include <string>
#include <vector>

#include "laykari/dataset.hpp"
#include "laykari/errors.hpp"
#include "laykari/metric_tempo.hpp"

namespace laykari {

struct TempoAccuracy {
    double accuracy1 = 0.0;
    double accuracy2 = 0.0;
    int frames = 0; // frames with defined ground truth
};

// Standard metrical-equivalence factors accepted by accuracy2.
const std::vector<double>& default_octave_factors();

// Frame-wise tempo accuracy on aligned 0.5 s grids. A frame counts for
// accuracy1 when est is within tol of gt, and for accuracy2 when it is
// within tol of gt times any of the factors. Frames with undefined ground
// truth are skipped; an undefined estimate on a defined frame is a miss.
TempoAccuracy tempo_accuracy(const TempoTrack& est, const TempoTrack& gt, double tol = 0.04,
                             const std::vector<double>& factors = default_octave_factors());

struct BoundaryPrf {
    double precision = 0.0;
    double recall = 0.0;
    double f = 0.0;
    int hits = 0;
};

// One-to-one matching built closest-pair-first: repeatedly match the
// globally nearest unmatched (estimate, reference) pair within tol. This
// makes the score symmetric (P and R swap with the arguments) and
// monotone in tol.
BoundaryPrf boundary_prf(std::vector<double> est_bounds, std::vector<double> gt_bounds,
                         double tol);

// Boundary times of a section sequence: every interior section edge.
std::vector<double> interior_boundaries(const std::vector<Section>& sections);

enum class LabelDim { vocal, pakhawaj, net, joint };

// Duration fraction of the overlapped span whose estimated label matches the
// reference. Spans where the reference label is missing, out of the class
// sets, or flagged excluded do not count toward either side of the ratio.
double labelling_accuracy(const std::vector<Section>& est, const std::vector<Section>& gt,
                          LabelDim dim);

struct ConcertScores {
    std::string concert_id;
    // NaN marks metrics that were not evaluated for this concert.
    double accuracy1 = std::numeric_limits<double>::quiet_NaN();
    double accuracy2 = std::numeric_limits<double>::quiet_NaN();
    std::map<double, BoundaryPrf> boundaries; // keyed by tolerance in seconds
    std::map<std::string, double> labelling;  // vocal / pakhawaj / net / joint
};

struct EvalReport {
    std::vector<ConcertScores> concerts;
    ConcertScores average() const;
};

std::string report_json(const EvalReport& report);
std::string report_table(const EvalReport& report);

} // namespace laykari
