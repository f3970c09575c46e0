// Copyright 2026 The Laykari Authors
//
// Licensed under the Apache License, Version 2.0

#include "laykari/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include <json.hpp>

namespace laykari {
namespace {

bool usable_label(const std::optional<int>& v) {
    return v && class_index(Stream::mixture, *v) >= 0;
}

std::optional<int> dim_label(const Section& s, LabelDim dim) {
    switch (dim) {
        case LabelDim::vocal: return s.stm_vocal;
        case LabelDim::pakhawaj: return s.stm_pakhawaj;
        case LabelDim::net: return s.stm_net;
        case LabelDim::joint: return std::nullopt;
    }
    return std::nullopt;
}

void check_contiguous(const std::vector<Section>& seq, const char* who) {
    if (seq.empty()) throw ValidationError(std::string(who) + " sections are empty");
    for (size_t i = 1; i < seq.size(); ++i) {
        if (std::fabs(seq[i].start_s - seq[i - 1].end_s) > 1e-6) {
            throw ValidationError(std::string(who) + " sections have a coverage gap at " +
                                  std::to_string(seq[i - 1].end_s) + " s");
        }
    }
}

const Section* section_at(const std::vector<Section>& seq, double t) {
    for (const Section& s : seq) {
        if (t >= s.start_s && t < s.end_s) return &s;
    }
    return nullptr;
}

std::string fmt(double v) {
    if (!std::isfinite(v)) return "-";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return buf;
}

} // namespace

const std::vector<double>& default_octave_factors() {
    static const std::vector<double> f{1.0 / 3.0, 0.5, 1.0, 2.0, 3.0};
    return f;
}

TempoAccuracy tempo_accuracy(const TempoTrack& est, const TempoTrack& gt, double tol,
                             const std::vector<double>& factors) {
    if (est.times.size() != gt.times.size()) {
        throw ValidationError("tempo tracks differ in length");
    }
    for (size_t i = 0; i < est.times.size(); ++i) {
        if (std::fabs(est.times[i] - gt.times[i]) > 1e-9) {
            throw ValidationError("tempo track grids differ at frame " + std::to_string(i));
        }
    }
    TempoAccuracy acc;
    int hit1 = 0, hit2 = 0;
    for (size_t i = 0; i < gt.times.size(); ++i) {
        if (!gt.defined(i)) continue;
        ++acc.frames;
        if (!est.defined(i)) continue;
        const double ratio = est.bpm[i] / gt.bpm[i];
        if (std::fabs(ratio - 1.0) <= tol + 1e-12) ++hit1;
        for (double f : factors) {
            if (std::fabs(ratio / f - 1.0) <= tol + 1e-12) {
                ++hit2;
                break;
            }
        }
    }
    if (acc.frames > 0) {
        acc.accuracy1 = static_cast<double>(hit1) / acc.frames;
        acc.accuracy2 = static_cast<double>(hit2) / acc.frames;
    }
    return acc;
}

BoundaryPrf boundary_prf(std::vector<double> est_bounds, std::vector<double> gt_bounds,
                         double tol) {
    std::sort(est_bounds.begin(), est_bounds.end());
    std::sort(gt_bounds.begin(), gt_bounds.end());

    struct Pair {
        double d, lo, hi;
        size_t e, g;
    };
    std::vector<Pair> pairs;
    for (size_t e = 0; e < est_bounds.size(); ++e) {
        for (size_t g = 0; g < gt_bounds.size(); ++g) {
            const double d = std::fabs(est_bounds[e] - gt_bounds[g]);
            if (d <= tol + 1e-12) {
                pairs.push_back({d, std::min(est_bounds[e], gt_bounds[g]),
                                 std::max(est_bounds[e], gt_bounds[g]), e, g});
            }
        }
    }
    std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
        if (a.d != b.d) return a.d < b.d;
        if (a.lo != b.lo) return a.lo < b.lo;
        return a.hi < b.hi;
    });

    std::vector<bool> e_used(est_bounds.size(), false), g_used(gt_bounds.size(), false);
    BoundaryPrf out;
    for (const Pair& p : pairs) {
        if (e_used[p.e] || g_used[p.g]) continue;
        e_used[p.e] = g_used[p.g] = true;
        ++out.hits;
    }
    out.precision = est_bounds.empty() ? 0.0 : static_cast<double>(out.hits) / est_bounds.size();
    out.recall = gt_bounds.empty() ? 0.0 : static_cast<double>(out.hits) / gt_bounds.size();
    out.f = out.precision + out.recall > 0.0
                ? 2.0 * out.precision * out.recall / (out.precision + out.recall)
                : 0.0;
    return out;
}

std::vector<double> interior_boundaries(const std::vector<Section>& sections) {
    std::vector<double> out;
    for (size_t i = 1; i < sections.size(); ++i) out.push_back(sections[i].start_s);
    return out;
}

double labelling_accuracy(const std::vector<Section>& est, const std::vector<Section>& gt,
                          LabelDim dim) {
    check_contiguous(est, "estimated");
    check_contiguous(gt, "reference");
    const double lo = std::max(est.front().start_s, gt.front().start_s);
    const double hi = std::min(est.back().end_s, gt.back().end_s);
    if (!(hi > lo)) throw ValidationError("estimated and reference spans do not overlap");

    std::vector<double> cuts{lo, hi};
    for (const auto& seq : {est, gt}) {
        for (const Section& s : seq) {
            if (s.start_s > lo && s.start_s < hi) cuts.push_back(s.start_s);
            if (s.end_s > lo && s.end_s < hi) cuts.push_back(s.end_s);
        }
    }
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

    double num = 0.0, denom = 0.0;
    for (size_t i = 0; i + 1 < cuts.size(); ++i) {
        const double len = cuts[i + 1] - cuts[i];
        const double mid = 0.5 * (cuts[i] + cuts[i + 1]);
        const Section* g = section_at(gt, mid);
        const Section* e = section_at(est, mid);
        if (!g || !e) continue;

        bool usable, match;
        if (dim == LabelDim::joint) {
            usable = !g->excluded && usable_label(g->stm_vocal) &&
                     usable_label(g->stm_pakhawaj) && usable_label(g->stm_net);
            match = e->stm_vocal == g->stm_vocal && e->stm_pakhawaj == g->stm_pakhawaj &&
                    e->stm_net == g->stm_net;
        } else {
            usable = !g->excluded && usable_label(dim_label(*g, dim));
            match = dim_label(*e, dim) == dim_label(*g, dim);
        }
        if (!usable) continue;
        denom += len;
        if (match) num += len;
    }
    if (denom <= 0.0) return std::numeric_limits<double>::quiet_NaN();
    return num / denom;
}

ConcertScores EvalReport::average() const {
    ConcertScores avg;
    avg.concert_id = "average";
    int n1 = 0, n2 = 0;
    double s1 = 0.0, s2 = 0.0;
    std::map<double, std::pair<BoundaryPrf, int>> bnd;
    std::map<std::string, std::pair<double, int>> lab;
    for (const ConcertScores& c : concerts) {
        if (std::isfinite(c.accuracy1)) {
            s1 += c.accuracy1;
            ++n1;
        }
        if (std::isfinite(c.accuracy2)) {
            s2 += c.accuracy2;
            ++n2;
        }
        for (const auto& [tol, prf] : c.boundaries) {
            auto& [sum, n] = bnd[tol];
            sum.precision += prf.precision;
            sum.recall += prf.recall;
            sum.f += prf.f;
            sum.hits += prf.hits;
            ++n;
        }
        for (const auto& [key, v] : c.labelling) {
            if (!std::isfinite(v)) continue;
            auto& [sum, n] = lab[key];
            sum += v;
            ++n;
        }
    }
    if (n1 > 0) avg.accuracy1 = s1 / n1;
    if (n2 > 0) avg.accuracy2 = s2 / n2;
    for (const auto& [tol, entry] : bnd) {
        BoundaryPrf p = entry.first;
        p.precision /= entry.second;
        p.recall /= entry.second;
        p.f /= entry.second;
        avg.boundaries[tol] = p;
    }
    for (const auto& [key, entry] : lab) {
        avg.labelling[key] = entry.first / entry.second;
    }
    return avg;
}

namespace {

nlohmann::json scores_json(const ConcertScores& c) {
    nlohmann::json j;
    j["concert_id"] = c.concert_id;
    if (std::isfinite(c.accuracy1)) j["accuracy1"] = c.accuracy1;
    if (std::isfinite(c.accuracy2)) j["accuracy2"] = c.accuracy2;
    for (const auto& [tol, prf] : c.boundaries) {
        char key[32];
        std::snprintf(key, sizeof key, "%g", tol);
        j["boundaries"][key] = {{"precision", prf.precision},
                                {"recall", prf.recall},
                                {"f", prf.f},
                                {"hits", prf.hits}};
    }
    for (const auto& [key, v] : c.labelling) {
        if (std::isfinite(v)) j["labelling"][key] = v;
    }
    return j;
}

} // namespace

std::string report_json(const EvalReport& report) {
    nlohmann::json j;
    j["concerts"] = nlohmann::json::array();
    for (const ConcertScores& c : report.concerts) j["concerts"].push_back(scores_json(c));
    j["average"] = scores_json(report.average());
    return j.dump(2) + "\n";
}

std::string report_table(const EvalReport& report) {
    std::vector<double> tols;
    std::vector<std::string> labs;
    for (const ConcertScores& c : report.concerts) {
        for (const auto& [tol, prf] : c.boundaries) {
            if (std::find(tols.begin(), tols.end(), tol) == tols.end()) tols.push_back(tol);
        }
        for (const auto& [key, v] : c.labelling) {
            if (std::find(labs.begin(), labs.end(), key) == labs.end()) labs.push_back(key);
        }
    }
    std::sort(tols.begin(), tols.end());
    std::sort(labs.begin(), labs.end());

    std::vector<std::string> head{"concert", "acc1", "acc2"};
    for (double tol : tols) {
        for (const char* metric : {"P@", "R@", "F@"}) {
            char h[32];
            std::snprintf(h, sizeof h, "%s%g", metric, tol);
            head.push_back(h);
        }
    }
    head.insert(head.end(), labs.begin(), labs.end());

    std::vector<std::vector<std::string>> rows;
    auto row_of = [&](const ConcertScores& c) {
        std::vector<std::string> row{c.concert_id, fmt(c.accuracy1), fmt(c.accuracy2)};
        for (double tol : tols) {
            const auto it = c.boundaries.find(tol);
            const double nan = std::numeric_limits<double>::quiet_NaN();
            row.push_back(fmt(it == c.boundaries.end() ? nan : it->second.precision));
            row.push_back(fmt(it == c.boundaries.end() ? nan : it->second.recall));
            row.push_back(fmt(it == c.boundaries.end() ? nan : it->second.f));
        }
        for (const auto& key : labs) {
            const auto it = c.labelling.find(key);
            row.push_back(it == c.labelling.end() ? "-" : fmt(it->second));
        }
        return row;
    };
    for (const ConcertScores& c : report.concerts) rows.push_back(row_of(c));
    rows.push_back(row_of(report.average()));

    std::vector<size_t> widths(head.size());
    for (size_t i = 0; i < head.size(); ++i) widths[i] = head[i].size();
    for (const auto& row : rows) {
        for (size_t i = 0; i < row.size(); ++i) widths[i] = std::max(widths[i], row[i].size());
    }

    std::ostringstream os;
    auto emit = [&](const std::vector<std::string>& row) {
        for (size_t i = 0; i < row.size(); ++i) {
            if (i) os << "  ";
            os << std::string(widths[i] - row[i].size(), ' ') << row[i];
        }
        os << "\n";
    };
    emit(head);
    for (const auto& row : rows) emit(row);
    return os.str();
}

} // namespace laykari
