// Copyright 2026 The Laykari Authors
//
// Licensed under the Apache License, Version 2.0

#include "laykari/segmentation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace laykari {
namespace {

constexpr int kEvalBatch = 32;

void check_same_grid(const StmTrack& a, const StmTrack& b, const char* what) {
    if (a.times.size() != b.times.size() || a.hop_s != b.hop_s) {
        throw ValidationError(std::string(what) + ": track grids differ in size or hop");
    }
    for (size_t i = 0; i < a.times.size(); ++i) {
        if (std::fabs(a.times[i] - b.times[i]) > 1e-9) {
            throw ValidationError(std::string(what) + ": track grids differ at frame " +
                                  std::to_string(i));
        }
    }
}

struct LabelTuple {
    int voc = 0, pakh = 0, net = 0;
    bool operator==(const LabelTuple&) const = default;
};

std::vector<Section> sections_from_tuples(const std::vector<LabelTuple>& tuples,
                                          const std::vector<double>& times, double hop_s) {
    std::vector<Section> out;
    for (size_t i = 0; i < tuples.size(); ++i) {
        if (i == 0 || !(tuples[i] == tuples[i - 1])) {
            if (!out.empty()) out.back().end_s = times[i];
            Section s;
            s.start_s = times[i];
            s.stm_vocal = tuples[i].voc;
            s.stm_pakhawaj = tuples[i].pakh;
            s.stm_net = tuples[i].net;
            out.push_back(s);
        }
    }
    if (!out.empty()) out.back().end_s = times.back() + hop_s;
    return out;
}

bool same_labels(const Section& a, const Section& b) {
    return a.stm_vocal == b.stm_vocal && a.stm_pakhawaj == b.stm_pakhawaj &&
           a.stm_net == b.stm_net;
}

void coalesce(std::vector<Section>& seq) {
    size_t w = 0;
    for (size_t i = 1; i < seq.size(); ++i) {
        if (same_labels(seq[w], seq[i])) {
            seq[w].end_s = seq[i].end_s;
        } else {
            seq[++w] = seq[i];
        }
    }
    if (!seq.empty()) seq.resize(w + 1);
}

// Excerpt start frames and track times for one signal.
struct ExcerptGrid {
    std::vector<double> times;
    std::vector<int> start_frames;
};

ExcerptGrid excerpt_grid(const MelMatrix& mel, double duration_s) {
    ExcerptGrid g;
    const int n = static_cast<int>(std::floor(duration_s / 0.5 + 1e-9));
    const int max_start = mel.n_frames - MelExample::kFrames;
    for (int i = 0; i < n; ++i) {
        const double t = i * 0.5;
        const int centre = static_cast<int>(std::lround(t / mel.hop_s));
        g.times.push_back(t);
        g.start_frames.push_back(std::clamp(centre - MelExample::kFrames / 2, 0, max_start));
    }
    return g;
}

void classify_frames(Model& model, const MelMatrix& mel, const std::vector<int>& start_frames,
                     const std::vector<size_t>& rows, StmTrack& track) {
    for (size_t begin = 0; begin < rows.size(); begin += kEvalBatch) {
        const size_t end = std::min(rows.size(), begin + kEvalBatch);
        std::vector<MelExample> batch;
        for (size_t i = begin; i < end; ++i) {
            batch.push_back(make_example(mel, start_frames[rows[i]]));
        }
        std::vector<const MelExample*> refs;
        for (const auto& ex : batch) refs.push_back(&ex);
        const auto probs = forward_batch(model, refs, false);
        for (size_t i = begin; i < end; ++i) {
            std::copy(probs[i - begin].begin(), probs[i - begin].end(),
                      track.probs.begin() + rows[i] * track.class_values.size());
        }
    }
}

int parse_fold_tag(const Model& model) {
    const auto it = model.metadata.find("held_out_fold");
    if (it == model.metadata.end()) {
        throw ConfigError("fold model lacks held_out_fold metadata");
    }
    return std::stoi(it->second);
}

std::set<std::string> train_section_set(const Model& model) {
    std::set<std::string> out;
    const auto it = model.metadata.find("train_sections");
    if (it == model.metadata.end()) return out;
    std::stringstream ss(it->second);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (!tok.empty()) out.insert(tok);
    }
    return out;
}

} // namespace

void StmTrack::validate() const {
    if (class_values.empty()) throw ValidationError("track has no classes");
    if (probs.size() != times.size() * class_values.size()) {
        throw ValidationError("track probability matrix does not match the grid");
    }
    for (size_t f = 0; f < times.size(); ++f) {
        double sum = 0.0;
        for (int c = 0; c < n_classes(); ++c) sum += prob(f, c);
        if (std::fabs(sum - 1.0) > 1e-6) {
            throw ValidationError("probabilities at frame " + std::to_string(f) +
                                  " sum to " + std::to_string(sum));
        }
    }
}

StmTrack framewise_stm(Model& model, const AudioBuffer& audio) {
    const double window_s = MelExample::kFrames * 0.02;
    if (audio.duration() + 1e-9 < window_s) {
        throw ValidationError("audio shorter than the 8 s analysis window");
    }
    const MelMatrix mel = log_mel(audio);
    const ExcerptGrid grid = excerpt_grid(mel, audio.duration());

    StmTrack track;
    track.class_values = model.cfg.class_values;
    track.times = grid.times;
    track.probs.assign(grid.times.size() * track.class_values.size(), 0.0f);

    std::vector<size_t> rows(grid.times.size());
    for (size_t i = 0; i < rows.size(); ++i) rows[i] = i;
    classify_frames(model, mel, grid.start_frames, rows, track);
    return track;
}

CvAnalysis framewise_stm_cv(std::vector<Model>& fold_models, const AudioBuffer& audio,
                            const ConcertAnnotation& ann, const FoldAssignment& folds) {
    if (fold_models.empty()) throw ConfigError("no fold models given");
    for (const Model& m : fold_models) {
        if (m.cfg.class_values != fold_models.front().cfg.class_values) {
            throw ConfigError("fold models disagree on the class set");
        }
    }
    const double window_s = MelExample::kFrames * 0.02;
    if (audio.duration() + 1e-9 < window_s) {
        throw ValidationError("audio shorter than the 8 s analysis window");
    }

    std::vector<int> fold_of_model(fold_models.size());
    std::vector<std::set<std::string>> trained_on(fold_models.size());
    for (size_t m = 0; m < fold_models.size(); ++m) {
        fold_of_model[m] = parse_fold_tag(fold_models[m]);
        trained_on[m] = train_section_set(fold_models[m]);
    }

    const MelMatrix mel = log_mel(audio);
    const ExcerptGrid grid = excerpt_grid(mel, audio.duration());

    CvAnalysis out;
    out.track.class_values = fold_models.front().cfg.class_values;
    out.track.times = grid.times;
    out.track.probs.assign(grid.times.size() * out.track.class_values.size(), 0.0f);
    out.model_of_frame.assign(grid.times.size(), 0);

    for (size_t i = 0; i < grid.times.size(); ++i) {
        const double t = grid.times[i];
        int section = -1;
        for (size_t s = 0; s < ann.sections.size(); ++s) {
            if (t >= ann.sections[s].start_s - 1e-9 && t < ann.sections[s].end_s - 1e-9) {
                section = static_cast<int>(s);
                break;
            }
        }
        int chosen = 0;
        if (section >= 0) {
            const std::string id = ann.concert_id + "#" + std::to_string(section);
            const auto fit = folds.fold_of_section.find(id);
            if (fit != folds.fold_of_section.end()) {
                chosen = -1;
                for (size_t m = 0; m < fold_models.size(); ++m) {
                    if (fold_of_model[m] == fit->second) {
                        chosen = static_cast<int>(m);
                        break;
                    }
                }
                if (chosen < 0) {
                    throw ConfigError("no fold model holds out fold " +
                                      std::to_string(fit->second));
                }
                if (trained_on[chosen].count(id) > 0) {
                    throw Error("train-test leak: model for fold " + std::to_string(fit->second) +
                                " was trained on section " + id);
                }
            }
        }
        out.model_of_frame[i] = chosen;
    }

    for (size_t m = 0; m < fold_models.size(); ++m) {
        std::vector<size_t> rows;
        for (size_t i = 0; i < out.model_of_frame.size(); ++i) {
            if (out.model_of_frame[i] == static_cast<int>(m)) rows.push_back(i);
        }
        if (!rows.empty()) {
            classify_frames(fold_models[m], mel, grid.start_frames, rows, out.track);
        }
    }
    return out;
}

std::vector<Section> assemble_seg1(const StmTrack& voc, const StmTrack& pakh,
                                   const StmTrack& net, NetMode net_mode) {
    check_same_grid(voc, pakh, "seg1");
    check_same_grid(voc, net, "seg1");
    std::vector<LabelTuple> tuples(voc.times.size());
    for (size_t i = 0; i < tuples.size(); ++i) {
        tuples[i].voc = voc.value(i);
        tuples[i].pakh = pakh.value(i);
        tuples[i].net = net_mode == NetMode::from_model
                            ? net.value(i)
                            : std::max(tuples[i].voc, tuples[i].pakh);
    }
    return sections_from_tuples(tuples, voc.times, voc.hop_s);
}

std::vector<Section> assemble_seg2(const StmTrack& voc, const StmTrack& pakh,
                                   const StmTrack& net) {
    check_same_grid(voc, pakh, "seg2");
    check_same_grid(voc, net, "seg2");
    std::vector<LabelTuple> tuples(voc.times.size());
    for (size_t i = 0; i < tuples.size(); ++i) {
        double best = -1.0;
        LabelTuple pick;
        for (int v = 0; v < voc.n_classes(); ++v) {
            for (int p = 0; p < pakh.n_classes(); ++p) {
                const int n_value = std::max(voc.class_values[v], pakh.class_values[p]);
                const auto nit = std::find(net.class_values.begin(), net.class_values.end(),
                                           n_value);
                if (nit == net.class_values.end()) continue;
                const int n = static_cast<int>(nit - net.class_values.begin());
                const double score =
                    (voc.prob(i, v) + pakh.prob(i, p) + net.prob(i, n)) / 3.0;
                if (score > best) {
                    best = score;
                    pick = {voc.class_values[v], pakh.class_values[p], n_value};
                }
            }
        }
        tuples[i] = pick;
    }
    return sections_from_tuples(tuples, voc.times, voc.hop_s);
}

std::vector<Section> smooth_sections(const std::vector<Section>& seq, double min_dur_s,
                                     bool prefer_next) {
    if (seq.empty()) return {};
    for (size_t i = 1; i < seq.size(); ++i) {
        if (std::fabs(seq[i].start_s - seq[i - 1].end_s) > 1e-6) {
            throw ValidationError("section sequence has a gap before index " +
                                  std::to_string(i));
        }
    }
    std::vector<Section> out = seq;
    coalesce(out);
    while (out.size() > 1) {
        size_t i = 0;
        for (; i < out.size(); ++i) {
            if (out[i].duration() < min_dur_s - 1e-9) break;
        }
        if (i == out.size()) break;
        if (i == 0) {
            out[1].start_s = out[0].start_s;
            out.erase(out.begin());
        } else if (prefer_next && i + 1 < out.size()) {
            out[i + 1].start_s = out[i].start_s;
            out.erase(out.begin() + i);
        } else {
            out[i - 1].end_s = out[i].end_s;
            out.erase(out.begin() + i);
        }
        coalesce(out);
    }
    return out;
}

TempoTrack surface_tempo_bpm(const TempoTrack& mt, const StmTrack& stm) {
    if (mt.times.size() != stm.times.size()) {
        throw ValidationError("metric tempo and s.t.m. grids differ in size");
    }
    for (size_t i = 0; i < mt.times.size(); ++i) {
        if (std::fabs(mt.times[i] - stm.times[i]) > 1e-9) {
            throw ValidationError("metric tempo and s.t.m. grids differ at frame " +
                                  std::to_string(i));
        }
    }
    TempoTrack out;
    out.times = mt.times;
    out.bpm.resize(mt.times.size());
    for (size_t i = 0; i < mt.times.size(); ++i) {
        out.bpm[i] = mt.bpm[i] * stm.value(i);
    }
    return out;
}

void write_sections_csv(const std::string& path, const std::vector<Section>& sections) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot write " + path);
    f << "start_s,end_s,stm_vocal,stm_pakhawaj,stm_net\n";
    auto cell = [](const std::optional<int>& v) { return v ? std::to_string(*v) : "na"; };
    char buf[64];
    for (const Section& s : sections) {
        std::snprintf(buf, sizeof buf, "%.6f,%.6f,", s.start_s, s.end_s);
        f << buf << cell(s.stm_vocal) << "," << cell(s.stm_pakhawaj) << "," << cell(s.stm_net)
          << "\n";
    }
    if (!f) throw IoError("failed writing " + path);
}

std::vector<Section> read_sections_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open " + path);
    std::vector<Section> out;
    std::string line;
    int lineno = 0;
    bool saw_header = false;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        std::vector<std::string> cols;
        std::string cur;
        for (char ch : line) {
            if (ch == ',') {
                cols.push_back(cur);
                cur.clear();
            } else if (ch != '\r') {
                cur += ch;
            }
        }
        cols.push_back(cur);
        if (!saw_header) {
            if (cols.size() != 5 || cols[0] != "start_s") {
                throw FormatError(path + ":" + std::to_string(lineno) +
                                  ": expected a sections CSV header");
            }
            saw_header = true;
            continue;
        }
        if (cols.size() != 5) {
            throw FormatError(path + ":" + std::to_string(lineno) + ": expected 5 columns");
        }
        Section s;
        auto stm = [&](const std::string& tok) -> std::optional<int> {
            if (tok == "na" || tok.empty()) return std::nullopt;
            try {
                return std::stoi(tok);
            } catch (const std::exception&) {
                throw FormatError(path + ":" + std::to_string(lineno) + ": unknown label '" +
                                  tok + "'");
            }
        };
        try {
            s.start_s = std::stod(cols[0]);
            s.end_s = std::stod(cols[1]);
        } catch (const std::exception&) {
            throw FormatError(path + ":" + std::to_string(lineno) + ": bad time value");
        }
        s.stm_vocal = stm(cols[2]);
        s.stm_pakhawaj = stm(cols[3]);
        s.stm_net = stm(cols[4]);
        out.push_back(s);
    }
    if (!saw_header) throw FormatError(path + ": empty sections file");
    return out;
}

void write_track_csv(const std::string& path, const StmTrack& track) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot write " + path);
    f << "time_s";
    for (int v : track.class_values) f << ",p_" << v;
    f << "\n";
    char buf[32];
    for (size_t i = 0; i < track.times.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.2f", track.times[i]);
        f << buf;
        for (int c = 0; c < track.n_classes(); ++c) {
            std::snprintf(buf, sizeof buf, ",%.6f", track.prob(i, c));
            f << buf;
        }
        f << "\n";
    }
    if (!f) throw IoError("failed writing " + path);
}

} // namespace laykari
