// Copyright 2026 The Laykari Authors
//
// Licensed under the Apache License, Version 2.0

#include "laykari/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

namespace laykari {
namespace {

namespace fs = std::filesystem;

const std::vector<int> kMixtureClasses{1, 2, 4, 8, 16};
const std::vector<int> kVocalClasses{1, 2, 4, 8};

bool in_top_set(int v) {
    return v == 1 || v == 2 || v == 4 || v == 8 || v == 16;
}

std::string line_tag(const std::string& path, int line) {
    return path + ":" + std::to_string(line) + ": ";
}

std::optional<int> parse_stm(const std::string& tok, const std::string& path, int line) {
    if (tok == "na" || tok.empty()) return std::nullopt;
    size_t pos = 0;
    int v = 0;
    try {
        v = std::stoi(tok, &pos);
    } catch (const std::exception&) {
        throw FormatError(line_tag(path, line) + "unknown label '" + tok + "'");
    }
    if (pos != tok.size() || v <= 0) {
        throw FormatError(line_tag(path, line) + "unknown label '" + tok + "'");
    }
    return v;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

std::string concert_id_from_dir(const fs::path& dir) {
    fs::path p = dir;
    if (p.filename().empty()) p = p.parent_path();
    return p.filename().string();
}

} // namespace

const char* stream_name(Stream s) {
    switch (s) {
        case Stream::mixture: return "mixture";
        case Stream::vocal: return "vocal";
        case Stream::pakhawaj: return "pakhawaj";
    }
    return "?";
}

Stream parse_stream(const std::string& name) {
    if (name == "mixture") return Stream::mixture;
    if (name == "vocal") return Stream::vocal;
    if (name == "pakhawaj") return Stream::pakhawaj;
    throw ConfigError("unknown stream '" + name + "'");
}

const std::vector<int>& class_values(Stream s) {
    return s == Stream::vocal ? kVocalClasses : kMixtureClasses;
}

int class_index(Stream s, int stm_value) {
    const auto& vals = class_values(s);
    for (size_t i = 0; i < vals.size(); ++i) {
        if (vals[i] == stm_value) return static_cast<int>(i);
    }
    return -1;
}

std::optional<int> Section::label(Stream s) const {
    switch (s) {
        case Stream::mixture: return stm_net;
        case Stream::vocal: return stm_vocal;
        case Stream::pakhawaj: return stm_pakhawaj;
    }
    return std::nullopt;
}

void ConcertAnnotation::validate() const {
    for (size_t i = 1; i < sam_times_s.size(); ++i) {
        if (!(sam_times_s[i] > sam_times_s[i - 1])) {
            throw ValidationError(concert_id + ": sam times not strictly increasing at index " +
                                  std::to_string(i));
        }
    }
    if (!sam_times_s.empty() && matras_per_cycle < 1) {
        throw ValidationError(concert_id + ": matras_per_cycle must be positive");
    }
    for (size_t i = 0; i < sections.size(); ++i) {
        const Section& s = sections[i];
        if (!(s.end_s > s.start_s)) {
            throw ValidationError(concert_id + ": section " + std::to_string(i) +
                                  " has non-positive duration");
        }
        if (i > 0 && s.start_s < sections[i - 1].end_s - 1e-9) {
            throw ValidationError(concert_id + ": sections " + std::to_string(i - 1) + " and " +
                                  std::to_string(i) + " overlap");
        }
        if (s.stm_vocal && s.stm_pakhawaj && s.stm_net &&
            *s.stm_net != std::max(*s.stm_vocal, *s.stm_pakhawaj)) {
            throw ValidationError(concert_id + ": section " + std::to_string(i) +
                                  " stm_net is not the max of the instrument labels");
        }
    }
}

ConcertAnnotation load_annotations(const std::string& dir) {
    const fs::path base(dir);
    const std::string csv_path = (base / "sections.csv").string();
    const std::string json_path = (base / "concert.json").string();

    std::ifstream csv(csv_path);
    if (!csv) throw IoError("cannot open " + csv_path);

    ConcertAnnotation ann;
    ann.concert_id = concert_id_from_dir(base);

    std::string line;
    int lineno = 0;
    bool saw_header = false;
    int prev_line = 0;
    while (std::getline(csv, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        const auto cols = split_csv(line);
        if (!saw_header) {
            if (cols.size() != 5 || cols[0] != "start_s") {
                throw FormatError(line_tag(csv_path, lineno) +
                                  "expected header start_s,end_s,stm_vocal,stm_pakhawaj,stm_net");
            }
            saw_header = true;
            continue;
        }
        if (cols.size() != 5) {
            throw FormatError(line_tag(csv_path, lineno) + "expected 5 columns, got " +
                              std::to_string(cols.size()));
        }
        Section s;
        try {
            s.start_s = std::stod(cols[0]);
            s.end_s = std::stod(cols[1]);
        } catch (const std::exception&) {
            throw FormatError(line_tag(csv_path, lineno) + "bad time value");
        }
        s.stm_vocal = parse_stm(cols[2], csv_path, lineno);
        s.stm_pakhawaj = parse_stm(cols[3], csv_path, lineno);
        s.stm_net = parse_stm(cols[4], csv_path, lineno);
        if (!(s.end_s > s.start_s)) {
            throw ValidationError(line_tag(csv_path, lineno) + "section end does not follow start");
        }
        if (!ann.sections.empty() && s.start_s < ann.sections.back().end_s - 1e-9) {
            throw ValidationError(line_tag(csv_path, lineno) + "section overlaps the one on line " +
                                  std::to_string(prev_line));
        }
        for (auto v : {s.stm_vocal, s.stm_pakhawaj, s.stm_net}) {
            if (v && !in_top_set(*v)) s.excluded = true;
        }
        ann.sections.push_back(s);
        prev_line = lineno;
    }
    if (!saw_header) throw FormatError(csv_path + ": empty annotation file");

    std::ifstream js(json_path);
    if (!js) throw IoError("cannot open " + json_path);
    nlohmann::json j;
    try {
        js >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(json_path + ": " + e.what());
    }
    try {
        ann.sam_times_s = j.at("sam_times_s").get<std::vector<double>>();
        ann.matras_per_cycle = j.at("matras_per_cycle").get<int>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(json_path + ": " + e.what());
    }

    ann.validate();
    return ann;
}

void save_annotations(const std::string& dir, const ConcertAnnotation& ann) {
    const fs::path base(dir);
    std::error_code ec;
    fs::create_directories(base, ec);

    const std::string csv_path = (base / "sections.csv").string();
    std::ofstream csv(csv_path);
    if (!csv) throw IoError("cannot write " + csv_path);
    csv << "start_s,end_s,stm_vocal,stm_pakhawaj,stm_net\n";
    auto cell = [](const std::optional<int>& v) { return v ? std::to_string(*v) : "na"; };
    char buf[64];
    for (const Section& s : ann.sections) {
        std::snprintf(buf, sizeof buf, "%.6f,%.6f,", s.start_s, s.end_s);
        csv << buf << cell(s.stm_vocal) << "," << cell(s.stm_pakhawaj) << "," << cell(s.stm_net)
            << "\n";
    }
    if (!csv) throw IoError("failed writing " + csv_path);

    nlohmann::json j;
    j["sam_times_s"] = ann.sam_times_s;
    j["matras_per_cycle"] = ann.matras_per_cycle;
    const std::string json_path = (base / "concert.json").string();
    std::ofstream js(json_path);
    if (!js) throw IoError("cannot write " + json_path);
    js << j.dump(2) << "\n";
}

const std::vector<double>& time_scale_grid() {
    static const std::vector<double> grid = [] {
        std::vector<double> g;
        for (int i = 0; i <= 10; ++i) g.push_back((80 + 4 * i) / 100.0);
        return g;
    }();
    return grid;
}

AudioBuffer time_scale(const AudioBuffer& audio, double factor) {
    bool on_grid = false;
    for (double g : time_scale_grid()) {
        if (std::fabs(factor - g) < 1e-9) {
            factor = g;
            on_grid = true;
            break;
        }
    }
    if (!on_grid) {
        throw ValidationError("time-scale factor " + std::to_string(factor) +
                              " is not on the 0.80..1.20 grid");
    }
    AudioBuffer out;
    out.rate = audio.rate;
    if (factor == 1.0) {
        out.samples = audio.samples;
        return out;
    }
    const int virtual_rate = static_cast<int>(std::lround(audio.rate * factor));
    out.samples = resample(audio.samples, virtual_rate, audio.rate);
    return out;
}

namespace {

// Augmentation factors ordered by distance from 1 in log space; the identity
// is excluded because it would duplicate the base examples.
std::vector<double> augmentation_order() {
    std::vector<double> fs;
    for (double g : time_scale_grid()) {
        if (g != 1.0) fs.push_back(g);
    }
    std::sort(fs.begin(), fs.end(),
              [](double a, double b) { return std::fabs(std::log(a)) < std::fabs(std::log(b)); });
    return fs;
}

AudioBuffer section_slice(const AudioBuffer& audio, const Section& s) {
    const auto n = static_cast<long long>(audio.samples.size());
    long long a = std::llround(s.start_s * audio.rate);
    long long b = std::llround(s.end_s * audio.rate);
    a = std::clamp(a, 0LL, n);
    b = std::clamp(b, a, n);
    AudioBuffer out;
    out.rate = audio.rate;
    out.samples.assign(audio.samples.begin() + a, audio.samples.begin() + b);
    return out;
}

// Windows of 8 s cut from one section at the given hop and scale factor.
// Returns how many windows were produced (capped at `limit`).
int emit_windows(const AudioBuffer& audio, const Section& sec, int section_index,
                 const std::string& concert_id, Stream stream, int label_index, double factor,
                 double hop_s, const FeatConfig& feat, int limit,
                 std::vector<LabeledExample>& out) {
    if (limit <= 0) return 0;
    AudioBuffer slice = section_slice(audio, sec);
    if (factor != 1.0) slice = time_scale(slice, factor);
    const double window_s = MelExample::kFrames * feat.hop_s;
    if (slice.duration() + 1e-9 < window_s) return 0;

    const MelMatrix mel = log_mel(slice, feat);
    int produced = 0;
    for (int j = 0;; ++j) {
        const double pos = j * hop_s;
        if (pos + window_s > slice.duration() + 1e-9) break;
        const int start_frame = static_cast<int>(std::lround(pos / feat.hop_s));
        if (start_frame + MelExample::kFrames > mel.n_frames) break;
        LabeledExample ex;
        ex.example = make_example(mel, start_frame);
        ex.label = label_index;
        ex.section_id = concert_id + "#" + std::to_string(section_index);
        ex.concert_id = concert_id;
        ex.stream = stream;
        ex.scale_factor = factor;
        out.push_back(std::move(ex));
        if (++produced == limit) break;
    }
    return produced;
}

} // namespace

std::vector<LabeledExample> extract_examples(const ConcertAnnotation& ann,
                                             const AudioBuffer& audio, Stream stream,
                                             const ExtractConfig& cfg) {
    ann.validate();
    if (cfg.target_per_class < 0) throw ConfigError("target_per_class must be non-negative");
    if (!(cfg.min_hop_s > 0.0) || cfg.min_hop_s > cfg.max_hop_s) {
        throw ConfigError("hop bounds require 0 < min <= max");
    }
    if (!ann.sections.empty() && audio.duration() + 1e-6 < ann.sections.back().end_s) {
        throw ValidationError(ann.concert_id + ": audio (" + std::to_string(audio.duration()) +
                              " s) does not cover the annotated sections");
    }
    const double window_s = MelExample::kFrames * cfg.feat.hop_s;

    // Usable sections per class value.
    std::map<int, std::vector<int>> by_class;
    for (size_t i = 0; i < ann.sections.size(); ++i) {
        const Section& s = ann.sections[i];
        if (s.excluded) continue;
        const auto lab = s.label(stream);
        if (!lab || class_index(stream, *lab) < 0) continue;
        if (s.duration() + 1e-9 < window_s * 0.8) {
            std::fprintf(stderr, "laykari: %s section %zu (%.1f s) too short even for scaling\n",
                         ann.concert_id.c_str(), i, s.duration());
            continue;
        }
        by_class[*lab].push_back(static_cast<int>(i));
    }

    // Base counts at the non-overlapping hop decide the default target.
    std::map<int, int> base_count;
    for (const auto& [value, idxs] : by_class) {
        int c = 0;
        for (int i : idxs) {
            const double d = ann.sections[i].duration();
            if (d + 1e-9 >= window_s) {
                c += static_cast<int>(std::floor((d - window_s) / cfg.max_hop_s + 1e-9)) + 1;
            }
        }
        base_count[value] = c;
    }
    int target = cfg.target_per_class;
    if (target == 0 && !base_count.empty()) {
        std::vector<int> counts;
        for (const auto& [value, c] : base_count) counts.push_back(c);
        std::sort(counts.begin(), counts.end());
        target = counts[counts.size() / 2];
    }
    if (target <= 0) target = 1;

    std::vector<LabeledExample> out;
    static const std::vector<double> aug_order = augmentation_order();
    for (const auto& [value, idxs] : by_class) {
        double avail = 0.0;
        for (int i : idxs) avail += ann.sections[i].duration();
        const double hop =
            std::clamp(avail * static_cast<double>(idxs.size()) / target, cfg.min_hop_s,
                       cfg.max_hop_s);
        const int label_index = class_index(stream, value);

        int count = 0;
        for (size_t k = 0; k < idxs.size() && count < target; ++k) {
            count += emit_windows(audio, ann.sections[idxs[k]], idxs[k], ann.concert_id, stream,
                                  label_index, 1.0, hop, cfg.feat, target - count, out);
        }
        for (size_t f = 0; f < aug_order.size() && count < target; ++f) {
            for (size_t k = 0; k < idxs.size() && count < target; ++k) {
                count += emit_windows(audio, ann.sections[idxs[k]], idxs[k], ann.concert_id,
                                      stream, label_index, aug_order[f], hop, cfg.feat,
                                      target - count, out);
            }
        }
    }
    return out;
}

FoldAssignment make_folds(const std::vector<LabeledExample>& examples, int k, uint64_t rng_seed) {
    if (k < 2) throw ConfigError("fold count must be at least 2");
    if (examples.empty()) throw ValidationError("no examples to assign to folds");

    struct SectionInfo {
        std::string id;
        int cls = -1;
        int count = 0;
    };
    std::map<std::string, SectionInfo> by_id;
    for (const auto& ex : examples) {
        auto& info = by_id[ex.section_id];
        if (info.count == 0) {
            info.id = ex.section_id;
            info.cls = ex.label;
        } else if (info.cls != ex.label) {
            throw ValidationError("section " + ex.section_id + " carries two labels");
        }
        ++info.count;
    }

    std::vector<SectionInfo> sections;
    for (auto& [id, info] : by_id) sections.push_back(info);
    std::mt19937_64 rng(rng_seed);
    std::shuffle(sections.begin(), sections.end(), rng);
    std::stable_sort(sections.begin(), sections.end(),
                     [](const SectionInfo& a, const SectionInfo& b) { return a.count > b.count; });

    FoldAssignment fa;
    std::map<int, std::vector<int>> fold_sections; // class -> per-fold section count
    std::map<int, int> class_sections;
    for (const auto& s : sections) ++class_sections[s.cls];
    for (const auto& [cls, n] : class_sections) {
        if (n < k) {
            fa.warnings.push_back("class index " + std::to_string(cls) + " has only " +
                                  std::to_string(n) + " sections for " + std::to_string(k) +
                                  " folds");
        }
        fold_sections[cls].assign(k, 0);
    }

    for (const auto& s : sections) {
        auto& counts = fold_sections[s.cls];
        int best = 0;
        for (int f = 1; f < k; ++f) {
            if (counts[f] < counts[best]) best = f;
        }
        ++counts[best];
        fa.fold_of_section[s.id] = best;
    }
    return fa;
}

} // namespace laykari
