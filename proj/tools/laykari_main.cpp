// Copyright 2026 The Laykari Authors
//
// Licensed under the Apache License, Version 2.0
//
// Command line front end. Every subcommand resolves its parameters into a
// run config JSON written beside its outputs, so a run can be repeated
// exactly from the artifacts alone.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "laykari/audio_io.hpp"
#include "laykari/dataset.hpp"
#include "laykari/errors.hpp"
#include "laykari/evaluation.hpp"
#include "laykari/features.hpp"
#include "laykari/metric_tempo.hpp"
#include "laykari/segmentation.hpp"
#include "laykari/stm_model.hpp"
#include "laykari/synth.hpp"
#include "plot.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace laykari {
namespace {

uint64_t fnv1a(const void* data, size_t n, uint64_t h = 1469598103934665603ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

void parallel_for(int n, int jobs, const std::function<void(int)>& fn) {
    jobs = std::clamp(jobs, 1, std::max(1, n));
    if (jobs == 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::mutex err_mu;
    std::exception_ptr err;
    std::vector<std::thread> pool;
    for (int w = 0; w < jobs; ++w) {
        pool.emplace_back([&] {
            while (true) {
                const int i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(err_mu);
                    if (!err) err = std::current_exception();
                    return;
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (err) std::rethrow_exception(err);
}

// Spectrogram memoised under $LAYKARI_CACHE, keyed on the decoded samples and
// the feature parameters, so renamed or re-encoded copies still hit.
MelMatrix mel_of(const AudioBuffer& audio, const FeatConfig& feat = {}) {
    const char* cache = std::getenv("LAYKARI_CACHE");
    if (!cache || !*cache) return log_mel(audio, feat);

    uint64_t h = fnv1a(audio.samples.data(), audio.samples.size() * sizeof(float));
    h = fnv1a(&audio.rate, sizeof audio.rate, h);
    char canon[160];
    std::snprintf(canon, sizeof canon, "%g|%g|%d|%g|%g|%d|%d|%g", feat.window_s, feat.hop_s,
                  feat.n_mels, feat.fmin_hz, feat.fmax_hz, feat.rate, feat.n_fft,
                  feat.log_scale);
    h = fnv1a(canon, std::strlen(canon), h);

    char name[32];
    std::snprintf(name, sizeof name, "%016llx.mel", static_cast<unsigned long long>(h));
    const fs::path path = fs::path(cache) / name;
    std::error_code ec;
    if (fs::exists(path, ec)) {
        try {
            return read_mel_cache(path.string());
        } catch (const Error&) {
            // stale or torn entry; recompute below
        }
    }
    MelMatrix mel = log_mel(audio, feat);
    fs::create_directories(cache, ec);
    const std::string tmp = path.string() + ".tmp";
    try {
        write_mel_cache(tmp, mel);
        fs::rename(tmp, path, ec);
    } catch (const Error&) {
        fs::remove(tmp, ec);
    }
    return mel;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out << text;
    if (!out) throw IoError("short write: " + path.string());
}

void write_config(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

fs::path config_sibling(const std::string& out_file) {
    fs::path p(out_file);
    p.replace_extension();
    p += ".config.json";
    return p;
}

json feat_config_json(const FeatConfig& f) {
    return {{"window_s", f.window_s}, {"hop_s", f.hop_s},       {"n_mels", f.n_mels},
            {"fmin_hz", f.fmin_hz},   {"fmax_hz", f.fmax_hz},   {"rate", f.rate},
            {"n_fft", f.n_fft},       {"log_scale", f.log_scale}};
}

json load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open: " + path);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw FormatError(path + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// synth

struct NamedSpec {
    std::string name;
    SynthSpec spec;
};

SynthSpec parse_synth_spec(const json& j, const std::string& where) {
    static const std::set<std::string> top{"name",        "mt_bpm",      "schedule",
                                           "matras_per_cycle", "noise_floor", "rng_seed"};
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (!top.count(key)) throw FormatError(where + ": unknown key '" + key + "'");
    }
    SynthSpec spec;
    if (j.contains("mt_bpm")) {
        spec.mt_bpm.clear();
        for (const auto& p : j.at("mt_bpm")) {
            MtPoint pt;
            if (p.is_array()) {
                if (p.size() != 2) throw FormatError(where + ": mt_bpm entries are [time_s, bpm]");
                pt.time_s = p[0].get<double>();
                pt.bpm = p[1].get<double>();
            } else {
                pt.time_s = p.at("time_s").get<double>();
                pt.bpm = p.at("bpm").get<double>();
            }
            spec.mt_bpm.push_back(pt);
        }
    }
    if (!j.contains("schedule")) throw FormatError(where + ": missing key 'schedule'");
    for (const auto& e : j.at("schedule")) {
        for (const auto& [key, value] : e.items()) {
            (void)value;
            if (key != "duration_s" && key != "stm_vocal" && key != "stm_pakhawaj") {
                throw FormatError(where + ": unknown schedule key '" + key + "'");
            }
        }
        SynthSectionSpec sec;
        sec.duration_s = e.at("duration_s").get<double>();
        sec.stm_vocal = e.at("stm_vocal").get<int>();
        sec.stm_pakhawaj = e.at("stm_pakhawaj").get<int>();
        spec.schedule.push_back(sec);
    }
    spec.matras_per_cycle = j.value("matras_per_cycle", spec.matras_per_cycle);
    spec.noise_floor = j.value("noise_floor", spec.noise_floor);
    spec.rng_seed = j.value("rng_seed", spec.rng_seed);
    spec.validate();
    return spec;
}

json spec_to_json(const NamedSpec& ns) {
    json j;
    j["name"] = ns.name;
    j["mt_bpm"] = json::array();
    for (const MtPoint& p : ns.spec.mt_bpm) j["mt_bpm"].push_back({{"time_s", p.time_s}, {"bpm", p.bpm}});
    j["schedule"] = json::array();
    for (const SynthSectionSpec& s : ns.spec.schedule) {
        j["schedule"].push_back({{"duration_s", s.duration_s},
                                 {"stm_vocal", s.stm_vocal},
                                 {"stm_pakhawaj", s.stm_pakhawaj}});
    }
    j["matras_per_cycle"] = ns.spec.matras_per_cycle;
    j["noise_floor"] = ns.spec.noise_floor;
    j["rng_seed"] = ns.spec.rng_seed;
    return j;
}

struct SynthOpts {
    std::string spec_path;
    std::string out_dir;
    int jobs = 1;
};

int cmd_synth(const SynthOpts& opt) {
    const json root = load_json(opt.spec_path);
    std::vector<NamedSpec> entries;
    if (root.contains("concerts")) {
        int idx = 0;
        for (const auto& e : root.at("concerts")) {
            char fallback[24];
            std::snprintf(fallback, sizeof fallback, "synth_%02d", idx);
            NamedSpec ns;
            ns.name = e.value("name", std::string(fallback));
            ns.spec = parse_synth_spec(e, opt.spec_path + ": concerts[" + std::to_string(idx) + "]");
            if (!e.contains("rng_seed")) ns.spec.rng_seed = static_cast<uint64_t>(idx);
            entries.push_back(std::move(ns));
            ++idx;
        }
        if (entries.empty()) throw FormatError(opt.spec_path + ": 'concerts' is empty");
    } else {
        NamedSpec ns;
        ns.name = fs::path(opt.out_dir).filename().string();
        ns.spec = parse_synth_spec(root, opt.spec_path);
        entries.push_back(std::move(ns));
    }
    std::set<std::string> seen;
    for (const NamedSpec& ns : entries) {
        if (!seen.insert(ns.name).second) {
            throw FormatError(opt.spec_path + ": duplicate concert name '" + ns.name + "'");
        }
    }

    fs::create_directories(opt.out_dir);
    const bool nested = root.contains("concerts");
    parallel_for(static_cast<int>(entries.size()), opt.jobs, [&](int i) {
        const SynthConcert concert = generate_concert(entries[i].spec);
        const fs::path dir =
            nested ? fs::path(opt.out_dir) / entries[i].name : fs::path(opt.out_dir);
        save_concert(dir.string(), concert);
    });

    json cfg;
    cfg["command"] = "synth";
    cfg["spec"] = opt.spec_path;
    cfg["out"] = opt.out_dir;
    cfg["jobs"] = opt.jobs;
    cfg["concerts"] = json::array();
    for (const NamedSpec& ns : entries) cfg["concerts"].push_back(spec_to_json(ns));
    write_config(fs::path(opt.out_dir) / "run_config.json", cfg);
    return 0;
}

// ---------------------------------------------------------------------------
// train

struct TrainOpts {
    std::vector<std::string> data_dirs;
    std::string out_dir;
    std::vector<std::string> streams{"vocal", "pakhawaj", "mixture"};
    std::string variant = "2.a";
    int folds = 3;
    uint64_t seed = 0;
    double lr = 1e-4;
    int batch = 32;
    int epochs = 500;
    int patience = 50;
    int target_per_class = 0;
    int jobs = 1;
};

uint64_t derived_seed(uint64_t base, const std::string& tag, int fold) {
    uint64_t h = fnv1a(&base, sizeof base);
    h = fnv1a(tag.data(), tag.size(), h);
    h = fnv1a(&fold, sizeof fold, h);
    return h;
}

int cmd_train(const TrainOpts& opt) {
    fs::create_directories(opt.out_dir);

    TrainConfig tc;
    tc.lr = opt.lr;
    tc.batch_size = opt.batch;
    tc.max_epochs = opt.epochs;
    tc.patience = opt.patience;
    tc.validate();
    ExtractConfig xc;
    xc.target_per_class = opt.target_per_class;

    json cfg;
    cfg["command"] = "train";
    cfg["data"] = opt.data_dirs;
    cfg["out"] = opt.out_dir;
    cfg["streams"] = opt.streams;
    cfg["variant"] = opt.variant;
    cfg["folds"] = opt.folds;
    cfg["seed"] = opt.seed;
    cfg["jobs"] = opt.jobs;
    cfg["train"] = {{"lr", tc.lr},           {"beta1", tc.beta1},
                    {"beta2", tc.beta2},     {"eps", tc.eps},
                    {"batch_size", tc.batch_size}, {"max_epochs", tc.max_epochs},
                    {"patience", tc.patience}};
    cfg["extract"] = {{"target_per_class", xc.target_per_class},
                      {"min_hop_s", xc.min_hop_s},
                      {"max_hop_s", xc.max_hop_s}};
    cfg["feat"] = feat_config_json(xc.feat);

    json model_cfg;
    model_cfg["variant"] = opt.variant;

    for (const std::string& stream_name_str : opt.streams) {
        const Stream stream = parse_stream(stream_name_str);
        const int n = static_cast<int>(opt.data_dirs.size());
        std::vector<std::vector<LabeledExample>> per_concert(n);
        parallel_for(n, opt.jobs, [&](int i) {
            const ConcertAnnotation ann = load_annotations(opt.data_dirs[i]);
            const AudioBuffer audio = load_audio(
                (fs::path(opt.data_dirs[i]) / (stream_name_str + ".wav")).string());
            per_concert[i] = extract_examples(ann, audio, stream, xc);
        });
        std::vector<LabeledExample> examples;
        for (auto& v : per_concert) {
            examples.insert(examples.end(), std::make_move_iterator(v.begin()),
                            std::make_move_iterator(v.end()));
        }
        if (examples.empty()) {
            throw ConfigError("no usable '" + stream_name_str + "' examples in the given data");
        }

        const FoldAssignment folds = make_folds(examples, opt.folds, opt.seed);
        for (const std::string& w : folds.warnings) {
            std::fprintf(stderr, "laykari: %s\n", w.c_str());
        }

        const ModelConfig mc = variant_config(opt.variant, static_cast<int>(class_values(stream).size()));
        model_cfg["streams"][stream_name_str] = {{"classes", mc.class_values},
                                                 {"params", count_params(mc)}};

        json stream_json;
        stream_json["n_examples"] = examples.size();
        stream_json["fold_of_section"] = json::object();
        for (const auto& [id, f] : folds.fold_of_section) stream_json["fold_of_section"][id] = f;
        stream_json["warnings"] = folds.warnings;

        for (int f = 0; f < opt.folds; ++f) {
            std::vector<MelExample> tx, vx;
            std::vector<int> ty, vy;
            std::set<std::string> train_ids;
            for (const LabeledExample& ex : examples) {
                if (folds.fold_of_section.at(ex.section_id) == f) {
                    vx.push_back(ex.example);
                    vy.push_back(ex.label);
                } else {
                    tx.push_back(ex.example);
                    ty.push_back(ex.label);
                    train_ids.insert(ex.section_id);
                }
            }
            const uint64_t mseed = derived_seed(opt.seed, stream_name_str, f);
            Model model = build_model(mc, mseed);
            model.metadata["stream"] = stream_name_str;
            model.metadata["held_out_fold"] = std::to_string(f);
            std::string joined;
            for (const std::string& id : train_ids) {
                if (!joined.empty()) joined += ',';
                joined += id;
            }
            model.metadata["train_sections"] = joined;

            TrainConfig fold_tc = tc;
            fold_tc.rng_seed = mseed;
            char stem[64];
            std::snprintf(stem, sizeof stem, "%s_fold%d", stream_name_str.c_str(), f);
            TrainHistory hist;
            try {
                hist = train(model, tx, ty, vx, vy, fold_tc);
            } catch (const Error& e) {
                throw ConfigError(std::string(stem) + ": " + e.what());
            }
            save_weights(model, (fs::path(opt.out_dir) / (std::string(stem) + ".stmw")).string());

            std::string hist_csv = "epoch,train_loss,train_acc,val_loss,val_acc\n";
            for (size_t e = 0; e < hist.epochs.size(); ++e) {
                char line[160];
                std::snprintf(line, sizeof line, "%zu,%.6f,%.6f,%.6f,%.6f\n", e + 1,
                              hist.epochs[e].train_loss, hist.epochs[e].train_acc,
                              hist.epochs[e].val_loss, hist.epochs[e].val_acc);
                hist_csv += line;
            }
            write_text(fs::path(opt.out_dir) / (std::string(stem) + "_history.csv"), hist_csv);

            json fold_json;
            fold_json["file"] = std::string(stem) + ".stmw";
            fold_json["best_epoch"] = hist.best_epoch;
            fold_json["epochs_run"] = hist.epochs.size();
            fold_json["train_examples"] = tx.size();
            fold_json["val_examples"] = vx.size();
            if (hist.best_epoch >= 0 && hist.best_epoch < static_cast<int>(hist.epochs.size())) {
                fold_json["best_val_acc"] = hist.epochs[hist.best_epoch].val_acc;
            }
            stream_json["models"].push_back(fold_json);
        }
        cfg["results"][stream_name_str] = stream_json;
    }

    write_config(fs::path(opt.out_dir) / "model_config.json", model_cfg);
    write_config(fs::path(opt.out_dir) / "run_config.json", cfg);
    return 0;
}

// ---------------------------------------------------------------------------
// tempo

struct TempoOpts {
    std::string audio_path;
    std::string out_csv;
    double lo = 35.0;
    double hi = 75.0;
    double penalty = 5.0;
};

int cmd_tempo(const TempoOpts& opt) {
    const TempoRange range{opt.lo, opt.hi};
    range.validate();
    const AudioBuffer audio = load_audio(opt.audio_path);
    const TempoTrack track = estimate_metric_tempo(mel_of(audio), range, opt.penalty);
    write_tempo_csv(opt.out_csv, track);

    json cfg;
    cfg["command"] = "tempo";
    cfg["audio"] = opt.audio_path;
    cfg["out"] = opt.out_csv;
    cfg["range"] = {{"lo", range.lo}, {"hi", range.hi}};
    cfg["jump_penalty"] = opt.penalty;
    cfg["feat"] = feat_config_json({});
    write_config(config_sibling(opt.out_csv), cfg);
    return 0;
}

// ---------------------------------------------------------------------------
// analyse

struct AnalyseOpts {
    std::string audio_path;
    std::string vocal_path;
    std::string pakhawaj_path;
    std::string models_dir;
    std::string out_dir;
    std::string variant;
    int seg = 1;
    std::string net_mode = "model";
    double min_dur = 5.0;
    double lo = 35.0;
    double hi = 75.0;
    double penalty = 5.0;
    bool plot = false;
};

std::vector<Model> load_stream_models(const std::string& dir, Stream stream,
                                      const std::string& variant) {
    const std::string prefix = stream_name(stream);
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        if (name.size() < 5 || name.substr(name.size() - 5) != ".stmw") continue;
        if (name == prefix + ".stmw" || name.rfind(prefix + "_fold", 0) == 0) {
            files.push_back(entry.path().string());
        }
    }
    std::sort(files.begin(), files.end());
    std::vector<Model> models;
    const ModelConfig mc = variant_config(variant, static_cast<int>(class_values(stream).size()));
    for (const std::string& file : files) {
        Model m = load_weights(file, mc);
        const auto it = m.metadata.find("stream");
        if (it != m.metadata.end() && it->second != prefix) {
            throw ConfigError(file + ": metadata says stream '" + it->second + "', expected '" +
                              prefix + "'");
        }
        models.push_back(std::move(m));
    }
    return models;
}

// Mean class probabilities across the fold models of one stream.
StmTrack ensemble_track(std::vector<Model>& models, const AudioBuffer& audio) {
    StmTrack acc = framewise_stm(models[0], audio);
    for (size_t m = 1; m < models.size(); ++m) {
        const StmTrack t = framewise_stm(models[m], audio);
        if (t.probs.size() != acc.probs.size()) {
            throw Error("fold models disagree on the analysis grid");
        }
        for (size_t i = 0; i < acc.probs.size(); ++i) acc.probs[i] += t.probs[i];
    }
    const float inv = 1.0f / static_cast<float>(models.size());
    for (float& p : acc.probs) p *= inv;
    return acc;
}

void trim_track(StmTrack& t, size_t n) {
    if (t.times.size() <= n) return;
    t.times.resize(n);
    t.probs.resize(n * t.class_values.size());
}

void trim_tempo(TempoTrack& t, size_t n) {
    if (t.times.size() <= n) return;
    t.times.resize(n);
    t.bpm.resize(n);
}

std::vector<Section> sections_from_net(const StmTrack& net) {
    std::vector<Section> out;
    for (size_t i = 0; i < net.times.size(); ++i) {
        const int v = net.value(i);
        if (out.empty() || *out.back().stm_net != v) {
            Section s;
            s.start_s = out.empty() ? net.times[i] : out.back().end_s;
            s.stm_net = v;
            out.push_back(s);
        }
        out.back().end_s = net.times[i] + net.hop_s;
    }
    return out;
}

int cmd_analyse(const AnalyseOpts& opt) {
    const bool have_stems = !opt.vocal_path.empty() && !opt.pakhawaj_path.empty();
    if (!opt.vocal_path.empty() != !opt.pakhawaj_path.empty()) {
        throw ConfigError("--vocal and --pakhawaj must be given together");
    }
    if (opt.seg != 1 && opt.seg != 2) throw ConfigError("--seg must be 1 or 2");
    if (opt.net_mode != "model" && opt.net_mode != "max") {
        throw ConfigError("--net-mode must be 'model' or 'max'");
    }

    std::string variant = opt.variant;
    if (variant.empty()) {
        const fs::path mc_path = fs::path(opt.models_dir) / "model_config.json";
        variant = fs::exists(mc_path) ? load_json(mc_path.string()).value("variant", "2.a")
                                      : std::string("2.a");
    }

    const TempoRange range{opt.lo, opt.hi};
    range.validate();
    fs::create_directories(opt.out_dir);

    const AudioBuffer mix = load_audio(opt.audio_path);
    std::vector<Model> net_models = load_stream_models(opt.models_dir, Stream::mixture, variant);
    if (net_models.empty()) {
        throw ConfigError("no models for stream 'mixture' in " + opt.models_dir);
    }
    StmTrack net = ensemble_track(net_models, mix);
    TempoTrack mt = estimate_metric_tempo(mel_of(mix), range, opt.penalty);

    std::vector<Section> sections;
    StmTrack voc, pakh;
    if (have_stems) {
        std::vector<Model> voc_models = load_stream_models(opt.models_dir, Stream::vocal, variant);
        std::vector<Model> pakh_models =
            load_stream_models(opt.models_dir, Stream::pakhawaj, variant);
        if (voc_models.empty() || pakh_models.empty()) {
            throw ConfigError("stem analysis needs vocal and pakhawaj models in " +
                              opt.models_dir);
        }
        voc = ensemble_track(voc_models, load_audio(opt.vocal_path));
        pakh = ensemble_track(pakh_models, load_audio(opt.pakhawaj_path));
        const size_t n = std::min({voc.times.size(), pakh.times.size(), net.times.size()});
        trim_track(voc, n);
        trim_track(pakh, n);
        trim_track(net, n);
        if (opt.seg == 2) {
            sections = assemble_seg2(voc, pakh, net);
        } else if (opt.net_mode == "model") {
            sections = assemble_seg1(voc, pakh, net, NetMode::from_model);
        } else {
            sections = assemble_seg1(voc, pakh, net, NetMode::as_max);
        }
    } else {
        sections = sections_from_net(net);
    }
    sections = smooth_sections(sections, opt.min_dur);

    trim_tempo(mt, net.times.size());
    trim_track(net, mt.times.size());
    const TempoTrack st = surface_tempo_bpm(mt, net);

    const fs::path out(opt.out_dir);
    write_track_csv((out / "net_track.csv").string(), net);
    if (have_stems) {
        write_track_csv((out / "vocal_track.csv").string(), voc);
        write_track_csv((out / "pakhawaj_track.csv").string(), pakh);
    }
    write_sections_csv((out / "sections.csv").string(), sections);
    write_tempo_csv((out / "tempo.csv").string(), mt);
    write_tempo_csv((out / "surface_tempo.csv").string(), st);
    if (opt.plot) write_plot_bmp((out / "plot.bmp").string(), mt, st, sections);

    json cfg;
    cfg["command"] = "analyse";
    cfg["audio"] = opt.audio_path;
    if (have_stems) {
        cfg["vocal"] = opt.vocal_path;
        cfg["pakhawaj"] = opt.pakhawaj_path;
    }
    cfg["models"] = opt.models_dir;
    cfg["out"] = opt.out_dir;
    cfg["variant"] = variant;
    cfg["seg"] = have_stems ? opt.seg : 0;
    cfg["net_mode"] = opt.net_mode;
    cfg["min_dur_s"] = opt.min_dur;
    cfg["range"] = {{"lo", range.lo}, {"hi", range.hi}};
    cfg["jump_penalty"] = opt.penalty;
    cfg["plot"] = opt.plot;
    cfg["feat"] = feat_config_json({});
    write_config(out / "run_config.json", cfg);
    return 0;
}

// ---------------------------------------------------------------------------
// evaluate

struct EvaluateOpts {
    std::string est_csv;
    std::string gt_csv;
    std::vector<double> tols;
    std::string est_tempo;
    std::string gt_tempo;
    double tempo_tol = 0.04;
    std::string name;
    std::string json_out;
    bool table = false;
};

int cmd_evaluate(const EvaluateOpts& opt) {
    if (opt.est_tempo.empty() != opt.gt_tempo.empty()) {
        throw ConfigError("--est-tempo and --gt-tempo must be given together");
    }
    std::vector<double> tols = opt.tols;
    if (tols.empty()) tols = {1.5, 3.0};

    const std::vector<Section> est = read_sections_csv(opt.est_csv);
    const std::vector<Section> gt = read_sections_csv(opt.gt_csv);

    ConcertScores scores;
    if (!opt.name.empty()) {
        scores.concert_id = opt.name;
    } else {
        const fs::path p(opt.est_csv);
        const std::string parent = p.parent_path().filename().string();
        scores.concert_id = parent.empty() ? p.stem().string() : parent;
    }

    for (double tol : tols) {
        scores.boundaries[tol] = boundary_prf(interior_boundaries(est), interior_boundaries(gt), tol);
    }
    const std::pair<const char*, LabelDim> dims[] = {{"vocal", LabelDim::vocal},
                                                     {"pakhawaj", LabelDim::pakhawaj},
                                                     {"net", LabelDim::net},
                                                     {"joint", LabelDim::joint}};
    for (const auto& [key, dim] : dims) {
        scores.labelling[key] = labelling_accuracy(est, gt, dim);
    }
    if (!opt.est_tempo.empty()) {
        TempoTrack et = read_tempo_csv(opt.est_tempo);
        TempoTrack gtt = read_tempo_csv(opt.gt_tempo);
        const size_t n = std::min(et.times.size(), gtt.times.size());
        trim_tempo(et, n);
        trim_tempo(gtt, n);
        const TempoAccuracy acc = tempo_accuracy(et, gtt, opt.tempo_tol);
        scores.accuracy1 = acc.accuracy1;
        scores.accuracy2 = acc.accuracy2;
    }

    EvalReport report;
    report.concerts.push_back(scores);
    const std::string rendered = opt.table ? report_table(report) : report_json(report);
    std::fputs(rendered.c_str(), stdout);

    if (!opt.json_out.empty()) {
        write_text(opt.json_out, report_json(report));
        json cfg;
        cfg["command"] = "evaluate";
        cfg["est"] = opt.est_csv;
        cfg["gt"] = opt.gt_csv;
        cfg["tols"] = tols;
        if (!opt.est_tempo.empty()) {
            cfg["est_tempo"] = opt.est_tempo;
            cfg["gt_tempo"] = opt.gt_tempo;
            cfg["tempo_tol"] = opt.tempo_tol;
        }
        cfg["name"] = scores.concert_id;
        cfg["json"] = opt.json_out;
        write_config(config_sibling(opt.json_out), cfg);
    }
    return 0;
}

} // namespace
} // namespace laykari

int main(int argc, char** argv) {
    using namespace laykari;

    CLI::App app{"Surface tempo and structure analysis for Dhrupad bandish recordings"};
    app.require_subcommand(1);

    SynthOpts so;
    CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic concert corpus");
    synth->add_option("--spec", so.spec_path, "Concert spec JSON")->required();
    synth->add_option("--out", so.out_dir, "Output corpus directory")->required();
    synth->add_option("--jobs", so.jobs, "Worker threads");

    TrainOpts to;
    CLI::App* train = app.add_subcommand("train", "Train per-stream fold models");
    train->add_option("--data", to.data_dirs, "Concert directories")->required();
    train->add_option("--out", to.out_dir, "Model output directory")->required();
    train->add_option("--stream", to.streams, "Streams to train (default: all three)");
    train->add_option("--variant", to.variant, "Model variant name");
    train->add_option("--folds", to.folds, "Cross-validation folds");
    train->add_option("--seed", to.seed, "Master RNG seed");
    train->add_option("--lr", to.lr, "Adam learning rate");
    train->add_option("--batch", to.batch, "Batch size");
    train->add_option("--epochs", to.epochs, "Epoch cap");
    train->add_option("--patience", to.patience, "Early-stopping patience");
    train->add_option("--target-per-class", to.target_per_class,
                      "Examples per class (0: median base count)");
    train->add_option("--jobs", to.jobs, "Worker threads for feature extraction");

    TempoOpts po;
    CLI::App* tempo = app.add_subcommand("tempo", "Estimate the metric tempo track");
    tempo->add_option("--audio", po.audio_path, "Input WAV")->required();
    tempo->add_option("--out", po.out_csv, "Output CSV")->required();
    tempo->add_option("--lo", po.lo, "Tempo range low (BPM)");
    tempo->add_option("--hi", po.hi, "Tempo range high (BPM)");
    tempo->add_option("--penalty", po.penalty, "Tempo jump penalty");

    AnalyseOpts ao;
    CLI::App* analyse = app.add_subcommand("analyse", "Full analysis of one recording");
    analyse->add_option("--audio", ao.audio_path, "Mixture WAV")->required();
    analyse->add_option("--vocal", ao.vocal_path, "Vocal stem WAV");
    analyse->add_option("--pakhawaj", ao.pakhawaj_path, "Pakhawaj stem WAV");
    analyse->add_option("--models", ao.models_dir, "Model directory")->required();
    analyse->add_option("--out", ao.out_dir, "Output directory")->required();
    analyse->add_option("--variant", ao.variant, "Model variant (default: from model_config.json)");
    analyse->add_option("--seg", ao.seg, "Section assembly mode (1 or 2)");
    analyse->add_option("--net-mode", ao.net_mode, "Net label source for seg 1: model|max");
    analyse->add_option("--min-dur", ao.min_dur, "Minimum section duration (s)");
    analyse->add_option("--lo", ao.lo, "Tempo range low (BPM)");
    analyse->add_option("--hi", ao.hi, "Tempo range high (BPM)");
    analyse->add_option("--penalty", ao.penalty, "Tempo jump penalty");
    analyse->add_flag("--plot", ao.plot, "Write plot.bmp with tracks and sections");

    EvaluateOpts eo;
    CLI::App* evaluate = app.add_subcommand("evaluate", "Score estimated against reference sections");
    evaluate->add_option("--est", eo.est_csv, "Estimated sections CSV")->required();
    evaluate->add_option("--gt", eo.gt_csv, "Reference sections CSV")->required();
    evaluate->add_option("--tol", eo.tols, "Boundary tolerance in seconds (repeatable)");
    evaluate->add_option("--est-tempo", eo.est_tempo, "Estimated tempo CSV");
    evaluate->add_option("--gt-tempo", eo.gt_tempo, "Reference tempo CSV");
    evaluate->add_option("--tempo-tol", eo.tempo_tol, "Relative tempo tolerance");
    evaluate->add_option("--name", eo.name, "Concert id in the report");
    evaluate->add_option("--json", eo.json_out, "Also write the JSON report to this file");
    evaluate->add_flag("--table", eo.table, "Print a table instead of JSON");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*synth) return cmd_synth(so);
        if (*train) return cmd_train(to);
        if (*tempo) return cmd_tempo(po);
        if (*analyse) return cmd_analyse(ao);
        if (*evaluate) return cmd_evaluate(eo);
    } catch (const Error& e) {
        std::fprintf(stderr, "laykari: %s\n", e.what());
        return 1;
    } catch (const json::exception& e) {
        std::fprintf(stderr, "laykari: %s\n", e.what());
        return 1;
    }
    return 0;
}
