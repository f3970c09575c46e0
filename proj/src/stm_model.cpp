// Copyright 2026 The Laykari Authors
//
// Licensed under the Apache License, Version 2.0

#include "laykari/stm_model.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include <json.hpp>

namespace laykari {

namespace {

using Tensor4f = nn::Tensor4<float>;

constexpr char kMagic[4] = {'S', 'T', 'M', 'W'};
constexpr uint32_t kVersion = 1;

void write_u32(std::ofstream& out, uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }
void write_u64(std::ofstream& out, uint64_t v) { out.write(reinterpret_cast<const char*>(&v), 8); }

void read_exact(std::ifstream& in, void* dst, size_t n, const std::string& path) {
    in.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<size_t>(in.gcount()) != n) throw FormatError(path + ": truncated weights file");
}

uint32_t read_u32(std::ifstream& in, const std::string& path) {
    uint32_t v = 0;
    read_exact(in, &v, 4, path);
    return v;
}

uint64_t read_u64(std::ifstream& in, const std::string& path) {
    uint64_t v = 0;
    read_exact(in, &v, 8, path);
    return v;
}

Tensor4f to_batch(const std::vector<const MelExample*>& batch) {
    nn::Tensor4<float> x(static_cast<int>(batch.size()), 1, MelExample::kMels, MelExample::kFrames);
    for (size_t i = 0; i < batch.size(); ++i) {
        if (!batch[i]) throw ValidationError("null example in batch");
        if (batch[i]->values.size() != static_cast<size_t>(MelExample::kMels) * MelExample::kFrames) {
            throw ValidationError("example is not a 40x400 block");
        }
        std::copy(batch[i]->values.begin(), batch[i]->values.end(),
                  x.v.begin() + static_cast<size_t>(i) * MelExample::kMels * MelExample::kFrames);
    }
    return x;
}

} // namespace

void ModelConfig::validate() const {
    const int n = n_classes();
    if (n != 4 && n != 5) {
        throw ConfigError("class count must be 4 or 5, got " + std::to_string(n));
    }
    for (size_t i = 0; i < class_values.size(); ++i) {
        if (class_values[i] <= 0) throw ConfigError("class values must be positive");
        if (i > 0 && class_values[i] <= class_values[i - 1]) {
            throw ConfigError("class values must be strictly ascending");
        }
    }
    if (n_mf_modules != 1 && n_mf_modules != 3) {
        throw ConfigError("multi-filter module count must be 1 or 3, got " +
                          std::to_string(n_mf_modules));
    }
    if (mf_kernel_lens.empty()) throw ConfigError("at least one multi-filter kernel length needed");
    for (int k : mf_kernel_lens) {
        if (k < 1 || k > MelExample::kFrames) {
            throw ConfigError("multi-filter kernel length " + std::to_string(k) + " out of range");
        }
    }
    if (dropout_p_early < 0.0 || dropout_p_early >= 1.0 || dropout_p_late < 0.0 ||
        dropout_p_late >= 1.0) {
        throw ConfigError("dropout probabilities must be in [0, 1)");
    }
}

std::string ModelConfig::canonical() const {
    std::string s = "classes=";
    for (size_t i = 0; i < class_values.size(); ++i) {
        if (i) s += ',';
        s += std::to_string(class_values[i]);
    }
    s += ";mf=" + std::to_string(n_mf_modules) + ";kernels=";
    for (size_t i = 0; i < mf_kernel_lens.size(); ++i) {
        if (i) s += ',';
        s += std::to_string(mf_kernel_lens[i]);
    }
    char buf[64];
    std::snprintf(buf, sizeof(buf), ";early_do=%d;final_pool=%d;p_early=%.6f;p_late=%.6f",
                  early_dropout ? 1 : 0, final_avgpool ? 1 : 0, dropout_p_early, dropout_p_late);
    s += buf;
    return s;
}

uint64_t ModelConfig::fingerprint() const {
    uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : canonical()) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

ModelConfig variant_config(const std::string& name, int n_classes) {
    ModelConfig cfg;
    if (n_classes == 4) {
        cfg.class_values = {1, 2, 4, 8};
    } else if (n_classes == 5) {
        cfg.class_values = {1, 2, 4, 8, 16};
    } else {
        throw ConfigError("variant presets support 4 or 5 classes, got " + std::to_string(n_classes));
    }
    const std::vector<int> small{4, 6, 8, 12};
    const std::vector<int> large{16, 32, 64, 96};
    if (name == "1.a") {
        cfg.mf_kernel_lens = small;
    } else if (name == "1.b") {
        cfg.mf_kernel_lens = small;
        cfg.n_mf_modules = 3;
    } else if (name == "2.a") {
        cfg.mf_kernel_lens = large;
    } else if (name == "2.b") {
        cfg.mf_kernel_lens = large;
        cfg.n_mf_modules = 3;
    } else if (name == "3") {
        cfg.mf_kernel_lens = large;
        cfg.early_dropout = false;
    } else if (name == "4") {
        cfg.mf_kernel_lens = large;
        cfg.final_avgpool = false;
    } else {
        throw ConfigError("unknown model variant '" + name + "'");
    }
    return cfg;
}

void TrainConfig::validate() const {
    if (!(lr >= 0.0)) throw ConfigError("learning rate must be non-negative");
    if (batch_size < 1) throw ConfigError("batch size must be positive");
    if (max_epochs < 1) throw ConfigError("epoch limit must be positive");
    if (patience < 1) throw ConfigError("patience must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
        throw ConfigError("Adam betas must be in [0, 1)");
    }
}

Model build_model(const ModelConfig& cfg, uint64_t seed) {
    Model m;
    m.cfg = cfg;
    m.net = build_net<float>(cfg, seed);
    return m;
}

long count_params(const ModelConfig& cfg) {
    nn::Net<float> net = build_net<float>(cfg, 0);
    return static_cast<long>(net.param_count());
}

std::vector<float> forward(Model& model, const MelExample& example, bool train) {
    std::vector<const MelExample*> batch{&example};
    return forward_batch(model, batch, train)[0];
}

std::vector<std::vector<float>> forward_batch(Model& model,
                                              const std::vector<const MelExample*>& batch,
                                              bool train) {
    if (batch.empty()) throw ValidationError("empty batch");
    Tensor4f logits = model.net.forward(to_batch(batch), train);
    std::vector<float> probs = nn::softmax_rows(logits);
    std::vector<std::vector<float>> out(batch.size());
    const int n_cls = model.cfg.n_classes();
    for (size_t i = 0; i < batch.size(); ++i) {
        out[i].assign(probs.begin() + static_cast<ptrdiff_t>(i) * n_cls,
                      probs.begin() + static_cast<ptrdiff_t>(i + 1) * n_cls);
    }
    return out;
}

namespace {

std::vector<std::vector<float>> snapshot(nn::Net<float>& net) {
    std::vector<std::vector<float>> out;
    for (auto& t : net.tensors()) out.push_back(*t.value);
    return out;
}

void restore(nn::Net<float>& net, const std::vector<std::vector<float>>& snap) {
    auto refs = net.tensors();
    for (size_t i = 0; i < refs.size(); ++i) *refs[i].value = snap[i];
}

int argmax_row(const float* p, int n) {
    int best = 0;
    for (int c = 1; c < n; ++c) {
        if (p[c] > p[best]) best = c;
    }
    return best;
}

// Mean loss and accuracy over a fixed example list, eval mode, batched.
std::pair<double, double> evaluate_split(Model& model, const std::vector<MelExample>& xs,
                                         const std::vector<int>& ys, int batch_size) {
    double loss_sum = 0.0;
    long correct = 0;
    const int n_cls = model.cfg.n_classes();
    for (size_t start = 0; start < xs.size(); start += static_cast<size_t>(batch_size)) {
        const size_t stop = std::min(xs.size(), start + static_cast<size_t>(batch_size));
        std::vector<const MelExample*> batch;
        std::vector<int> labels;
        for (size_t i = start; i < stop; ++i) {
            batch.push_back(&xs[i]);
            labels.push_back(ys[i]);
        }
        Tensor4f logits = model.net.forward(to_batch(batch), false);
        loss_sum +=
            nn::cross_entropy<float>(logits, labels, nullptr) * static_cast<double>(labels.size());
        for (size_t i = 0; i < labels.size(); ++i) {
            if (argmax_row(logits.v.data() + i * n_cls, n_cls) == labels[i]) ++correct;
        }
    }
    return {loss_sum / static_cast<double>(xs.size()),
            static_cast<double>(correct) / static_cast<double>(xs.size())};
}

} // namespace

TrainHistory train(Model& model, const std::vector<MelExample>& train_x,
                   const std::vector<int>& train_y, const std::vector<MelExample>& val_x,
                   const std::vector<int>& val_y, const TrainConfig& tc) {
    tc.validate();
    if (train_x.empty()) throw ValidationError("training set is empty");
    if (val_x.empty()) throw ValidationError("validation set is empty");
    if (train_x.size() != train_y.size() || val_x.size() != val_y.size()) {
        throw ValidationError("example/label count mismatch");
    }
    const int n_cls = model.cfg.n_classes();
    for (int y : train_y) {
        if (y < 0 || y >= n_cls) throw ValidationError("train label index out of range");
    }
    for (int y : val_y) {
        if (y < 0 || y >= n_cls) throw ValidationError("val label index out of range");
    }

    model.net.reseed(tc.rng_seed);
    std::mt19937_64 shuffle_rng(tc.rng_seed ^ 0x9e3779b97f4a7c15ULL);
    auto params = model.net.params();
    nn::Adam<float> opt(tc.lr, tc.beta1, tc.beta2, tc.eps);

    TrainHistory hist;
    double best_val = std::numeric_limits<double>::infinity();
    std::vector<std::vector<float>> best;
    int since_best = 0;

    std::vector<size_t> order(train_x.size());
    std::iota(order.begin(), order.end(), size_t{0});

    for (int epoch = 0; epoch < tc.max_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double loss_sum = 0.0;
        long correct = 0;
        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(tc.batch_size)) {
            const size_t stop = std::min(order.size(), start + static_cast<size_t>(tc.batch_size));
            std::vector<const MelExample*> batch;
            std::vector<int> labels;
            for (size_t i = start; i < stop; ++i) {
                batch.push_back(&train_x[order[i]]);
                labels.push_back(train_y[order[i]]);
            }
            Tensor4f logits = model.net.forward(to_batch(batch), true);
            Tensor4f dlogits;
            const double loss = nn::cross_entropy(logits, labels, &dlogits);
            loss_sum += loss * static_cast<double>(labels.size());
            for (size_t i = 0; i < labels.size(); ++i) {
                if (argmax_row(logits.v.data() + i * n_cls, n_cls) == labels[i]) ++correct;
            }
            model.net.zero_grad();
            model.net.backward(std::move(dlogits));
            opt.step(params);
        }

        EpochStats stats;
        stats.train_loss = loss_sum / static_cast<double>(train_x.size());
        stats.train_acc = static_cast<double>(correct) / static_cast<double>(train_x.size());
        auto [vl, va] = evaluate_split(model, val_x, val_y, tc.batch_size);
        stats.val_loss = vl;
        stats.val_acc = va;
        hist.epochs.push_back(stats);

        if (vl < best_val) {
            best_val = vl;
            best = snapshot(model.net);
            hist.best_epoch = epoch;
            since_best = 0;
        } else {
            ++since_best;
            if (since_best >= tc.patience) break;
        }
    }
    if (!best.empty()) restore(model.net, best);
    return hist;
}

void save_weights(const Model& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out.write(kMagic, 4);
    write_u32(out, kVersion);
    write_u64(out, model.cfg.fingerprint());
    write_u32(out, static_cast<uint32_t>(model.cfg.n_classes()));
    for (int v : model.cfg.class_values) write_u32(out, static_cast<uint32_t>(v));

    nlohmann::json meta(model.metadata);
    const std::string meta_str = meta.dump();
    write_u32(out, static_cast<uint32_t>(meta_str.size()));
    out.write(meta_str.data(), static_cast<std::streamsize>(meta_str.size()));

    auto refs = const_cast<Model&>(model).net.tensors();
    write_u32(out, static_cast<uint32_t>(refs.size()));
    for (auto& r : refs) {
        write_u32(out, static_cast<uint32_t>(r.name.size()));
        out.write(r.name.data(), static_cast<std::streamsize>(r.name.size()));
        write_u32(out, static_cast<uint32_t>(r.shape.size()));
        for (int d : r.shape) write_u32(out, static_cast<uint32_t>(d));
        out.write(reinterpret_cast<const char*>(r.value->data()),
                  static_cast<std::streamsize>(r.value->size() * sizeof(float)));
    }
    if (!out) throw IoError("failed writing '" + path + "'");
}

Model load_weights(const std::string& path, const ModelConfig& cfg) {
    cfg.validate();
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    char magic[4];
    read_exact(in, magic, 4, path);
    if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError(path + ": not a model weights file");
    const uint32_t version = read_u32(in, path);
    if (version != kVersion) {
        throw FormatError(path + ": unsupported weights version " + std::to_string(version));
    }
    const uint64_t fp = read_u64(in, path);
    if (fp != cfg.fingerprint()) {
        throw FormatError(path + ": architecture fingerprint mismatch (file " + std::to_string(fp) +
                          ", config " + std::to_string(cfg.fingerprint()) + ")");
    }
    const uint32_t n_cls = read_u32(in, path);
    if (n_cls != static_cast<uint32_t>(cfg.n_classes())) {
        throw FormatError(path + ": class count mismatch");
    }
    for (int v : cfg.class_values) {
        if (read_u32(in, path) != static_cast<uint32_t>(v)) {
            throw FormatError(path + ": class value mismatch");
        }
    }

    const uint32_t meta_len = read_u32(in, path);
    std::string meta_str(meta_len, '\0');
    read_exact(in, meta_str.data(), meta_len, path);
    Model model = build_model(cfg, 0);
    try {
        const nlohmann::json meta = nlohmann::json::parse(meta_str);
        for (auto it = meta.begin(); it != meta.end(); ++it) {
            model.metadata[it.key()] = it.value().get<std::string>();
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path + ": bad metadata block: " + e.what());
    }

    auto refs = model.net.tensors();
    const uint32_t n_tensors = read_u32(in, path);
    if (n_tensors != refs.size()) {
        throw FormatError(path + ": tensor count mismatch (file " + std::to_string(n_tensors) +
                          ", architecture " + std::to_string(refs.size()) + ")");
    }
    for (auto& r : refs) {
        const uint32_t name_len = read_u32(in, path);
        std::string name(name_len, '\0');
        read_exact(in, name.data(), name_len, path);
        if (name != r.name) {
            throw FormatError(path + ": tensor '" + name + "' where '" + r.name + "' expected");
        }
        const uint32_t ndim = read_u32(in, path);
        if (ndim != r.shape.size()) throw FormatError(path + ": rank mismatch for '" + name + "'");
        size_t numel = 1;
        for (uint32_t d = 0; d < ndim; ++d) {
            const uint32_t dim = read_u32(in, path);
            if (dim != static_cast<uint32_t>(r.shape[d])) {
                throw FormatError(path + ": shape mismatch for '" + name + "'");
            }
            numel *= dim;
        }
        read_exact(in, r.value->data(), numel * sizeof(float), path);
    }
    return model;
}

} // namespace laykari
