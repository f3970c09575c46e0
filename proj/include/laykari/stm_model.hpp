// Copyright 2026 The Laykari Authors
//
// Licensed under the Apache License, Version 2.0
//
// Surface-tempo-multiple classifier: a small CNN over 40x400 log-mel
// excerpts. A "multi-filter" block applies several 1xk time convolutions in
// parallel and merges them with a 1x1 convolution, so one model sees pulse
// structure at several time scales.

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "laykari/features.hpp"
#include "laykari/nn.hpp"

namespace laykari {

struct ModelConfig {
    // Surface tempo multiples recognised by the classifier, ascending.
    std::vector<int> class_values{1, 2, 4, 8, 16};
    int n_mf_modules = 1;
    std::vector<int> mf_kernel_lens{16, 32, 64, 96};
    bool early_dropout = true;  // dropout after each of the three front conv blocks
    bool final_avgpool = true;  // 1x400 time pool before the dense head
    double dropout_p_early = 0.1;
    double dropout_p_late = 0.5;

    int n_classes() const { return static_cast<int>(class_values.size()); }
    void validate() const;
    // Canonical architecture string; hashed into saved weights so a file
    // cannot be loaded into a different architecture.
    std::string canonical() const;
    uint64_t fingerprint() const;
};

// Named presets: "1.a", "1.b", "2.a", "2.b", "3", "4".
// 1.x use kernels {4,6,8,12}; 2.x use {16,32,64,96}; ".b" variants stack three
// multi-filter blocks; "3" drops the early dropout of "2.a"; "4" drops the
// final time pool of "2.a".
ModelConfig variant_config(const std::string& name, int n_classes = 5);

struct TrainConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int batch_size = 32;
    int max_epochs = 500;
    int patience = 50; // epochs without val-loss improvement before stopping
    uint64_t rng_seed = 0;
    void validate() const;
};

struct EpochStats {
    double train_loss = 0.0;
    double train_acc = 0.0;
    double val_loss = 0.0;
    double val_acc = 0.0;
};

struct TrainHistory {
    std::vector<EpochStats> epochs;
    int best_epoch = -1; // epoch whose weights the model holds after train()
};

struct Model {
    ModelConfig cfg;
    nn::Net<float> net;
    // Free-form provenance (stream, held-out fold, training sections, ...);
    // round-trips through the weights file.
    std::map<std::string, std::string> metadata;
};

// Assembles the layer stack for any scalar type; f64 instantiation is used by
// the gradient checks.
template <typename T>
nn::Net<T> build_net(const ModelConfig& cfg, uint64_t seed) {
    cfg.validate();
    nn::Net<T> net;
    net.reseed(seed);
    auto& rng = net.rng();
    int name_idx = 0;
    auto bn_name = [&](int ch) {
        return std::make_unique<nn::BatchNorm<T>>("bn" + std::to_string(name_idx++), ch);
    };

    int ch = 1;
    for (int block = 0; block < 3; ++block) {
        net.add(bn_name(ch));
        net.add(std::make_unique<nn::Conv1xK<T>>("conv" + std::to_string(block), ch, 16, 5, rng));
        ch = 16;
        net.add(std::make_unique<nn::Elu<T>>());
        if (cfg.early_dropout) net.add(std::make_unique<nn::Dropout<T>>(cfg.dropout_p_early, rng));
    }
    for (int m = 0; m < cfg.n_mf_modules; ++m) {
        net.add(std::make_unique<nn::AvgPool<T>>(m == 0 ? 5 : 2, 1));
        net.add(bn_name(16));
        std::vector<std::unique_ptr<nn::Layer<T>>> branches;
        for (size_t ki = 0; ki < cfg.mf_kernel_lens.size(); ++ki) {
            branches.push_back(std::make_unique<nn::Conv1xK<T>>(
                "mf" + std::to_string(m) + "_k" + std::to_string(cfg.mf_kernel_lens[ki]), 16, 12,
                cfg.mf_kernel_lens[ki], rng));
        }
        net.add(std::make_unique<nn::ParallelConcat<T>>(std::move(branches)));
        net.add(std::make_unique<nn::Elu<T>>());
        net.add(std::make_unique<nn::Dropout<T>>(cfg.dropout_p_late, rng));
        net.add(std::make_unique<nn::Conv1xK<T>>(
            "mf" + std::to_string(m) + "_merge", 12 * static_cast<int>(cfg.mf_kernel_lens.size()),
            16, 1, rng));
        net.add(std::make_unique<nn::Elu<T>>());
    }
    const int freq_out = cfg.n_mf_modules == 1 ? 8 : 2;
    int time_out = MelExample::kFrames;
    if (cfg.final_avgpool) {
        net.add(std::make_unique<nn::AvgPool<T>>(1, MelExample::kFrames));
        time_out = 1;
    }
    net.add(bn_name(16));
    net.add(std::make_unique<nn::Dropout<T>>(cfg.dropout_p_late, rng));
    net.add(std::make_unique<nn::Dense<T>>("fc", 16 * freq_out * time_out, cfg.n_classes(), rng));
    return net;
}

Model build_model(const ModelConfig& cfg, uint64_t seed);
long count_params(const ModelConfig& cfg);

// Class probabilities for one excerpt (eval mode unless train is set).
std::vector<float> forward(Model& model, const MelExample& example, bool train = false);
std::vector<std::vector<float>> forward_batch(Model& model,
                                              const std::vector<const MelExample*>& batch,
                                              bool train);

// Mini-batch Adam with per-epoch reshuffling, early stopping on validation
// loss, and restoration of the best-epoch weights. Labels index into
// cfg.class_values.
TrainHistory train(Model& model, const std::vector<MelExample>& train_x,
                   const std::vector<int>& train_y, const std::vector<MelExample>& val_x,
                   const std::vector<int>& val_y, const TrainConfig& tc);

void save_weights(const Model& model, const std::string& path);
Model load_weights(const std::string& path, const ModelConfig& cfg);

} // namespace laykari
