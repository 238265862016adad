// Copyright (C) 2026 The haar-strands Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <vector>

#include "diffusion.hpp"

namespace haar {

/// Fixed set of (sigma, noise) draws from the training noise distribution.
/// Using one panel for every step makes the reconstruction objective a
/// deterministic function of the optimized quantity.
struct ReconstructionPanel {
    std::vector<double> sigma;
    ad::Tensor<float> eps;

    static ReconstructionPanel draw(const LatentMap& z, int size, uint64_t seed, const TrainConfig& dist = {});
};

struct InversionConfig {
    int steps = 1500;
    double lr = 1e-3;
    int panel = 8;
    uint64_t seed = 0;
    double gamma = 5.0;
};

struct FinetuneConfig {
    int steps = 600;
    double lr = 1e-4;
    double beta1 = 0.95, beta2 = 0.999, eps = 1e-6, weight_decay = 1e-3;
    int panel = 8;
    uint64_t seed = 1;
    double gamma = 5.0;
};

struct OptimizationResult {
    /// loss[k] is the objective at iterate k, k = 0..steps.
    std::vector<double> loss;
    double best_loss = 0;
    int best_step = 0;
};

using StepProgress = std::function<void(int step, double loss)>;

/// Reconstruction objective of `z_in` under conditioning `e`.
double reconstruction_loss(const DenoiserParams& p, const nn::ParamSet& weights, const LatentMap& z_in,
                           const PromptEmbedding& e, const ReconstructionPanel& panel, double gamma = 5.0);

/// Adam on the embedding with the model frozen; returns the best iterate.
PromptEmbedding invert_embedding(const DenoiserParams& p, const LatentMap& z_in, const PromptEmbedding& e_tgt,
                                 const InversionConfig& cfg, OptimizationResult* result = nullptr,
                                 const StepProgress& progress = {});

/// AdamW on the sampling weights with `e_opt` frozen. The result carries the
/// best iterate as its weights and no EMA copy.
DenoiserParams finetune_for_edit(const DenoiserParams& p, const PromptEmbedding& e_opt, const LatentMap& z_in,
                                 const FinetuneConfig& cfg, OptimizationResult* result = nullptr,
                                 const StepProgress& progress = {});

struct EditSession {
    LatentMap input;
    PromptEmbedding e_tgt, e_opt;
    DenoiserParams params;
    OptimizationResult inversion, finetune;
};

EditSession create_edit_session(const DenoiserParams& p, const LatentMap& z_in, const PromptEmbedding& e_tgt,
                                const InversionConfig& inv, const FinetuneConfig& ft,
                                const StepProgress& inversion_progress = {}, const StepProgress& finetune_progress = {});

/// eta * e_tgt + (1 - eta) * e_opt.
PromptEmbedding edit_embedding(const EditSession& s, double eta);

LatentMap edit(const EditSession& s, double eta, const SampleOptions& opt, uint64_t seed);

/// One sample per alpha conditioned on (1 - alpha) e1 + alpha e2, all with `seed`.
std::vector<LatentMap> interpolate_prompts(const DenoiserParams& p, const PromptEmbedding& e1, const PromptEmbedding& e2,
                                           const std::vector<double>& alphas, const SampleOptions& opt, uint64_t seed);

}  // namespace haar
