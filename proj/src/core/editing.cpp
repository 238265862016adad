// Copyright (C) 2026 The haar-strands Authors
// SPDX-License-Identifier: Apache-2.0

#include "editing.hpp"

#include <cmath>

#include "autodiff/optim.hpp"

namespace haar {

using ad::Tape;
using ad::Tensor;
using ad::Var;

ReconstructionPanel ReconstructionPanel::draw(const LatentMap& z, int size, uint64_t seed, const TrainConfig& dist) {
    require(size >= 1, ErrorCode::InvalidArgument, "reconstruction panel needs at least one draw");
    ReconstructionPanel panel;
    Rng rng(mix_seed(seed, 0xED17));
    for (int k = 0; k < size; ++k) panel.sigma.push_back(std::exp(dist.p_mean + dist.p_std * rng.normal()));
    panel.eps = Tensor<float>({size, z.channels(), z.height(), z.width()});
    for (auto& e : panel.eps.data) e = static_cast<float>(rng.normal());
    return panel;
}

namespace {

struct Batch {
    Tensor<float> clean, mask;
};

Batch replicate(const DenoiserParams& p, const LatentMap& z, const ReconstructionPanel& panel) {
    const auto& c = p.config;
    require(z.width() == c.image_size && z.height() == c.image_size && z.channels() == c.in_channels, ErrorCode::Shape,
            "edit: input map does not match the model's " + std::to_string(c.image_size) + "x" +
                std::to_string(c.image_size) + "x" + std::to_string(c.in_channels) + " shape");
    require(panel.eps.rank() == 4 && panel.eps.dim(0) == static_cast<int64_t>(panel.sigma.size()) &&
                panel.eps.dim(1) == z.channels() && panel.eps.dim(2) == z.height() && panel.eps.dim(3) == z.width(),
            ErrorCode::Shape, "edit: reconstruction panel does not match the input map");
    const auto n = static_cast<int64_t>(panel.sigma.size());
    std::vector<const LatentMap*> maps(static_cast<size_t>(n), &z);
    Batch b{stack_maps(maps), Tensor<float>({n, 1, z.height(), z.width()})};
    for (int64_t k = 0; k < n; ++k)
        for (int64_t t = 0; t < z.texels(); ++t) b.mask.data[static_cast<size_t>(k * z.texels() + t)] = z.has(t) ? 1.0f : 0.0f;
    return b;
}

Tensor<float> context_batch(const PromptEmbedding& e, size_t n) {
    std::vector<const PromptEmbedding*> rows(n, &e);
    return stack_contexts(rows);
}

void check_finite(double v, const char* what, int step) {
    require(std::isfinite(v), ErrorCode::Numeric, std::string(what) + ": non-finite loss at step " + std::to_string(step));
}

}  // namespace

double reconstruction_loss(const DenoiserParams& p, const nn::ParamSet& weights, const LatentMap& z_in,
                           const PromptEmbedding& e, const ReconstructionPanel& panel, double gamma) {
    Batch b = replicate(p, z_in, panel);
    Tape<float> tape;
    auto w = nn::bind(tape, weights, false);
    auto loss = diffusion_loss_graph(p.config, w, b.clean, panel.eps, panel.sigma,
                                     tape.constant(context_batch(e, panel.sigma.size())), b.mask, p.sigma_data, gamma);
    return loss.value()[0];
}

PromptEmbedding invert_embedding(const DenoiserParams& p, const LatentMap& z_in, const PromptEmbedding& e_tgt,
                                 const InversionConfig& cfg, OptimizationResult* result, const StepProgress& progress) {
    require(cfg.steps >= 0 && cfg.lr > 0, ErrorCode::InvalidArgument, "invert_embedding: invalid steps or learning rate");
    require(e_tgt.dim == p.config.context_dim, ErrorCode::Shape, "invert_embedding: embedding width does not match the model");
    OptimizationResult res;
    PromptEmbedding e = e_tgt, best = e_tgt;
    if (cfg.steps == 0) {
        if (result) *result = res;
        return e_tgt;
    }
    const auto panel = ReconstructionPanel::draw(z_in, cfg.panel, cfg.seed);
    Batch b = replicate(p, z_in, panel);
    const nn::ParamSet& weights = p.sampling_weights();
    ad::OptimizerState<float> opt(ad::AdamConfig{cfg.lr, 0.9, 0.999, 1e-8, 0.0});
    Tensor<float> emb({e.tokens, e.dim}, e.data);
    double initial = 0;

    for (int step = 0; step <= cfg.steps; ++step) {
        Tape<float> tape;
        auto w = nn::bind(tape, weights, false);
        auto ev = tape.param(emb, "embedding");
        auto ctx = ad::concat(std::vector<Var<float>>(panel.sigma.size(), ad::reshape(ev, {1, e.tokens, e.dim})), 0);
        auto loss = diffusion_loss_graph(p.config, w, b.clean, panel.eps, panel.sigma, ctx, b.mask, p.sigma_data, cfg.gamma);
        double lv = loss.value()[0];
        check_finite(lv, "invert_embedding", step);
        if (step == 0) initial = lv;
        if (lv > 1e3 * initial) fail(ErrorCode::Numeric, "invert_embedding: diverged at step " + std::to_string(step));
        res.loss.push_back(lv);
        if (step == 0 || lv < res.best_loss) {
            res.best_loss = lv;
            res.best_step = step;
            best.data = emb.data;
        }
        if (progress) progress(step, lv);
        if (step == cfg.steps) break;
        auto g = tape.grad(loss, {ev});
        std::vector<Tensor<float>*> params{&emb};
        ad::adamw_step(opt, params, g);
    }
    best.provenance = Provenance::External;
    if (result) *result = res;
    return best;
}

DenoiserParams finetune_for_edit(const DenoiserParams& p, const PromptEmbedding& e_opt, const LatentMap& z_in,
                                 const FinetuneConfig& cfg, OptimizationResult* result, const StepProgress& progress) {
    require(cfg.steps >= 0 && cfg.lr > 0, ErrorCode::InvalidArgument, "finetune_for_edit: invalid steps or learning rate");
    OptimizationResult res;
    if (cfg.steps == 0) {
        if (result) *result = res;
        return p;
    }
    DenoiserParams out = p;
    out.weights = p.sampling_weights();
    out.ema = {};
    nn::ParamSet best = out.weights;
    const auto panel = ReconstructionPanel::draw(z_in, cfg.panel, cfg.seed);
    Batch b = replicate(p, z_in, panel);
    const Tensor<float> ctx = context_batch(e_opt, panel.sigma.size());
    ad::OptimizerState<float> opt(ad::AdamConfig{cfg.lr, cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay});
    double initial = 0;

    for (int step = 0; step <= cfg.steps; ++step) {
        Tape<float> tape;
        auto w = nn::bind(tape, out.weights, true);
        auto loss = diffusion_loss_graph(p.config, w, b.clean, panel.eps, panel.sigma, tape.constant(ctx), b.mask,
                                         p.sigma_data, cfg.gamma);
        double lv = loss.value()[0];
        check_finite(lv, "finetune_for_edit", step);
        if (step == 0) initial = lv;
        if (lv > 1e3 * initial) fail(ErrorCode::Numeric, "finetune_for_edit: diverged at step " + std::to_string(step));
        res.loss.push_back(lv);
        if (step == 0 || lv < res.best_loss) {
            res.best_loss = lv;
            res.best_step = step;
            best = out.weights;
        }
        if (progress) progress(step, lv);
        if (step == cfg.steps) break;
        auto g = tape.grad(loss, w);
        ad::adamw_step(opt, out.weights.pointers(), g);
    }
    out.weights = std::move(best);
    if (result) *result = res;
    return out;
}

EditSession create_edit_session(const DenoiserParams& p, const LatentMap& z_in, const PromptEmbedding& e_tgt,
                                const InversionConfig& inv, const FinetuneConfig& ft, const StepProgress& inversion_progress,
                                const StepProgress& finetune_progress) {
    EditSession s{z_in, e_tgt, {}, {}, {}, {}};
    s.e_opt = invert_embedding(p, z_in, e_tgt, inv, &s.inversion, inversion_progress);
    s.params = finetune_for_edit(p, s.e_opt, z_in, ft, &s.finetune, finetune_progress);
    return s;
}

PromptEmbedding edit_embedding(const EditSession& s, double eta) {
    require(eta >= 0 && eta <= 1, ErrorCode::InvalidArgument, "edit: eta must lie in [0,1]");
    return lerp_embeddings(s.e_opt, s.e_tgt, eta);
}

LatentMap edit(const EditSession& s, double eta, const SampleOptions& opt, uint64_t seed) {
    return sample(s.params, edit_embedding(s, eta), opt, seed);
}

std::vector<LatentMap> interpolate_prompts(const DenoiserParams& p, const PromptEmbedding& e1, const PromptEmbedding& e2,
                                           const std::vector<double>& alphas, const SampleOptions& opt, uint64_t seed) {
    if (alphas.empty()) return {};
    std::vector<PromptEmbedding> ctx;
    for (double a : alphas) ctx.push_back(lerp_embeddings(e1, e2, a));
    return sample_batch(p, ctx, opt, std::vector<uint64_t>(alphas.size(), seed));
}

}  // namespace haar
