// Copyright (C) 2026 The haar-strands Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <vector>

#include "conditioning.hpp"
#include "latent.hpp"
#include "unet.hpp"

namespace haar {

struct Preconditioners {
    double c_skip = 1, c_out = 0, c_in = 1, c_noise = 0;
};

/// c_skip = sd^2/(s^2+sd^2), c_out = s*sd/sqrt(s^2+sd^2), c_in = 1/sqrt(s^2+sd^2),
/// c_noise = ln(s)/4 (-inf at s = 0).
Preconditioners precondition(double sigma, double sigma_data);

struct NoiseSchedule {
    double sigma_min = 0.002;
    double sigma_max = 80.0;
    double rho = 7.0;
    int steps = 50;

    /// steps + 1 values: the Karras grid from sigma_max down to sigma_min, then 0.
    std::vector<double> sigmas() const;
};

/// gamma * SNR / (SNR + gamma) with SNR = sd^2 / s^2.
double min_snr_weight(double sigma, double sigma_data, double gamma = 5.0);

/// Texel (i, j) <- source (stride*i + ox, stride*j + oy); the mask follows.
LatentMap subsample_map(const LatentMap& z, int stride, int offset_x, int offset_y);

/// (1 - w) * uncond + w * cond, elementwise. Equal to uncond + w*(cond - uncond)
/// in exact arithmetic; this form returns each branch bit-for-bit at w = 0, 1.
std::vector<float> cfg_combine(const std::vector<float>& cond, const std::vector<float>& uncond, double w);

/// Dense (N, C, H, W) batch of latent maps.
ad::Tensor<float> stack_maps(const std::vector<const LatentMap*>& maps);
/// (N, T, d) batch of embeddings.
ad::Tensor<float> stack_contexts(const std::vector<const PromptEmbedding*>& ctx);

/// D(z, s, ctx) = c_skip z + c_out F(c_in z, c_noise, ctx) for a batch with
/// one noise level per sample.
template <class T>
ad::Var<T> denoise_graph(const UNetConfig& config, const std::vector<ad::Var<T>>& w, ad::Var<T> z_t,
                         const std::vector<double>& sigma, ad::Var<T> ctx, double sigma_data);

ad::Tensor<float> denoise(const DenoiserParams& p, const nn::ParamSet& weights, const ad::Tensor<float>& z_t,
                          const std::vector<double>& sigma, const ad::Tensor<float>& ctx);

/// Batch mean of lambda(s_b) * sum over valid texels of (D(z_b + s_b eps_b) - z_b)^2.
/// mask: (B, 1, H, W) of 0/1.
template <class T>
ad::Var<T> diffusion_loss_graph(const UNetConfig& config, const std::vector<ad::Var<T>>& w, const ad::Tensor<T>& clean,
                                const ad::Tensor<T>& eps, const std::vector<double>& sigma, ad::Var<T> ctx,
                                const ad::Tensor<T>& mask, double sigma_data, double gamma);

struct TrainConfig {
    int batch = 8;
    double lr = 1e-4;
    double beta1 = 0.95;
    double beta2 = 0.999;
    double eps = 1e-6;
    double weight_decay = 1e-3;
    int iterations = 1000;
    double ema_decay = 0.999;
    double null_prob = 0.1;
    double gamma = 5.0;
    int stride = 1;
    /// ln(sigma) ~ N(p_mean, p_std^2).
    double p_mean = -1.2;
    double p_std = 1.2;
    uint64_t seed = 0;
};

/// Draws of the training noise level and null-conditioning coin.
struct NoiseDraw {
    double sigma = 1.0;
    bool null_context = false;
};
NoiseDraw draw_noise(Rng& rng, const TrainConfig& cfg);

using TrainProgress = std::function<void(int iteration, double loss)>;

/// sigma_data <= 0 estimates it as the standard deviation of valid latents.
DenoiserParams train_diffusion(const std::vector<LatentMap>& maps, const std::vector<PromptEmbedding>& contexts,
                               const UNetConfig& unet, const TrainConfig& cfg, std::vector<double>* loss_curve = nullptr,
                               const TrainProgress& progress = {}, double sigma_data = 0.0);

/// Continues training existing parameters (the EMA shadow is created if absent).
void train_diffusion_steps(DenoiserParams& params, const std::vector<LatentMap>& maps,
                           const std::vector<PromptEmbedding>& contexts, const TrainConfig& cfg,
                           std::vector<double>* loss_curve = nullptr, const TrainProgress& progress = {});

double estimate_sigma_data(const std::vector<LatentMap>& maps);

struct SampleOptions {
    NoiseSchedule schedule;
    double guidance = 1.5;
    bool use_ema = true;
};

struct SampleStats {
    int cond_evals = 0;
    int uncond_evals = 0;
};

/// Euler ancestral sampling with classifier-free guidance. The initial
/// noise and every ancestral draw come from one stream seeded by `seed`.
LatentMap sample(const DenoiserParams& p, const PromptEmbedding& context, const SampleOptions& opt, uint64_t seed,
                 SampleStats* stats = nullptr);

/// Independent samples evaluated as one batch; element k equals
/// sample(p, contexts[k], opt, seeds[k]).
std::vector<LatentMap> sample_batch(const DenoiserParams& p, const std::vector<PromptEmbedding>& contexts,
                                    const SampleOptions& opt, const std::vector<uint64_t>& seeds,
                                    SampleStats* stats = nullptr);

}  // namespace haar
