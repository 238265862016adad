// Copyright (C) 2026 The haar-strands Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "autodiff/ops.hpp"
#include "nn/params.hpp"

namespace haar {

struct UNetConfig {
    int image_size = 16;
    int in_channels = 64;
    int model_channels = 32;
    std::vector<int> channel_mult{1, 2};
    int num_res_blocks = 1;
    int num_heads = 4;
    /// Downsampling factors (1 = full resolution) that get a cross-attention block.
    std::vector<int> attention_resolutions{1, 2};
    int context_dim = 64;
    int norm_groups = 8;

    /// Throws InvalidArgument naming the violated constraint.
    void validate() const;

    /// Reference full-size configuration: 32x32x64 latents, 320 channels.
    static UNetConfig reference();

    friend bool operator==(const UNetConfig&, const UNetConfig&) = default;
};

enum class InitKind { Uniform, Zero, One };

struct ParamSpec {
    std::string name;
    ad::Shape shape;
    InitKind init = InitKind::Uniform;
    int64_t fan_in = 1;
};

/// Every learnable tensor in declaration order, derived by tracing the
/// network on a shape-only tape.
std::vector<ParamSpec> unet_layout(const UNetConfig& config);
int64_t unet_param_count(const UNetConfig& config);
/// Output shape for a (N, C, H, W) input, inferred without allocating weights.
ad::Shape unet_output_shape(const UNetConfig& config, const ad::Shape& input, int context_tokens);

/// Seeded initialization; the final output convolution is all zeros.
nn::ParamSet init_unet(const UNetConfig& config, uint64_t seed);

/// Learnable state of the denoiser plus an EMA shadow copy and the data
/// scale used by the preconditioners.
struct DenoiserParams {
    UNetConfig config;
    nn::ParamSet weights;
    nn::ParamSet ema;
    double sigma_data = 0.5;
    /// image_size^2 texel mask of generated maps; empty means every texel.
    std::vector<uint8_t> mask;

    bool has_ema() const { return !ema.tensors.empty(); }
    /// EMA weights when present, else the raw weights.
    const nn::ParamSet& sampling_weights() const { return has_ema() ? ema : weights; }

    friend bool operator==(const DenoiserParams& a, const DenoiserParams& b) {
        return a.config == b.config && a.weights == b.weights && a.ema == b.ema && a.sigma_data == b.sigma_data &&
               a.mask == b.mask;
    }
};

DenoiserParams make_denoiser(const UNetConfig& config, uint64_t seed, double sigma_data = 0.5);

/// Sinusoidal features of per-sample noise levels: (N, dim), cos half then sin half.
template <class T>
ad::Tensor<T> noise_features(const std::vector<double>& c_noise, int dim);

/// Multi-head softmax(Q K^T / sqrt(d_head)) V with Q = x Wq^T, K = ctx Wk^T,
/// V = ctx Wv^T. x: (B, N, d), ctx: (B, T, d_ctx), Wq: (d, d), Wk/Wv: (d, d_ctx).
template <class T>
ad::Var<T> cross_attention(ad::Var<T> x, ad::Var<T> ctx, ad::Var<T> wq, ad::Var<T> wk, ad::Var<T> wv, int heads);

/// F(x, c_noise, ctx). x: (N, C, H, W), ctx: (N, T, d_ctx), w bound in layout order.
template <class T>
ad::Var<T> unet_forward(const UNetConfig& config, const std::vector<ad::Var<T>>& w, ad::Var<T> x,
                        const std::vector<double>& c_noise, ad::Var<T> ctx);

/// Inference-only forward in single precision.
ad::Tensor<float> unet_eval(const UNetConfig& config, const nn::ParamSet& weights, const ad::Tensor<float>& x,
                            const std::vector<double>& c_noise, const ad::Tensor<float>& ctx);

}  // namespace haar
