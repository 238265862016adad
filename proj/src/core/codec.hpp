// Copyright (C) 2026 The haar-strands Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "autodiff/ops.hpp"
#include "latent.hpp"
#include "nn/params.hpp"
#include "strand.hpp"

namespace haar {

struct CodecConfig {
    int points = kDefaultStrandPoints;
    int latent = 64;
    int hidden = 256;
    double beta = 1e-4;
    /// Fraction of epochs over which the KL weight ramps linearly up to beta.
    double warmup = 0.1;
    int epochs = 100;
    int batch = 64;
    double lr = 1e-3;
    uint64_t seed = 0;
};

/// Encoder: flattened normalized L*3 coordinates -> two SiLU layers -> mu and
/// log-variance heads. Decoder: latent -> two SiLU layers -> L*3.
struct CodecParams {
    int points = 0;
    int latent = 0;
    int hidden = 0;
    double beta = 0.0;
    /// Per-coordinate normalization over the flattened L*3 strand vector.
    std::vector<float> mean, stddev;
    nn::ParamSet weights;

    friend bool operator==(const CodecParams& a, const CodecParams& b) {
        return a.points == b.points && a.latent == b.latent && a.hidden == b.hidden && a.beta == b.beta &&
               a.mean == b.mean && a.stddev == b.stddev && a.weights == b.weights;
    }
};

CodecParams init_codec(const CodecConfig& config);

struct CodecEpoch {
    double loss = 0, recon = 0, kl = 0;
    /// Smallest per-batch KL seen in the epoch.
    double min_kl = 0;
};

using CodecProgress = std::function<void(int epoch, const CodecEpoch&)>;

/// Minimizes mean squared normalized-coordinate error + beta * KL with Adam.
CodecParams train_codec(const std::vector<Strand>& dataset, const CodecConfig& config,
                        std::vector<CodecEpoch>* report = nullptr, const CodecProgress& progress = {});

enum class EncodeMode { Mean, Sample };

std::vector<float> encode(const CodecParams& p, const Strand& strand, EncodeMode mode = EncodeMode::Mean,
                          uint64_t seed = 0);
Strand decode(const CodecParams& p, const std::vector<float>& z);

/// Row-wise batched forms; row r of the result depends only on row r of the input.
std::vector<float> encode_batch(const CodecParams& p, const std::vector<Strand>& strands, EncodeMode mode,
                                const std::vector<uint64_t>& seeds);
std::vector<Strand> decode_batch(const CodecParams& p, const std::vector<float>& z, int64_t count);

/// Sample mode draws texel t with seed mix_seed(seed, t).
LatentMap encode_map(const CodecParams& p, const HairMap& map, EncodeMode mode = EncodeMode::Mean, uint64_t seed = 0);
HairMap decode_map(const CodecParams& p, const LatentMap& latents);

/// Local strands of a map carried to world space through the grid frames.
std::vector<Strand> map_to_world(const HairMap& map, const ScalpGrid& grid);

/// Closed-form KL(N(mu, exp(logvar)) || N(0, I)) summed over dimensions.
double kl_divergence(const std::vector<float>& mu, const std::vector<float>& logvar);

namespace codec_graph {

template <class T>
struct Heads {
    ad::Var<T> mu, logvar;
};

template <class T>
Heads<T> encoder(const std::vector<ad::Var<T>>& w, ad::Var<T> x);
template <class T>
ad::Var<T> decoder(const std::vector<ad::Var<T>>& w, ad::Var<T> z);

template <class T>
struct Loss {
    ad::Var<T> total, recon, kl;
};

/// x: normalized (B, 3L); eps: (B, M) reparametrization noise.
template <class T>
Loss<T> loss(const std::vector<ad::Var<T>>& w, ad::Var<T> x, ad::Var<T> eps, double beta);

}  // namespace codec_graph

}  // namespace haar
