// Copyright (C) 2026 The haar-strands Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "codec.hpp"
#include "latent.hpp"
#include "strand.hpp"

namespace haar {

/// Cosine between the flattened root offsets of two strands; 1 when either
/// offset vector is zero.
double strand_cosine_similarity(const Strand& a, const Strand& b);

/// 1 - 1.63 x^5 for x <= 0.9, 0.4 - 0.4 x above, clamped to [0, 1].
double blend_weight(double x);

struct UpsampleOptions {
    int width = 512;
    int height = 512;
    bool noise = false;
    uint64_t seed = 0;
};

/// Target texel (i', j') samples guide coordinate (i' W / W', j' H / H'), so
/// guide texels land exactly on targets whose index is a multiple of W'/W.
/// Each value is bilinear + f(x) * (nearest - bilinear), where x is the
/// smallest pairwise similarity among the enclosing guides' strands.
/// `guides[t]` is the decoded strand of guide texel t (ignored when masked).
LatentMap upsample_with_guides(const LatentMap& z, const std::vector<Strand>& guides, const UpsampleOptions& opt);

/// Decodes the guide strands with `codec`, then upsamples.
LatentMap upsample(const LatentMap& z, const CodecParams& codec, const UpsampleOptions& opt);

/// Adds sd_c * X * Y to every valid texel, where sd_c is the per-channel
/// standard deviation over valid texels, X ~ N(0.15, 0.05^2) and Y = +-1
/// with equal odds. X and Y are drawn once per texel from a stream keyed by
/// (seed, texel) and shared by all channels.
LatentMap inject_noise(const LatentMap& z, uint64_t seed);

/// The per-texel (X, Y) pair used by inject_noise.
std::pair<double, double> noise_gate(uint64_t seed, int64_t texel);

std::vector<double> channel_stddev(const LatentMap& z);

}  // namespace haar
