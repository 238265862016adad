// Copyright (C) 2026 The haar-strands Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "strand.hpp"

namespace haar {

/// Componentwise scaling of local coordinates.
HairMap scale(const HairMap& h, const Vec3& factors);

/// Truncates every strand at `fraction` of its arc length and resamples it
/// back to L points. Fraction 1 returns the map unchanged.
HairMap cut(const HairMap& h, double fraction);

/// Adds a helix of radius `amplitude` (m) and `frequency` turns per metre
/// around each strand, orthogonal to the local tangent, ramped in linearly
/// over the first tenth of the strand. Phases come from (seed, texel).
HairMap curl(const HairMap& h, double amplitude, double frequency, uint64_t seed);

struct AugmentRanges {
    double scale_min = 0.85, scale_max = 1.15;
    double cut_min = 0.6, cut_max = 1.0;
    double curl_amplitude_min = 0.0, curl_amplitude_max = 0.01;
    double curl_frequency_min = 0.0, curl_frequency_max = 150.0;

    static AugmentRanges identity();
};

struct AugmentParams {
    Vec3 scale{1, 1, 1};
    double cut = 1.0;
    double amplitude = 0.0;
    double frequency = 0.0;
    uint64_t curl_seed = 0;
};

/// Parameters of variant `v` of base style `b`.
AugmentParams draw_augment(const AugmentRanges& r, uint64_t seed, size_t b, size_t v, size_t variants);
HairMap apply_augment(const HairMap& h, const AugmentParams& p);

/// |base| * variants maps, style-major: variants of base[0] first.
std::vector<HairMap> expand_dataset(const std::vector<HairMap>& base, int variants, const AugmentRanges& ranges,
                                    uint64_t seed);

}  // namespace haar
