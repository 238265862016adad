// Copyright (C) 2026 The haar-strands Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "strand.hpp"

namespace haar {

/// Procedural strand shape in the root-local frame (z = scalp normal).
struct StrandStyle {
    double length = 0.2;
    /// Initial tilt away from the normal, radians.
    double tilt = 0.3;
    /// Azimuth of the tilt and of the droop direction, radians.
    double heading = 0.0;
    /// Curvature pulling the strand towards the tangent plane, 1/m.
    double droop = 6.0;
    double wave_amplitude = 0.0;
    /// Waves per metre.
    double wave_frequency = 0.0;
    double curl_radius = 0.0;
    /// Turns per metre.
    double curl_frequency = 0.0;
    double phase = 0.0;
};

Strand synthetic_strand(const StrandStyle& style, int points);

/// Random style drawn from broad ranges of straight, wavy and curly hair.
StrandStyle random_style(Rng& rng);

/// Jitters a style slightly, as neighbouring strands of one hairstyle.
StrandStyle jitter_style(const StrandStyle& base, Rng& rng, double amount);

/// Hairstyle over every valid texel of `grid`: one base style, smoothly
/// varying heading across the scalp and per-strand jitter.
HairMap synthetic_hairstyle(const ScalpGrid& grid, const StrandStyle& base, uint64_t seed, int points);

/// `count` random strands of random styles, for codec training.
std::vector<Strand> synthetic_strands(int count, uint64_t seed, int points);

}  // namespace haar
