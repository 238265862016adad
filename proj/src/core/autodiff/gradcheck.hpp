// Copyright (C) 2026 The haar-strands Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "tape.hpp"

namespace haar::ad {

struct GradCheckReport {
    double max_rel_error = 0.0;
    /// Op with the largest error; empty when every check passed.
    std::string failing_op;
    int failing_node = -1;
    int64_t coordinates_checked = 0;
    bool passed = true;
};

struct GradCheckOptions {
    double tolerance = 1e-4;
    double step = 1e-5;
    int max_coords = 64;
    uint64_t seed = 0;
    /// Denominator floor: err = |a-b| / max(|a|, |b|, floor).
    double floor = 1e-3;
};

/// Relative error used by every check.
double rel_error(double analytic, double numeric, double floor);

/// Central-difference check of a recorded double-precision tape.
///
/// Two passes: the gradient of `loss` with respect to each parameter is
/// compared against differences of the replayed loss, on at most
/// `max_coords` seeded coordinates per parameter; then every recorded op is
/// checked in isolation with a random cotangent, which localises a faulty
/// backward to the op that owns it.
GradCheckReport finite_diff_check(Tape<double>& tape, Var<double> loss, const std::vector<Var<double>>& params,
                                  const GradCheckOptions& options = {});

}  // namespace haar::ad
