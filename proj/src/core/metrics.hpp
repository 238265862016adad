// Copyright (C) 2026 The haar-strands Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "latent.hpp"

namespace haar {

/// Sum of squared latent differences over valid texels. Masks must match.
double latent_distance(const LatentMap& x, const LatentMap& y);

/// Row-major |a| x |b| matrix of latent distances.
std::vector<double> distance_matrix(const std::vector<LatentMap>& a, const std::vector<LatentMap>& b);

// Ties are broken by the lowest index. For 1-NNA the index is global over
// the concatenation generated ++ reference.

double mmd(const std::vector<LatentMap>& generated, const std::vector<LatentMap>& reference);
double cov(const std::vector<LatentMap>& generated, const std::vector<LatentMap>& reference);
double one_nna(const std::vector<LatentMap>& generated, const std::vector<LatentMap>& reference);

/// Same metrics from precomputed distances: d_gr is |g| x |r|, d_gg and d_rr square.
double mmd_from(const std::vector<double>& d_gr, size_t g, size_t r);
double cov_from(const std::vector<double>& d_gr, size_t g, size_t r);
double one_nna_from(const std::vector<double>& d_gr, const std::vector<double>& d_gg, const std::vector<double>& d_rr,
                    size_t n);

struct MetricReport {
    double mmd = 0, cov = 0, one_nna = 0;
    bool has_one_nna = false;
};

MetricReport evaluate_metrics(const std::vector<LatentMap>& generated, const std::vector<LatentMap>& reference);
/// "metric,value" CSV with a header row.
std::string metrics_csv(const MetricReport& r);

}  // namespace haar
