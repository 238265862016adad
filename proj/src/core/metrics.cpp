// Copyright (C) 2026 The haar-strands Authors
// SPDX-License-Identifier: Apache-2.0

#include "metrics.hpp"

#include <cstdio>
#include <set>

namespace haar {

double latent_distance(const LatentMap& x, const LatentMap& y) {
    require(x.width() == y.width() && x.height() == y.height() && x.channels() == y.channels(), ErrorCode::Shape,
            "latent_distance: map shapes differ");
    require(x.mask() == y.mask(), ErrorCode::InvalidArgument, "latent_distance: masks differ");
    double d = 0;
    for (int c = 0; c < x.channels(); ++c)
        for (int64_t t = 0; t < x.texels(); ++t)
            if (x.has(t)) {
                double e = static_cast<double>(x.at(c, t)) - static_cast<double>(y.at(c, t));
                d += e * e;
            }
    return d;
}

std::vector<double> distance_matrix(const std::vector<LatentMap>& a, const std::vector<LatentMap>& b) {
    std::vector<double> d(a.size() * b.size());
    for (size_t i = 0; i < a.size(); ++i)
        for (size_t j = 0; j < b.size(); ++j) d[i * b.size() + j] = latent_distance(a[i], b[j]);
    return d;
}

double mmd_from(const std::vector<double>& d, size_t g, size_t r) {
    require(g > 0 && r > 0, ErrorCode::InvalidArgument, "mmd: empty set");
    double total = 0;
    for (size_t j = 0; j < r; ++j) {
        double best = d[j];
        for (size_t i = 1; i < g; ++i) best = std::min(best, d[i * r + j]);
        total += best;
    }
    return total / static_cast<double>(r);
}

double cov_from(const std::vector<double>& d, size_t g, size_t r) {
    require(g > 0 && r > 0, ErrorCode::InvalidArgument, "cov: empty set");
    std::set<size_t> covered;
    for (size_t i = 0; i < g; ++i) {
        size_t arg = 0;
        for (size_t j = 1; j < r; ++j)
            if (d[i * r + j] < d[i * r + arg]) arg = j;
        covered.insert(arg);
    }
    return static_cast<double>(covered.size()) / static_cast<double>(r);
}

double one_nna_from(const std::vector<double>& d_gr, const std::vector<double>& d_gg, const std::vector<double>& d_rr,
                    size_t n) {
    require(n > 0, ErrorCode::InvalidArgument, "1-NNA: empty set");
    // element k < n is generated[k]; k >= n is reference[k - n]
    auto dist = [&](size_t a, size_t b) {
        if (a < n && b < n) return d_gg[a * n + b];
        if (a >= n && b >= n) return d_rr[(a - n) * n + (b - n)];
        if (a < n) return d_gr[a * n + (b - n)];
        return d_gr[b * n + (a - n)];
    };
    size_t correct = 0;
    for (size_t a = 0; a < 2 * n; ++a) {
        size_t best = a == 0 ? 1 : 0;
        for (size_t b = 0; b < 2 * n; ++b)
            if (b != a && dist(a, b) < dist(a, best)) best = b;
        if ((a < n) == (best < n)) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(2 * n);
}

double mmd(const std::vector<LatentMap>& g, const std::vector<LatentMap>& r) {
    require(!g.empty() && !r.empty(), ErrorCode::InvalidArgument, "mmd: empty set");
    return mmd_from(distance_matrix(g, r), g.size(), r.size());
}

double cov(const std::vector<LatentMap>& g, const std::vector<LatentMap>& r) {
    require(!g.empty() && !r.empty(), ErrorCode::InvalidArgument, "cov: empty set");
    return cov_from(distance_matrix(g, r), g.size(), r.size());
}

double one_nna(const std::vector<LatentMap>& g, const std::vector<LatentMap>& r) {
    require(g.size() == r.size(), ErrorCode::InvalidArgument,
            "1-NNA needs equally sized sets, got " + std::to_string(g.size()) + " and " + std::to_string(r.size()));
    require(!g.empty(), ErrorCode::InvalidArgument, "1-NNA: empty set");
    return one_nna_from(distance_matrix(g, r), distance_matrix(g, g), distance_matrix(r, r), g.size());
}

MetricReport evaluate_metrics(const std::vector<LatentMap>& g, const std::vector<LatentMap>& r) {
    require(!g.empty() && !r.empty(), ErrorCode::InvalidArgument, "metrics: empty set");
    MetricReport rep;
    auto d = distance_matrix(g, r);
    rep.mmd = mmd_from(d, g.size(), r.size());
    rep.cov = cov_from(d, g.size(), r.size());
    if (g.size() == r.size()) {
        rep.one_nna = one_nna_from(d, distance_matrix(g, g), distance_matrix(r, r), g.size());
        rep.has_one_nna = true;
    }
    return rep;
}

std::string metrics_csv(const MetricReport& r) {
    char buf[256];
    std::string out = "metric,value\n";
    std::snprintf(buf, sizeof buf, "mmd,%.17g\ncov,%.17g\n", r.mmd, r.cov);
    out += buf;
    if (r.has_one_nna) {
        std::snprintf(buf, sizeof buf, "1-nna,%.17g\n", r.one_nna);
        out += buf;
    }
    return out;
}

}  // namespace haar
