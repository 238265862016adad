// Copyright (C) 2026 The haar-strands Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <limits>
#include <numeric>

#include "metrics.hpp"
#include "test_support.hpp"

using namespace haar;

namespace {

LatentMap scalar(double v) {
    LatentMap z(1, 1, 1, {1});
    z.at(0, 0) = static_cast<float>(v);
    return z;
}

std::vector<LatentMap> scalars(std::initializer_list<double> vs) {
    std::vector<LatentMap> out;
    for (double v : vs) out.push_back(scalar(v));
    return out;
}

// Brute-force metrics straight from their definitions, without tie handling.
struct Brute {
    double mmd = 0, cov = 0, nna = 0;
};

Brute brute(const std::vector<LatentMap>& g, const std::vector<LatentMap>& r) {
    auto D = [](const LatentMap& a, const LatentMap& b) {
        double s = 0;
        for (size_t i = 0; i < a.data().size(); ++i) {
            double e = double(a.data()[i]) - b.data()[i];
            s += e * e;
        }
        return s;
    };
    Brute out;
    for (const auto& y : r) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& x : g) best = std::min(best, D(x, y));
        out.mmd += best / static_cast<double>(r.size());
    }
    std::vector<bool> hit(r.size(), false);
    for (const auto& x : g) {
        size_t arg = 0;
        for (size_t j = 0; j < r.size(); ++j)
            if (D(x, r[j]) < D(x, r[arg])) arg = j;
        hit[arg] = true;
    }
    out.cov = static_cast<double>(std::count(hit.begin(), hit.end(), true)) / static_cast<double>(r.size());
    if (g.size() == r.size()) {
        std::vector<const LatentMap*> all;
        for (const auto& x : g) all.push_back(&x);
        for (const auto& y : r) all.push_back(&y);
        double correct = 0;
        for (size_t a = 0; a < all.size(); ++a) {
            double best = std::numeric_limits<double>::infinity();
            size_t arg = 0;
            for (size_t b = 0; b < all.size(); ++b)
                if (b != a && D(*all[a], *all[b]) < best) best = D(*all[a], *all[b]), arg = b;
            if ((a < g.size()) == (arg < g.size())) correct += 1;
        }
        out.nna = correct / static_cast<double>(all.size());
    }
    return out;
}

}  // namespace

TEST_CASE("latent distance") {
    CHECK(latent_distance(scalar(0), scalar(2)) == 4.0);
    Rng rng(1);
    auto x = haar::test::random_latent(4, 4, 3, rng, 0.6);
    auto y = x;
    for (int64_t t = 0; t < y.texels(); ++t)
        for (int c = 0; c < 3; ++c) y.at(c, t) = static_cast<float>(rng.normal());
    CHECK(latent_distance(x, x) == 0.0);
    CHECK(latent_distance(x, y) == latent_distance(y, x));
    double want = 0;
    for (int64_t t = 0; t < x.texels(); ++t)
        if (x.has(t))
            for (int c = 0; c < 3; ++c) want += (double(x.at(c, t)) - y.at(c, t)) * (double(x.at(c, t)) - y.at(c, t));
    CHECK(latent_distance(x, y) == doctest::Approx(want).epsilon(1e-14));
    auto other = haar::test::random_latent(4, 4, 3, rng, 0.6);
    CHECK_THROWS_AS(latent_distance(x, other), Error);
    CHECK_THROWS_AS(latent_distance(x, haar::test::random_latent(4, 4, 2, rng)), Error);
}

TEST_CASE("hand-computed scalar sets") {
    auto g = scalars({0.1, 2}), r = scalars({0, 0.8});
    CHECK(mmd(g, r) == doctest::Approx(0.25).epsilon(1e-7));
    CHECK(cov(g, r) == 1.0);
    CHECK(one_nna(g, r) == 0.0);
    CHECK(cov(scalars({0.1}), r) == 0.5);
    CHECK(one_nna(scalars({0, 0.1, 0.2}), scalars({100, 100.1, 100.2})) == 1.0);
}

TEST_CASE("identical sets") {
    Rng rng(2);
    std::vector<LatentMap> s;
    auto base = haar::test::random_latent(3, 3, 2, rng, 0.8);
    for (int k = 0; k < 6; ++k) {
        auto z = base;
        for (int64_t t = 0; t < z.texels(); ++t)
            for (int c = 0; c < 2; ++c)
                if (z.has(t)) z.at(c, t) = static_cast<float>(rng.normal());
        s.push_back(z);
    }
    CHECK(mmd(s, s) == 0.0);
    CHECK(cov(s, s) == 1.0);
    CHECK(one_nna(s, s) == 0.0);
    auto rep = evaluate_metrics(s, s);
    CHECK(rep.has_one_nna);
    CHECK(metrics_csv(rep) == "metric,value\nmmd,0\ncov,1\n1-nna,0\n");
    auto uneven = evaluate_metrics(s, std::vector<LatentMap>(s.begin(), s.begin() + 4));
    CHECK_FALSE(uneven.has_one_nna);
    CHECK(metrics_csv(uneven).find("1-nna") == std::string::npos);
}

TEST_CASE("random sets match brute force and ignore ordering") {
    Rng rng(3);
    auto make = [&](size_t n, double shift) {
        std::vector<LatentMap> out;
        for (size_t k = 0; k < n; ++k) {
            LatentMap z(2, 2, 3, {1, 1, 1, 1});
            for (auto& v : z.data()) v = static_cast<float>(rng.normal(shift, 1.0));
            out.push_back(z);
        }
        return out;
    };
    for (int trial = 0; trial < 20; ++trial) {
        auto g = make(7, 0.0), r = make(7, 0.5 * trial / 10.0);
        auto b = brute(g, r);
        double m = mmd(g, r), c = cov(g, r), n = one_nna(g, r);
        CHECK(m == doctest::Approx(b.mmd).epsilon(1e-12));
        CHECK(c == b.cov);
        CHECK(n == b.nna);
        CHECK(m >= 0.0);
        CHECK(n >= 0.0);
        CHECK(n <= 1.0);
        std::reverse(g.begin(), g.end());
        std::rotate(r.begin(), r.begin() + 3, r.end());
        CHECK(mmd(g, r) == doctest::Approx(m).epsilon(1e-14));
        CHECK(cov(g, r) == c);
        CHECK(one_nna(g, r) == n);
        auto g2 = make(4, 0.0);
        CHECK(cov(g2, r) == doctest::Approx(brute(g2, r).cov));
    }
}

TEST_CASE("metric argument checks") {
    auto s = scalars({1, 2});
    CHECK_THROWS_AS(mmd({}, s), Error);
    CHECK_THROWS_AS(cov(s, {}), Error);
    CHECK_THROWS_AS(one_nna(s, scalars({1})), Error);
    CHECK_THROWS_AS(one_nna({}, {}), Error);
    CHECK_THROWS_AS(evaluate_metrics({}, s), Error);
}
