// Copyright (C) 2026 The haar-strands Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "autodiff/gradcheck.hpp"
#include "codec.hpp"
#include "synthetic.hpp"
#include "test_support.hpp"

using namespace haar;

namespace {

CodecConfig small_config() {
    CodecConfig c;
    c.points = 10;
    c.latent = 8;
    c.hidden = 32;
    c.epochs = 5;
    c.batch = 16;
    c.seed = 3;
    return c;
}

HairMap small_map(uint64_t seed) {
    auto grid = hemisphere_grid(6, 6);
    return synthetic_hairstyle(grid, StrandStyle{}, seed, 10);
}

}  // namespace

TEST_CASE("default latent size and parameter shapes") {
    CodecConfig c;
    auto p = init_codec(c);
    CHECK(p.latent == 64);
    CHECK(p.points == 100);
    CHECK(p.weights.size() == 14);
    auto z = encode(p, synthetic_strand(StrandStyle{}, 100));
    CHECK(z.size() == 64);
    CHECK_THROWS_AS(encode(p, synthetic_strand(StrandStyle{}, 50)), Error);
    CHECK_THROWS_AS(init_codec(CodecConfig{1, 64}), Error);
}

TEST_CASE("zero weights expose the head biases") {
    auto p = init_codec(small_config());
    for (size_t i = 0; i < p.weights.size(); ++i)
        if (p.weights.names[i].find(".weight") != std::string::npos)
            for (auto& v : p.weights.tensors[i].data) v = 0.0f;
    const auto& mu_bias = p.weights.tensors[5].data;
    const auto& lv_bias = p.weights.tensors[7].data;
    REQUIRE(p.weights.names[5] == "enc.mu.bias");
    REQUIRE(p.weights.names[7] == "enc.logvar.bias");
    Rng rng(4);
    Strand s = haar::test::line_strand({0, 0, 1}, 0.3, 10);
    CHECK(encode(p, s) == mu_bias);

    auto z = encode(p, s, EncodeMode::Sample, 99);
    Rng eps(99);
    for (size_t c = 0; c < z.size(); ++c)
        CHECK(z[c] == static_cast<float>(mu_bias[c] + std::exp(0.5 * lv_bias[c]) * eps.normal()));
    CHECK(encode(p, s, EncodeMode::Sample, 99) == z);
    CHECK(encode(p, s, EncodeMode::Sample, 98) != z);
}

TEST_CASE("decode is deterministic and pins the root") {
    auto p = init_codec(small_config());
    Rng rng(5);
    for (int k = 0; k < 20; ++k) {
        std::vector<float> z(8);
        for (auto& v : z) v = static_cast<float>(rng.normal() * 3);
        auto a = decode(p, z), b = decode(p, z);
        CHECK(a.points == b.points);
        CHECK(a.points.size() == 10);
        CHECK(a.points[0] == Vec3{0, 0, 0});
        CHECK(a.space == Space::Local);
    }
    std::vector<float> bad(8, 0.0f);
    bad[3] = NAN;
    CHECK_THROWS_AS(decode(p, bad), Error);
    bad[3] = INFINITY;
    CHECK_THROWS_AS(decode(p, bad), Error);
    CHECK_THROWS_AS(decode(p, std::vector<float>(7)), Error);
}

TEST_CASE("closed-form KL") {
    CHECK(kl_divergence({0, 0}, {0, 0}) == 0.0);
    CHECK(kl_divergence({1}, {0}) == doctest::Approx(0.5));
    CHECK(kl_divergence({0}, {static_cast<float>(std::log(2.0))}) == doctest::Approx(0.5 * (1 - std::log(2.0))).epsilon(1e-6));
    Rng rng(6);
    for (int k = 0; k < 200; ++k) {
        std::vector<float> mu(5), lv(5);
        for (auto& v : mu) v = static_cast<float>(rng.normal(0, 2));
        for (auto& v : lv) v = static_cast<float>(rng.normal(0, 2));
        CHECK(kl_divergence(mu, lv) >= 0.0);
    }
    CHECK_THROWS_AS(kl_divergence({0}, {0, 0}), Error);
}

TEST_CASE("codec loss gradient matches finite differences") {
    CodecConfig c;
    c.points = 4;
    c.latent = 3;
    c.hidden = 5;
    c.seed = 7;
    auto p = init_codec(c);
    Rng rng(8);
    ad::Tape<double> tape;
    auto w = nn::bind(tape, p.weights, true);
    auto x = tape.constant(haar::test::random_tensor<double>({3, 12}, rng));
    auto eps = tape.constant(haar::test::random_tensor<double>({3, 3}, rng));
    auto l = codec_graph::loss(w, x, eps, 0.3);
    auto rep = ad::finite_diff_check(tape, l.total, w);
    CHECK(rep.passed);
    CHECK(rep.max_rel_error < 1e-4);

    // KL graph term agrees with the closed form on the encoder heads
    auto heads = codec_graph::encoder(w, x);
    double kl = 0;
    for (int r = 0; r < 3; ++r) {
        std::vector<float> mu(3), lv(3);
        for (int k = 0; k < 3; ++k) {
            mu[static_cast<size_t>(k)] = static_cast<float>(heads.mu.value().data[static_cast<size_t>(r * 3 + k)]);
            lv[static_cast<size_t>(k)] = static_cast<float>(heads.logvar.value().data[static_cast<size_t>(r * 3 + k)]);
        }
        kl += kl_divergence(mu, lv);
    }
    CHECK(l.kl.value().data[0] == doctest::Approx(kl / 3).epsilon(1e-5));
}

TEST_CASE("training overfits one repeated strand without KL") {
    CodecConfig c = small_config();
    c.beta = 0;
    c.epochs = 500;
    c.batch = 1;
    c.lr = 5e-3;
    Strand s = synthetic_strand(StrandStyle{}, 10);
    std::vector<Strand> data(4, s);
    std::vector<CodecEpoch> report;
    auto p = train_codec(data, c, &report);
    REQUIRE(report.size() == 500);
    CHECK(report.back().recon < 1e-4 * report.front().recon);
    auto back = decode(p, encode(p, s));
    for (size_t k = 0; k < back.points.size(); ++k)
        for (int d = 0; d < 3; ++d) CHECK(std::abs(back.points[k][static_cast<size_t>(d)] - s.points[k][static_cast<size_t>(d)]) < 1e-3);
}

TEST_CASE("training lowers the loss, keeps KL nonnegative and is reproducible") {
    CodecConfig c = small_config();
    c.epochs = 12;
    auto data = synthetic_strands(200, 1, 10);
    std::vector<CodecEpoch> r1, r2;
    auto p1 = train_codec(data, c, &r1);
    auto p2 = train_codec(data, c, &r2);
    CHECK(r1.back().loss < r1.front().loss);
    for (const auto& e : r1) CHECK(e.min_kl >= -1e-6);
    CHECK(r1.back().loss == r2.back().loss);
    CHECK(p1 == p2);
    c.seed = 4;
    CHECK_FALSE(train_codec(data, c) == p1);

    int calls = 0;
    train_codec(data, c, nullptr, [&](int epoch, const CodecEpoch&) { CHECK(epoch == calls++); });
    CHECK(calls == 12);

    CHECK_THROWS_AS(train_codec({data[0]}, c), Error);
    auto mixed = data;
    mixed[5] = synthetic_strand(StrandStyle{}, 11);
    CHECK_THROWS_AS(train_codec(mixed, c), Error);
}

TEST_CASE("batched encode and decode equal the single-strand forms") {
    CodecConfig c = small_config();
    c.epochs = 2;
    auto p = train_codec(synthetic_strands(64, 2, 10), c);
    auto strands = synthetic_strands(9, 3, 10);
    std::vector<uint64_t> seeds;
    for (uint64_t k = 0; k < 9; ++k) seeds.push_back(100 + k);
    auto zb = encode_batch(p, strands, EncodeMode::Sample, seeds);
    auto db = decode_batch(p, zb, 9);
    for (size_t r = 0; r < 9; ++r) {
        auto z = encode(p, strands[r], EncodeMode::Sample, seeds[r]);
        CHECK(std::equal(z.begin(), z.end(), zb.begin() + static_cast<std::ptrdiff_t>(r * 8)));
        CHECK(decode(p, z).points == db[r].points);
    }
}

TEST_CASE("map encode and decode work per texel") {
    CodecConfig c = small_config();
    c.epochs = 2;
    auto p = train_codec(synthetic_strands(64, 2, 10), c);
    auto map = small_map(5);
    REQUIRE(map.strand_count() > 0);

    auto zm = encode_map(p, map);
    CHECK(zm.width() == 6);
    CHECK(zm.channels() == 8);
    CHECK(zm.mask() == map.mask());
    auto zs = encode_map(p, map, EncodeMode::Sample, 77);
    auto back = decode_map(p, zm);
    CHECK(back.mask() == map.mask());
    for (int64_t t = 0; t < map.texels(); ++t) {
        if (!map.has(t)) {
            for (int ch = 0; ch < 8; ++ch) CHECK(zm.at(ch, t) == 0.0f);
            continue;
        }
        CHECK(zm.latent(t) == encode(p, map.strand(t)));
        CHECK(zs.latent(t) == encode(p, map.strand(t), EncodeMode::Sample, mix_seed(77, static_cast<uint64_t>(t))));
        auto single = decode(p, zm.latent(t));
        for (auto& q : single.points)
            for (auto& v : q) v = static_cast<float>(v);
        CHECK(back.strand(t).points == single.points);
    }

    LatentMap wrong(6, 6, 7, map.mask());
    CHECK_THROWS_AS(decode_map(p, wrong), Error);
    CodecConfig other = small_config();
    other.points = 12;
    CHECK_THROWS_AS(encode_map(init_codec(other), map), Error);

    auto grid = hemisphere_grid(6, 6);
    auto world = map_to_world(back, grid);
    CHECK(world.size() == static_cast<size_t>(back.strand_count()));
    for (size_t s = 0; s < world.size(); ++s) {
        auto t = back.texel_of_slot(static_cast<int64_t>(s));
        CHECK(world[s].points[0] == grid.frames[static_cast<size_t>(t)].origin);
    }
    CHECK_THROWS_AS(map_to_world(back, hemisphere_grid(5, 6)), Error);
}
