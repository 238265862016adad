// Copyright (C) 2026 The haar-strands Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "autodiff/gradcheck.hpp"
#include "diffusion.hpp"
#include "test_support.hpp"

using namespace haar;
using haar::test::random_tensor;

namespace {

PromptEmbedding random_embedding(int tokens, int dim, Rng& rng) {
    PromptEmbedding e(tokens, dim, Provenance::External);
    for (auto& v : e.data) v = static_cast<float>(rng.normal());
    return e;
}

DenoiserParams tiny_denoiser(uint64_t seed, bool zero_network) {
    auto p = make_denoiser(haar::test::tiny_unet(), seed, 0.5);
    if (!zero_network) {
        Rng rng(seed + 100);
        for (auto& v : p.weights.tensors[p.weights.size() - 2].data) v = static_cast<float>(rng.uniform(-0.2, 0.2));
    }
    return p;
}

}  // namespace

TEST_CASE("preconditioner closed forms") {
    auto p = precondition(0.5, 0.5);
    CHECK(p.c_skip == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(p.c_out == doctest::Approx(0.353553390593).epsilon(1e-11));
    CHECK(p.c_in == doctest::Approx(1.414213562373).epsilon(1e-11));
    CHECK(p.c_noise == doctest::Approx(0.25 * std::log(0.5)));

    auto z = precondition(1e-12, 0.7);
    CHECK(std::abs(z.c_skip - 1.0) < 1e-9);
    CHECK(std::abs(z.c_out) < 1e-9);
    CHECK(precondition(0.0, 0.7).c_out == 0.0);
    CHECK(std::isinf(precondition(0.0, 0.7).c_noise));

    Rng rng(1);
    for (int k = 0; k < 1000; ++k) {
        double s = std::exp(rng.uniform(std::log(0.002), std::log(80.0)));
        double sd = rng.uniform(0.1, 2.0);
        auto c = precondition(s, sd);
        CHECK(std::abs(c.c_in * std::sqrt(s * s + sd * sd) - 1.0) < 1e-12);
        CHECK(c.c_in > 0);
        CHECK(c.c_out > 0);
        // c_skip + c_out^2 / sd^2 = 1
        CHECK(c.c_skip + c.c_out * c.c_out / (sd * sd) == doctest::Approx(1.0).epsilon(1e-12));
    }
    CHECK_THROWS_AS(precondition(1.0, 0.0), Error);
    CHECK_THROWS_AS(precondition(-1.0, 0.5), Error);
}

TEST_CASE("Karras noise grid") {
    NoiseSchedule sched;
    CHECK(sched.steps == 50);
    auto s = sched.sigmas();
    REQUIRE(s.size() == 51);
    CHECK(s[0] == 80.0);
    CHECK(s[49] == doctest::Approx(0.002).epsilon(1e-12));
    CHECK(s[50] == 0.0);
    const double hi = std::pow(80.0, 1 / 7.0), lo = std::pow(0.002, 1 / 7.0);
    for (int i = 0; i < 50; ++i) CHECK(s[static_cast<size_t>(i)] == doctest::Approx(std::pow(hi + i / 49.0 * (lo - hi), 7.0)).epsilon(1e-12));
    for (size_t i = 0; i + 1 < s.size(); ++i) {
        CHECK(s[i + 1] < s[i]);
        double up = std::sqrt(s[i + 1] * s[i + 1] * (s[i] * s[i] - s[i + 1] * s[i + 1]) / (s[i] * s[i]));
        CHECK(up <= s[i + 1]);
    }
    NoiseSchedule one{0.002, 80, 7, 1};
    CHECK(one.sigmas() == std::vector<double>{80.0, 0.0});
    CHECK_THROWS_AS((NoiseSchedule{0.002, 80, 7, 0}.sigmas()), Error);
    CHECK_THROWS_AS((NoiseSchedule{1, 0.5, 7, 10}.sigmas()), Error);
}

TEST_CASE("soft Min-SNR weight") {
    CHECK(min_snr_weight(0.5, 0.5, 5.0) == doctest::Approx(5.0 / 6.0));
    CHECK(min_snr_weight(1.0, 0.5, 5.0) == doctest::Approx(5 * 0.25 / 5.25));
    // the grid runs from high to low noise, so the weight rises
    double prev = 0;
    for (double s : NoiseSchedule{}.sigmas()) {
        if (s == 0) continue;
        double w = min_snr_weight(s, 0.5);
        CHECK(std::isfinite(w));
        CHECK(w > 0);
        CHECK(w <= 5.0);
        CHECK(w > prev);
        prev = w;
    }
    CHECK(min_snr_weight(1e-6, 0.5) == doctest::Approx(5.0).epsilon(1e-9));
    CHECK(min_snr_weight(1e3, 0.5) == doctest::Approx(0.25e-6).epsilon(1e-5));
    CHECK_THROWS_AS(min_snr_weight(0, 0.5), Error);
}

TEST_CASE("map subsampling") {
    Rng rng(2);
    auto big = haar::test::random_latent(256, 256, 2, rng, 0.6);
    auto small = subsample_map(big, 8, 3, 5);
    CHECK(small.width() == 32);
    CHECK(small.height() == 32);
    for (int k = 0; k < 200; ++k) {
        int i = static_cast<int>(rng.below(32)), j = static_cast<int>(rng.below(32));
        auto src = big.index(8 * i + 3, 8 * j + 5);
        CHECK(small.has(small.index(i, j)) == big.has(src));
        CHECK(small.at(1, small.index(i, j)) == big.at(1, src));
    }
    auto z = haar::test::random_latent(32, 32, 3, rng, 0.7);
    CHECK(subsample_map(z, 1, 0, 0) == z);

    LatentMap c(16, 16, 2, std::vector<uint8_t>(256, 1));
    for (auto& v : c.data()) v = 0.25f;
    auto cs = subsample_map(c, 4, 1, 2);
    for (float v : cs.data()) CHECK(v == 0.25f);

    CHECK_THROWS_AS(subsample_map(c, 4, 4, 0), Error);
    CHECK_THROWS_AS(subsample_map(c, 4, 0, -1), Error);
    CHECK_THROWS_AS(subsample_map(c, 3, 0, 0), Error);
    CHECK_THROWS_AS(subsample_map(c, 0, 0, 0), Error);
}

TEST_CASE("guidance combination") {
    Rng rng(3);
    std::vector<float> cond(1000), uncond(1000);
    for (auto& v : cond) v = static_cast<float>(rng.normal() * 100);
    for (auto& v : uncond) v = static_cast<float>(rng.normal() * 1e-3);
    CHECK(cfg_combine(cond, uncond, 0.0) == uncond);
    CHECK(cfg_combine(cond, uncond, 1.0) == cond);
    CHECK(cfg_combine({1.0f}, {0.0f}, 1.5) == std::vector<float>{1.5f});
    auto mid = cfg_combine(cond, uncond, 1.5);
    for (size_t i = 0; i < mid.size(); ++i) CHECK(mid[i] == doctest::Approx(uncond[i] + 1.5 * (cond[i] - uncond[i])).epsilon(1e-6));
    CHECK_THROWS_AS(cfg_combine({1.0f}, {1.0f, 2.0f}, 1.0), Error);
}

TEST_CASE("zero-network denoiser is the skip scaling") {
    auto p = tiny_denoiser(1, true);
    Rng rng(4);
    auto z = random_tensor<float>({3, 2, 4, 4}, rng, -5, 5);
    auto ctx = random_tensor<float>({3, 2, 4}, rng);
    std::vector<double> sigma{0.01, 0.5, 40.0};
    auto d = denoise(p, p.weights, z, sigma, ctx);
    for (size_t n = 0; n < 3; ++n) {
        float cs = static_cast<float>(precondition(sigma[n], 0.5).c_skip);
        for (size_t i = 0; i < 32; ++i) CHECK(d.data[n * 32 + i] == cs * z.data[n * 32 + i]);
    }
    auto z2 = z;
    for (auto& v : z2.data) v *= 2.0f;
    auto d2 = denoise(p, p.weights, z2, sigma, ctx);
    for (size_t i = 0; i < d.data.size(); ++i) CHECK(d2.data[i] == 2.0f * d.data[i]);

    auto q = tiny_denoiser(1, false);
    auto a = denoise(q, q.weights, z, sigma, ctx), b = denoise(q, q.weights, z, sigma, ctx);
    CHECK(a.data == b.data);
    CHECK(a.data != d.data);
    CHECK_THROWS_AS(denoise(p, p.weights, z, {0.5, 0.5}, ctx), Error);
    CHECK_THROWS_AS(denoise(p, p.weights, z, {0.5, 0.0, 1.0}, ctx), Error);
}

TEST_CASE("denoiser graph agrees with the inference path and has correct gradients") {
    auto p = tiny_denoiser(2, false);
    Rng rng(5);
    auto z = random_tensor<float>({2, 2, 4, 4}, rng);
    auto ctx = random_tensor<float>({2, 3, 4}, rng);
    std::vector<double> sigma{0.2, 3.0};
    ad::Tape<float> tape;
    auto w = nn::bind(tape, p.weights, false);
    auto g = denoise_graph(p.config, w, tape.constant(z), sigma, tape.constant(ctx), p.sigma_data);
    auto d = denoise(p, p.weights, z, sigma, ctx);
    for (size_t i = 0; i < d.data.size(); ++i) CHECK(g.value().data[i] == doctest::Approx(d.data[i]).epsilon(1e-5));

    ad::Tape<double> dt;
    auto dw = nn::bind(dt, p.weights, true);
    auto clean = random_tensor<double>({2, 2, 4, 4}, rng), eps = random_tensor<double>({2, 2, 4, 4}, rng);
    ad::Tensor<double> mask({2, 1, 4, 4}, 1.0);
    mask.data[3] = 0;
    auto loss = diffusion_loss_graph(p.config, dw, clean, eps, sigma, dt.constant(ctx.cast<double>()), mask, 0.5, 5.0);
    auto rep = ad::finite_diff_check(dt, loss, dw);
    INFO("failing op " << rep.failing_op << " err " << rep.max_rel_error);
    CHECK(rep.passed);
    CHECK(rep.max_rel_error < 1e-4);
}

TEST_CASE("loss of the zero network matches a direct sum") {
    auto p = tiny_denoiser(3, true);
    Rng rng(6);
    auto clean = random_tensor<double>({2, 2, 4, 4}, rng), eps = random_tensor<double>({2, 2, 4, 4}, rng);
    ad::Tensor<double> mask({2, 1, 4, 4}, 1.0);
    for (size_t t = 0; t < 32; t += 3) mask.data[t] = 0;
    std::vector<double> sigma{0.1, 2.0};
    ad::Tape<double> tape;
    auto w = nn::bind(tape, p.weights, false);
    auto loss = diffusion_loss_graph(p.config, w, clean, eps, sigma, tape.constant(random_tensor<double>({2, 1, 4}, rng)),
                                     mask, 0.5, 5.0);
    double expect = 0;
    for (size_t b = 0; b < 2; ++b) {
        double cs = precondition(sigma[b], 0.5).c_skip, lam = min_snr_weight(sigma[b], 0.5, 5.0);
        for (size_t c = 0; c < 2; ++c)
            for (size_t t = 0; t < 16; ++t) {
                size_t k = b * 32 + c * 16 + t;
                double diff = cs * (clean.data[k] + sigma[b] * eps.data[k]) - clean.data[k];
                expect += mask.data[b * 16 + t] * lam * diff * diff / 2;
            }
    }
    CHECK(loss.value().data[0] == doctest::Approx(expect).epsilon(1e-12));

    // a perfect denoiser: sigma -> 0 with zero noise gives D = Z
    auto zero_eps = ad::Tensor<double>(clean.shape, 0.0);
    auto perfect = diffusion_loss_graph(p.config, w, clean, zero_eps, {1e-9, 1e-9},
                                        tape.constant(ad::Tensor<double>({2, 1, 4}, 0.0)), mask, 0.5, 5.0);
    CHECK(perfect.value().data[0] < 1e-20);
}

TEST_CASE("training noise draws") {
    TrainConfig cfg;
    Rng rng(7);
    int nulls = 0;
    double sum = 0, sq = 0;
    const int n = 10000;
    for (int k = 0; k < n; ++k) {
        auto d = draw_noise(rng, cfg);
        nulls += d.null_context;
        double l = std::log(d.sigma);
        sum += l;
        sq += l * l;
    }
    CHECK(std::abs(nulls / double(n) - 0.1) <= 0.01);
    double mean = sum / n, sd = std::sqrt(sq / n - mean * mean);
    CHECK(mean == doctest::Approx(-1.2).epsilon(0.05));
    CHECK(sd == doctest::Approx(1.2).epsilon(0.05));
}

TEST_CASE("default training hyperparameters") {
    TrainConfig c;
    CHECK(c.batch == 8);
    CHECK(c.lr == 1e-4);
    CHECK(c.beta1 == 0.95);
    CHECK(c.beta2 == 0.999);
    CHECK(c.eps == 1e-6);
    CHECK(c.weight_decay == 1e-3);
    CHECK(c.null_prob == 0.1);
    CHECK(c.gamma == 5.0);
    CHECK(SampleOptions{}.guidance == 1.5);
}

TEST_CASE("sigma_data estimate") {
    LatentMap m(2, 2, 1, {1, 1, 1, 0});
    m.data() = {1, 3, 5, 100};
    CHECK(estimate_sigma_data({m}) == doctest::Approx(std::sqrt(8.0 / 3.0)));
    LatentMap flat(2, 2, 1, {1, 1, 1, 1});
    CHECK(estimate_sigma_data({flat}) == 0.5);
}

TEST_CASE("zero-network sampler follows the Euler ancestral recurrence") {
    auto p = tiny_denoiser(4, true);
    Rng rng(8);
    auto ctx = random_embedding(3, 4, rng);
    SampleOptions opt;
    opt.schedule.steps = 12;
    opt.guidance = 1.5;
    auto got = sample(p, ctx, opt, 99);

    auto sig = opt.schedule.sigmas();
    Rng r(99);
    std::vector<double> z(32);
    for (auto& v : z) v = sig[0] * r.normal();
    for (size_t i = 0; i + 1 < sig.size(); ++i) {
        double s = sig[i], sn = sig[i + 1];
        double cs = precondition(s, 0.5).c_skip;
        double up = std::sqrt(sn * sn * (s * s - sn * sn) / (s * s));
        double down = std::sqrt(sn * sn - up * up);
        for (auto& v : z) {
            double d = (v - cs * v) / s;
            v = v + d * (down - s);
            if (up > 0) v += up * r.normal();
        }
    }
    for (size_t e = 0; e < 32; ++e) CHECK(got.data()[e] == doctest::Approx(z[e]).epsilon(1e-4).scale(1e-6));
}

TEST_CASE("sampler determinism, guidance branches and batching") {
    auto p = tiny_denoiser(5, false);
    Rng rng(9);
    auto c1 = random_embedding(3, 4, rng), c2 = random_embedding(3, 4, rng);
    SampleOptions opt;
    opt.schedule.steps = 6;
    opt.use_ema = false;

    SampleStats st;
    auto a = sample(p, c1, opt, 7, &st);
    CHECK(st.cond_evals == 6);
    CHECK(st.uncond_evals == 6);
    CHECK(sample(p, c1, opt, 7) == a);
    CHECK_FALSE(sample(p, c1, opt, 8) == a);
    CHECK_FALSE(sample(p, c2, opt, 7) == a);

    opt.guidance = 0.0;
    SampleStats s0;
    auto u1 = sample(p, c1, opt, 7, &s0);
    CHECK(s0.cond_evals == 0);
    CHECK(s0.uncond_evals == 6);
    CHECK(sample(p, c2, opt, 7) == u1);
    CHECK(sample(p, PromptEmbedding::null(3, 4), opt, 7) == u1);

    opt.guidance = 1.0;
    SampleStats s1;
    auto k1 = sample(p, c1, opt, 7, &s1);
    CHECK(s1.uncond_evals == 0);
    CHECK(sample(p, PromptEmbedding::null(3, 4), opt, 7) == u1);

    opt.guidance = 1.5;
    auto batch = sample_batch(p, {c1, c2, c1}, opt, {7, 3, 7});
    CHECK(batch[0] == a);
    CHECK(batch[2] == a);
    CHECK(batch[1] == sample(p, c2, opt, 3));
    (void)k1;

    CHECK_THROWS_AS(sample(p, random_embedding(3, 5, rng), opt, 1), Error);
    opt.guidance = -1;
    CHECK_THROWS_AS(sample(p, c1, opt, 1), Error);
}

TEST_CASE("sampled maps carry the model mask") {
    auto p = tiny_denoiser(6, false);
    p.mask.assign(16, 1);
    p.mask[5] = 0;
    SampleOptions opt;
    opt.schedule.steps = 3;
    Rng rng(10);
    auto z = sample(p, random_embedding(2, 4, rng), opt, 1);
    CHECK(z.mask() == p.mask);
    CHECK(z.at(0, 5) == 0.0f);
    CHECK(z.at(1, 5) == 0.0f);
}

TEST_CASE("training: input checks, reproducibility and EMA") {
    auto c = haar::test::tiny_unet();
    Rng rng(11);
    std::vector<LatentMap> maps{haar::test::random_latent(4, 4, 2, rng, 0.8), haar::test::random_latent(4, 4, 2, rng, 0.8)};
    std::vector<PromptEmbedding> ctx{random_embedding(2, 4, rng), random_embedding(2, 4, rng)};
    TrainConfig cfg;
    cfg.iterations = 5;
    cfg.batch = 2;
    cfg.lr = 1e-3;
    cfg.seed = 3;
    std::vector<double> l1, l2;
    auto p1 = train_diffusion(maps, ctx, c, cfg, &l1);
    auto p2 = train_diffusion(maps, ctx, c, cfg, &l2);
    CHECK(l1.size() == 5);
    CHECK(l1 == l2);
    CHECK(p1 == p2);
    CHECK(p1.has_ema());
    CHECK_FALSE(p1.ema == p1.weights);
    CHECK(p1.sigma_data == doctest::Approx(estimate_sigma_data(maps)));
    std::vector<uint8_t> union_mask(16);
    for (size_t t = 0; t < 16; ++t) union_mask[t] = maps[0].mask()[t] | maps[1].mask()[t];
    CHECK(p1.mask == union_mask);
    CHECK(train_diffusion(maps, ctx, c, cfg, nullptr, {}, 0.9).sigma_data == 0.9);

    cfg.ema_decay = 0.0;
    auto p3 = train_diffusion(maps, ctx, c, cfg);
    CHECK(p3.ema == p3.weights);

    CHECK_THROWS_AS(train_diffusion({}, {}, c, cfg), Error);
    CHECK_THROWS_AS(train_diffusion(maps, {ctx[0]}, c, cfg), Error);
    CHECK_THROWS_AS(train_diffusion(maps, {random_embedding(2, 5, rng), ctx[1]}, c, cfg), Error);
    cfg.stride = 2;
    CHECK_THROWS_AS(train_diffusion(maps, ctx, c, cfg), Error);
    std::vector<LatentMap> big{haar::test::random_latent(8, 8, 2, rng)};
    CHECK_NOTHROW(train_diffusion(big, {ctx[0]}, c, cfg));
    cfg.stride = 1;
    cfg.null_prob = 1.5;
    CHECK_THROWS_AS(train_diffusion(maps, ctx, c, cfg), Error);
}

TEST_CASE("overfitting one map with the desk network") {
    UNetConfig c;
    c.image_size = 8;
    c.in_channels = 16;
    Rng rng(12);
    LatentMap map(8, 8, 16, std::vector<uint8_t>(64, 1));
    for (int ch = 0; ch < 16; ++ch)
        for (int j = 0; j < 8; ++j)
            for (int i = 0; i < 8; ++i) map.at(ch, map.index(i, j)) = static_cast<float>(std::cos(0.7 * i + 0.3 * ch) * std::sin(0.5 * j));
    auto emb = embed_text_builtin("long wavy hair");

    // fixed evaluation batch
    const std::vector<double> sigma{0.05, 0.3, 1.0, 3.0};
    ad::Tensor<float> clean = stack_maps({&map, &map, &map, &map});
    ad::Tensor<float> eps = random_tensor<float>(clean.shape, rng);
    for (auto& e : eps.data) e = static_cast<float>(rng.normal());
    ad::Tensor<float> mask({4, 1, 8, 8}, 1.0f);
    ad::Tensor<float> ctx = stack_contexts({&emb, &emb, &emb, &emb});
    auto eval = [&](const DenoiserParams& p) {
        ad::Tape<float> tape;
        auto w = nn::bind(tape, p.weights, false);
        return diffusion_loss_graph(c, w, clean, eps, sigma, tape.constant(ctx), mask, p.sigma_data, 5.0).value().data[0];
    };

    TrainConfig cfg;
    cfg.iterations = 500;
    cfg.batch = 4;
    cfg.lr = 1e-3;
    cfg.seed = 1;
    auto p = make_denoiser(c, cfg.seed, estimate_sigma_data({map}));
    const double initial = eval(p);
    std::vector<double> fixed;
    train_diffusion_steps(p, {map}, {emb}, cfg, nullptr, [&](int it, double) {
        if (it < 100) fixed.push_back(eval(p));
    });
    const double final_loss = eval(p);
    INFO("initial " << initial << " final " << final_loss);
    CHECK(final_loss < 0.01 * initial);

    REQUIRE(fixed.size() == 100);
    std::vector<double> smooth;
    for (size_t k = 0; k + 10 <= fixed.size(); ++k) {
        double s = 0;
        for (size_t i = k; i < k + 10; ++i) s += fixed[i];
        smooth.push_back(s / 10);
    }
    int rises = 0;
    for (size_t k = 1; k < smooth.size(); ++k) rises += smooth[k] > smooth[k - 1];
    INFO("smoothed rises " << rises);
    CHECK(rises == 0);
}
