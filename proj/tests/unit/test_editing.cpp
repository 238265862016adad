// Copyright (C) 2026 The haar-strands Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "autodiff/gradcheck.hpp"
#include "editing.hpp"
#include "test_support.hpp"

using namespace haar;

namespace {

PromptEmbedding random_embedding(int tokens, int dim, Rng& rng) {
    PromptEmbedding e(tokens, dim, Provenance::External);
    for (auto& v : e.data) v = static_cast<float>(rng.normal());
    return e;
}

DenoiserParams tiny_denoiser(uint64_t seed) {
    auto p = make_denoiser(haar::test::tiny_unet(), seed, 0.5);
    Rng rng(seed + 100);
    for (auto& v : p.weights.tensors[p.weights.size() - 2].data) v = static_cast<float>(rng.uniform(-0.2, 0.2));
    p.ema = p.weights;
    return p;
}

bool same_weights(const nn::ParamSet& a, const nn::ParamSet& b) {
    if (a.size() != b.size()) return false;
    for (size_t i = 0; i < a.size(); ++i)
        if (a.tensors[i].data != b.tensors[i].data) return false;
    return true;
}

struct Fixture {
    DenoiserParams p = tiny_denoiser(1);
    Rng rng{2};
    LatentMap z = haar::test::random_latent(4, 4, 2, rng, 0.8);
    PromptEmbedding e_tgt = random_embedding(3, 4, rng);
};

}  // namespace

TEST_CASE("reconstruction panel") {
    Fixture f;
    auto a = ReconstructionPanel::draw(f.z, 6, 9);
    auto b = ReconstructionPanel::draw(f.z, 6, 9);
    CHECK(a.sigma == b.sigma);
    CHECK(a.eps.data == b.eps.data);
    CHECK(a.eps.shape == ad::Shape{6, 2, 4, 4});
    CHECK_FALSE(ReconstructionPanel::draw(f.z, 6, 10).sigma == a.sigma);
    for (double s : a.sigma) CHECK(s > 0.0);
    CHECK_THROWS_AS(ReconstructionPanel::draw(f.z, 0, 9), Error);
}

TEST_CASE("embedding inversion gradient") {
    Fixture f;
    auto panel = ReconstructionPanel::draw(f.z, 3, 4);
    ad::Tape<double> tape;
    auto w = nn::bind(tape, f.p.weights, false);
    ad::Tensor<double> emb({3, 4});
    for (size_t i = 0; i < emb.data.size(); ++i) emb.data[i] = f.e_tgt.data[i];
    auto ev = tape.param(emb, "embedding");
    auto ctx = ad::concat(std::vector<ad::Var<double>>(3, ad::reshape(ev, {1, 3, 4})), 0);
    std::vector<const LatentMap*> maps(3, &f.z);
    ad::Tensor<double> mask({3, 1, 4, 4});
    for (int k = 0; k < 3; ++k)
        for (int64_t t = 0; t < 16; ++t) mask.data[static_cast<size_t>(k * 16 + t)] = f.z.has(t) ? 1.0 : 0.0;
    auto loss = diffusion_loss_graph(f.p.config, w, stack_maps(maps).cast<double>(), panel.eps.cast<double>(), panel.sigma,
                                     ctx, mask, f.p.sigma_data, 5.0);
    CHECK(loss.value()[0] == doctest::Approx(reconstruction_loss(f.p, f.p.weights, f.z, f.e_tgt, panel)).epsilon(1e-5));
    auto rep = ad::finite_diff_check(tape, loss, {ev});
    INFO("failing op " << rep.failing_op << " err " << rep.max_rel_error);
    CHECK(rep.passed);
    CHECK(rep.max_rel_error < 1e-4);
}

TEST_CASE("embedding inversion") {
    Fixture f;
    InversionConfig zero;
    zero.steps = 0;
    OptimizationResult r0;
    CHECK(invert_embedding(f.p, f.z, f.e_tgt, zero, &r0) == f.e_tgt);
    CHECK(r0.loss.empty());

    InversionConfig defaults;
    CHECK(defaults.steps == 1500);
    CHECK(defaults.lr == 1e-3);

    InversionConfig cfg;
    cfg.steps = 40;
    cfg.lr = 2e-2;
    cfg.seed = 3;
    OptimizationResult res;
    std::vector<double> seen;
    auto e_opt = invert_embedding(f.p, f.z, f.e_tgt, cfg, &res, [&](int, double l) { seen.push_back(l); });
    CHECK(res.loss.size() == 41);
    CHECK(seen == res.loss);
    CHECK(res.best_loss <= res.loss[0]);
    CHECK(res.best_loss < res.loss[0]);
    CHECK(res.loss[static_cast<size_t>(res.best_step)] == res.best_loss);
    for (double l : res.loss) CHECK(l >= res.best_loss);
    CHECK(e_opt.tokens == f.e_tgt.tokens);
    CHECK(e_opt.dim == f.e_tgt.dim);
    CHECK_FALSE(e_opt == f.e_tgt);
    auto panel = ReconstructionPanel::draw(f.z, cfg.panel, cfg.seed);
    CHECK(reconstruction_loss(f.p, f.p.sampling_weights(), f.z, e_opt, panel) == doctest::Approx(res.best_loss).epsilon(1e-5));

    OptimizationResult again;
    CHECK(invert_embedding(f.p, f.z, f.e_tgt, cfg, &again) == e_opt);
    CHECK(again.loss == res.loss);

    CHECK_THROWS_AS(invert_embedding(f.p, f.z, random_embedding(3, 5, f.rng), cfg), Error);
    CHECK_THROWS_AS(invert_embedding(f.p, haar::test::random_latent(8, 8, 2, f.rng), f.e_tgt, cfg), Error);
    cfg.lr = 0;
    CHECK_THROWS_AS(invert_embedding(f.p, f.z, f.e_tgt, cfg), Error);
}

TEST_CASE("fine-tuning for an edit") {
    Fixture f;
    FinetuneConfig zero;
    zero.steps = 0;
    auto same = finetune_for_edit(f.p, f.e_tgt, f.z, zero);
    CHECK(same_weights(same.weights, f.p.weights));
    CHECK(same_weights(same.ema, f.p.ema));

    FinetuneConfig defaults;
    CHECK(defaults.steps == 600);
    CHECK(defaults.lr == 1e-4);
    CHECK(defaults.beta1 == 0.95);
    CHECK(defaults.beta2 == 0.999);
    CHECK(defaults.eps == 1e-6);
    CHECK(defaults.weight_decay == 1e-3);

    FinetuneConfig cfg;
    cfg.steps = 15;
    cfg.lr = 1e-3;
    OptimizationResult res;
    auto tuned = finetune_for_edit(f.p, f.e_tgt, f.z, cfg, &res);
    CHECK_FALSE(tuned.has_ema());
    CHECK_FALSE(same_weights(tuned.weights, f.p.weights));
    CHECK(res.loss.size() == 16);
    CHECK(res.best_loss < res.loss[0]);
    auto panel = ReconstructionPanel::draw(f.z, cfg.panel, cfg.seed);
    CHECK(res.loss[0] == doctest::Approx(reconstruction_loss(f.p, f.p.sampling_weights(), f.z, f.e_tgt, panel)).epsilon(1e-6));
    CHECK(reconstruction_loss(tuned, tuned.weights, f.z, f.e_tgt, panel) == doctest::Approx(res.best_loss).epsilon(1e-5));
    CHECK(same_weights(finetune_for_edit(f.p, f.e_tgt, f.z, cfg).weights, tuned.weights));
    cfg.steps = -1;
    CHECK_THROWS_AS(finetune_for_edit(f.p, f.e_tgt, f.z, cfg), Error);
}

TEST_CASE("edit endpoints and prompt interpolation") {
    Fixture f;
    InversionConfig inv;
    inv.steps = 5;
    inv.lr = 1e-2;
    FinetuneConfig ft;
    ft.steps = 3;
    ft.lr = 1e-3;
    auto s = create_edit_session(f.p, f.z, f.e_tgt, inv, ft);
    CHECK(s.inversion.loss.size() == 6);
    CHECK(s.finetune.loss.size() == 4);
    CHECK(edit_embedding(s, 0.0) == s.e_opt);
    CHECK(edit_embedding(s, 1.0) == s.e_tgt);
    auto mid = edit_embedding(s, 0.25);
    for (size_t i = 0; i < mid.data.size(); ++i)
        CHECK(mid.data[i] == doctest::Approx(0.25 * s.e_tgt.data[i] + 0.75 * s.e_opt.data[i]).epsilon(1e-6));
    CHECK_THROWS_AS(edit_embedding(s, 1.1), Error);
    CHECK_THROWS_AS(edit(s, -0.5, SampleOptions{}, 1), Error);

    SampleOptions opt;
    opt.schedule.steps = 6;
    CHECK(edit(s, 0.0, opt, 7) == sample(s.params, s.e_opt, opt, 7));
    CHECK(edit(s, 1.0, opt, 7) == sample(s.params, s.e_tgt, opt, 7));

    auto e2 = random_embedding(3, 4, f.rng);
    std::vector<double> alphas{0, 0.25, 0.5, 0.75, 1};
    auto maps = interpolate_prompts(f.p, f.e_tgt, e2, alphas, opt, 11);
    CHECK(maps.size() == 5);
    CHECK(maps[0] == sample(f.p, f.e_tgt, opt, 11));
    CHECK(maps[4] == sample(f.p, e2, opt, 11));
    CHECK(maps[2] == sample(f.p, lerp_embeddings(f.e_tgt, e2, 0.5), opt, 11));
    CHECK(interpolate_prompts(f.p, f.e_tgt, e2, alphas, opt, 11) == maps);
    CHECK_FALSE(maps[1] == maps[3]);
    CHECK(interpolate_prompts(f.p, f.e_tgt, e2, {}, opt, 11).empty());
    CHECK_THROWS_AS(interpolate_prompts(f.p, f.e_tgt, e2, {1.5}, opt, 11), Error);
}
