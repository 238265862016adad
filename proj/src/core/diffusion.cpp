// Copyright (C) 2026 The haar-strands Authors
// SPDX-License-Identifier: Apache-2.0

#include "diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "autodiff/optim.hpp"

namespace haar {

using ad::Tape;
using ad::Tensor;
using ad::Var;

Preconditioners precondition(double sigma, double sigma_data) {
    require(sigma_data > 0, ErrorCode::InvalidArgument, "precondition: sigma_data must be positive");
    require(sigma >= 0, ErrorCode::InvalidArgument, "precondition: sigma must be non-negative");
    const double s2 = sigma * sigma, d2 = sigma_data * sigma_data;
    const double root = std::sqrt(s2 + d2);
    Preconditioners p;
    p.c_skip = d2 / (s2 + d2);
    p.c_out = sigma * sigma_data / root;
    p.c_in = 1.0 / root;
    p.c_noise = 0.25 * std::log(sigma);
    return p;
}

std::vector<double> NoiseSchedule::sigmas() const {
    require(steps >= 1, ErrorCode::InvalidArgument, "noise schedule needs at least one step");
    require(sigma_min > 0 && sigma_max > sigma_min && rho > 0, ErrorCode::InvalidArgument,
            "noise schedule needs 0 < sigma_min < sigma_max and rho > 0");
    std::vector<double> s(static_cast<size_t>(steps) + 1);
    const double lo = std::pow(sigma_min, 1.0 / rho), hi = std::pow(sigma_max, 1.0 / rho);
    for (int i = 0; i < steps; ++i) {
        double t = steps == 1 ? 0.0 : static_cast<double>(i) / (steps - 1);
        s[static_cast<size_t>(i)] = std::pow(hi + t * (lo - hi), rho);
    }
    s[0] = sigma_max;
    s.back() = 0.0;
    return s;
}

double min_snr_weight(double sigma, double sigma_data, double gamma) {
    require(sigma > 0 && sigma_data > 0 && gamma > 0, ErrorCode::InvalidArgument, "min_snr_weight: arguments must be positive");
    double snr = sigma_data * sigma_data / (sigma * sigma);
    return gamma * snr / (snr + gamma);
}

LatentMap subsample_map(const LatentMap& z, int stride, int ox, int oy) {
    require(stride >= 1, ErrorCode::InvalidArgument, "subsample_map: stride must be >= 1");
    require(ox >= 0 && oy >= 0 && ox < stride && oy < stride, ErrorCode::InvalidArgument,
            "subsample_map: offset (" + std::to_string(ox) + "," + std::to_string(oy) + ") outside [0," +
                std::to_string(stride) + ")");
    require(z.width() % stride == 0 && z.height() % stride == 0, ErrorCode::InvalidArgument,
            "subsample_map: stride " + std::to_string(stride) + " does not divide " + std::to_string(z.width()) + "x" +
                std::to_string(z.height()));
    const int w = z.width() / stride, h = z.height() / stride;
    std::vector<uint8_t> mask(static_cast<size_t>(w) * static_cast<size_t>(h));
    for (int j = 0; j < h; ++j)
        for (int i = 0; i < w; ++i)
            mask[static_cast<size_t>(j * w + i)] = z.mask()[static_cast<size_t>(z.index(stride * i + ox, stride * j + oy))];
    LatentMap out(w, h, z.channels(), mask);
    for (int c = 0; c < z.channels(); ++c)
        for (int j = 0; j < h; ++j)
            for (int i = 0; i < w; ++i) out.at(c, out.index(i, j)) = z.at(c, z.index(stride * i + ox, stride * j + oy));
    return out;
}

std::vector<float> cfg_combine(const std::vector<float>& cond, const std::vector<float>& uncond, double w) {
    require(cond.size() == uncond.size(), ErrorCode::Shape, "cfg_combine: branch sizes differ");
    std::vector<float> out(cond.size());
    for (size_t i = 0; i < out.size(); ++i)
        out[i] = static_cast<float>((1.0 - w) * static_cast<double>(uncond[i]) + w * static_cast<double>(cond[i]));
    return out;
}

Tensor<float> stack_maps(const std::vector<const LatentMap*>& maps) {
    require(!maps.empty(), ErrorCode::InvalidArgument, "stack_maps: empty batch");
    const auto& f = *maps.front();
    Tensor<float> t({static_cast<int64_t>(maps.size()), f.channels(), f.height(), f.width()});
    const size_t per = f.data().size();
    for (size_t k = 0; k < maps.size(); ++k) {
        require(maps[k]->width() == f.width() && maps[k]->height() == f.height() && maps[k]->channels() == f.channels(),
                ErrorCode::Shape, "stack_maps: map " + std::to_string(k) + " has a different shape");
        std::copy(maps[k]->data().begin(), maps[k]->data().end(), t.data.begin() + static_cast<std::ptrdiff_t>(k * per));
    }
    return t;
}

Tensor<float> stack_contexts(const std::vector<const PromptEmbedding*>& ctx) {
    require(!ctx.empty(), ErrorCode::InvalidArgument, "stack_contexts: empty batch");
    const auto& f = *ctx.front();
    Tensor<float> t({static_cast<int64_t>(ctx.size()), f.tokens, f.dim});
    for (size_t k = 0; k < ctx.size(); ++k) {
        require(ctx[k]->tokens == f.tokens && ctx[k]->dim == f.dim, ErrorCode::Shape,
                "stack_contexts: embedding " + std::to_string(k) + " has a different shape");
        std::copy(ctx[k]->data.begin(), ctx[k]->data.end(), t.data.begin() + static_cast<std::ptrdiff_t>(k * f.data.size()));
    }
    return t;
}

namespace {

template <class T>
Tensor<T> per_sample(const std::vector<double>& v) {
    Tensor<T> t({static_cast<int64_t>(v.size()), 1, 1, 1});
    for (size_t i = 0; i < v.size(); ++i) t.data[i] = static_cast<T>(v[i]);
    return t;
}

}  // namespace

template <class T>
Var<T> denoise_graph(const UNetConfig& config, const std::vector<Var<T>>& w, Var<T> z_t, const std::vector<double>& sigma,
                     Var<T> ctx, double sigma_data) {
    require(static_cast<int64_t>(sigma.size()) == z_t.dim(0), ErrorCode::Shape, "denoise: need one sigma per sample");
    std::vector<double> skip, out, in, noise;
    for (double s : sigma) {
        require(s > 0, ErrorCode::InvalidArgument, "denoise: sigma must be positive");
        auto p = precondition(s, sigma_data);
        skip.push_back(p.c_skip);
        out.push_back(p.c_out);
        in.push_back(p.c_in);
        noise.push_back(p.c_noise);
    }
    auto& tape = *z_t.tape;
    auto f = unet_forward(config, w, z_t * tape.constant(per_sample<T>(in)), noise, ctx);
    return z_t * tape.constant(per_sample<T>(skip)) + f * tape.constant(per_sample<T>(out));
}

Tensor<float> denoise(const DenoiserParams& p, const nn::ParamSet& weights, const Tensor<float>& z_t,
                      const std::vector<double>& sigma, const Tensor<float>& ctx) {
    require(z_t.rank() == 4 && static_cast<int64_t>(sigma.size()) == z_t.dim(0), ErrorCode::Shape,
            "denoise: expected (N,C,H,W) input with one sigma per sample");
    const int64_t per = z_t.size() / z_t.dim(0);
    std::vector<Preconditioners> pc;
    Tensor<float> scaled = z_t;
    std::vector<double> noise;
    for (size_t n = 0; n < sigma.size(); ++n) {
        require(sigma[n] > 0, ErrorCode::InvalidArgument, "denoise: sigma must be positive");
        pc.push_back(precondition(sigma[n], p.sigma_data));
        noise.push_back(pc.back().c_noise);
        const float c_in = static_cast<float>(pc.back().c_in);
        for (int64_t i = 0; i < per; ++i) scaled.data[n * static_cast<size_t>(per) + static_cast<size_t>(i)] *= c_in;
    }
    Tensor<float> f = unet_eval(p.config, weights, scaled, noise, ctx);
    Tensor<float> d(z_t.shape);
    for (size_t n = 0; n < sigma.size(); ++n) {
        const float cs = static_cast<float>(pc[n].c_skip), co = static_cast<float>(pc[n].c_out);
        for (int64_t i = 0; i < per; ++i) {
            size_t k = n * static_cast<size_t>(per) + static_cast<size_t>(i);
            d.data[k] = cs * z_t.data[k] + co * f.data[k];
        }
    }
    return d;
}

template <class T>
Var<T> diffusion_loss_graph(const UNetConfig& config, const std::vector<Var<T>>& w, const Tensor<T>& clean,
                            const Tensor<T>& eps, const std::vector<double>& sigma, Var<T> ctx, const Tensor<T>& mask,
                            double sigma_data, double gamma) {
    require(clean.shape == eps.shape && clean.rank() == 4 && static_cast<int64_t>(sigma.size()) == clean.dim(0),
            ErrorCode::Shape, "diffusion loss: inconsistent batch shapes");
    require(mask.shape == ad::Shape{clean.dim(0), 1, clean.dim(2), clean.dim(3)}, ErrorCode::Shape,
            "diffusion loss: mask must be (B,1,H,W)");
    auto& tape = *ctx.tape;
    const int64_t per = clean.size() / clean.dim(0);
    Tensor<T> noisy = clean;
    std::vector<double> weight;
    for (size_t n = 0; n < sigma.size(); ++n) {
        for (int64_t i = 0; i < per; ++i) {
            size_t k = n * static_cast<size_t>(per) + static_cast<size_t>(i);
            noisy.data[k] = static_cast<T>(clean.data[k] + sigma[n] * eps.data[k]);
        }
        weight.push_back(min_snr_weight(sigma[n], sigma_data, gamma) / static_cast<double>(sigma.size()));
    }
    auto d = denoise_graph(config, w, tape.constant(std::move(noisy)), sigma, ctx, sigma_data);
    auto diff = (d - tape.constant(clean)) * tape.constant(mask);
    return ad::sum(diff * diff * tape.constant(per_sample<T>(weight)));
}

NoiseDraw draw_noise(Rng& rng, const TrainConfig& cfg) {
    NoiseDraw d;
    d.sigma = std::exp(cfg.p_mean + cfg.p_std * rng.normal());
    d.null_context = rng.bernoulli(cfg.null_prob);
    return d;
}

double estimate_sigma_data(const std::vector<LatentMap>& maps) {
    double sum = 0, sq = 0;
    int64_t n = 0;
    for (const auto& m : maps)
        for (int c = 0; c < m.channels(); ++c)
            for (int64_t t = 0; t < m.texels(); ++t)
                if (m.has(t)) {
                    double v = m.at(c, t);
                    sum += v;
                    sq += v * v;
                    ++n;
                }
    if (n < 2) return 0.5;
    double mean = sum / static_cast<double>(n);
    double sd = std::sqrt(std::max(0.0, sq / static_cast<double>(n) - mean * mean));
    return sd > 1e-8 ? sd : 0.5;
}

void train_diffusion_steps(DenoiserParams& params, const std::vector<LatentMap>& maps,
                           const std::vector<PromptEmbedding>& contexts, const TrainConfig& cfg,
                           std::vector<double>* loss_curve, const TrainProgress& progress) {
    const auto& uc = params.config;
    require(!maps.empty(), ErrorCode::InvalidArgument, "train_diffusion: empty dataset");
    require(contexts.size() == maps.size(), ErrorCode::InvalidArgument, "train_diffusion: need one embedding per map");
    require(cfg.batch >= 1 && cfg.iterations >= 0, ErrorCode::InvalidArgument, "train_diffusion: invalid batch/iterations");
    require(cfg.null_prob >= 0 && cfg.null_prob <= 1, ErrorCode::InvalidArgument, "train_diffusion: null_prob outside [0,1]");
    require(cfg.stride >= 1, ErrorCode::InvalidArgument, "train_diffusion: stride must be >= 1");
    for (size_t k = 0; k < maps.size(); ++k) {
        require(maps[k].width() == uc.image_size * cfg.stride && maps[k].height() == uc.image_size * cfg.stride,
                ErrorCode::Shape,
                "train_diffusion: map " + std::to_string(k) + " is " + std::to_string(maps[k].width()) + "x" +
                    std::to_string(maps[k].height()) + ", expected image_size*stride = " +
                    std::to_string(uc.image_size * cfg.stride));
        require(maps[k].channels() == uc.in_channels, ErrorCode::Shape,
                "train_diffusion: map " + std::to_string(k) + " has " + std::to_string(maps[k].channels()) +
                    " channels, model expects " + std::to_string(uc.in_channels));
        require(contexts[k].dim == uc.context_dim && contexts[k].tokens == contexts[0].tokens, ErrorCode::Shape,
                "train_diffusion: embedding " + std::to_string(k) + " shape does not match context_dim " +
                    std::to_string(uc.context_dim));
    }
    if (!params.has_ema()) params.ema = params.weights;

    ad::OptimizerState<float> opt(ad::AdamConfig{cfg.lr, cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay});
    Rng rng(mix_seed(cfg.seed, 0xD1FF));
    std::vector<size_t> order(maps.size());
    std::iota(order.begin(), order.end(), 0);
    size_t cursor = order.size();
    const PromptEmbedding null_ctx = PromptEmbedding::null(contexts[0].tokens, contexts[0].dim);
    double initial = -1;

    for (int it = 0; it < cfg.iterations; ++it) {
        std::vector<LatentMap> batch_maps;
        std::vector<const PromptEmbedding*> batch_ctx;
        std::vector<double> sigma;
        for (int b = 0; b < cfg.batch; ++b) {
            if (cursor == order.size()) {
                for (size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[static_cast<size_t>(rng.below(i + 1))]);
                cursor = 0;
            }
            size_t k = order[cursor++];
            int ox = static_cast<int>(rng.below(static_cast<uint64_t>(cfg.stride)));
            int oy = static_cast<int>(rng.below(static_cast<uint64_t>(cfg.stride)));
            batch_maps.push_back(cfg.stride == 1 ? maps[k] : subsample_map(maps[k], cfg.stride, ox, oy));
            auto draw = draw_noise(rng, cfg);
            sigma.push_back(draw.sigma);
            batch_ctx.push_back(draw.null_context ? &null_ctx : &contexts[k]);
        }
        std::vector<const LatentMap*> ptrs;
        for (const auto& m : batch_maps) ptrs.push_back(&m);
        Tensor<float> clean = stack_maps(ptrs);
        Tensor<float> eps(clean.shape);
        for (auto& e : eps.data) e = static_cast<float>(rng.normal());
        Tensor<float> mask({clean.dim(0), 1, clean.dim(2), clean.dim(3)});
        for (size_t b = 0; b < batch_maps.size(); ++b)
            for (int64_t t = 0; t < batch_maps[b].texels(); ++t)
                mask.data[b * static_cast<size_t>(batch_maps[b].texels()) + static_cast<size_t>(t)] = batch_maps[b].has(t) ? 1.0f : 0.0f;

        Tape<float> tape;
        auto w = nn::bind(tape, params.weights, true);
        auto loss = diffusion_loss_graph(uc, w, clean, eps, sigma, tape.constant(stack_contexts(batch_ctx)), mask,
                                         params.sigma_data, cfg.gamma);
        double lv = loss.value()[0];
        if (!std::isfinite(lv)) {
            auto worst = std::min_element(sigma.begin(), sigma.end());
            fail(ErrorCode::Numeric, "train_diffusion: non-finite loss at iteration " + std::to_string(it) +
                                         " (smallest sigma in batch " + std::to_string(*worst) + ")");
        }
        if (initial < 0) initial = lv;
        if (initial > 0 && lv > 1e3 * initial)
            fail(ErrorCode::Numeric, "train_diffusion: diverged at iteration " + std::to_string(it) + " (loss " +
                                         std::to_string(lv) + " vs initial " + std::to_string(initial) + ")");
        auto grads = tape.grad(loss, w);
        ad::adamw_step(opt, params.weights.pointers(), grads);
        ad::ema_update(params.ema.tensors, params.weights.tensors, cfg.ema_decay);
        if (loss_curve) loss_curve->push_back(lv);
        if (progress) progress(it, lv);
    }
}

DenoiserParams train_diffusion(const std::vector<LatentMap>& maps, const std::vector<PromptEmbedding>& contexts,
                               const UNetConfig& unet, const TrainConfig& cfg, std::vector<double>* loss_curve,
                               const TrainProgress& progress, double sigma_data) {
    require(!maps.empty(), ErrorCode::InvalidArgument, "train_diffusion: empty dataset");
    unet.validate();
    DenoiserParams p = make_denoiser(unet, cfg.seed, sigma_data > 0 ? sigma_data : estimate_sigma_data(maps));
    // generated maps keep every texel some training map uses at offset 0
    p.mask.assign(static_cast<size_t>(unet.image_size) * static_cast<size_t>(unet.image_size), 0);
    for (const auto& m : maps) {
        auto s = cfg.stride == 1 ? m : subsample_map(m, cfg.stride, 0, 0);
        for (size_t t = 0; t < p.mask.size(); ++t) p.mask[t] |= s.mask()[t];
    }
    train_diffusion_steps(p, maps, contexts, cfg, loss_curve, progress);
    return p;
}

std::vector<LatentMap> sample_batch(const DenoiserParams& p, const std::vector<PromptEmbedding>& contexts,
                                    const SampleOptions& opt, const std::vector<uint64_t>& seeds, SampleStats* stats) {
    const auto& uc = p.config;
    require(!contexts.empty() && contexts.size() == seeds.size(), ErrorCode::InvalidArgument,
            "sample: need one seed per context");
    require(opt.guidance >= 0, ErrorCode::InvalidArgument, "sample: guidance weight must be >= 0");
    for (const auto& c : contexts)
        require(c.dim == uc.context_dim && c.tokens == contexts[0].tokens, ErrorCode::Shape,
                "sample: embedding is " + std::to_string(c.tokens) + "x" + std::to_string(c.dim) + ", model context_dim is " +
                    std::to_string(uc.context_dim));
    const auto sig = opt.schedule.sigmas();
    const nn::ParamSet& weights = opt.use_ema ? p.sampling_weights() : p.weights;
    const size_t n = contexts.size();
    const size_t per = static_cast<size_t>(uc.in_channels) * static_cast<size_t>(uc.image_size) * static_cast<size_t>(uc.image_size);
    const bool need_cond = opt.guidance != 0.0;
    const bool need_uncond = opt.guidance != 1.0;

    std::vector<Rng> rngs;
    std::vector<std::vector<double>> z(n, std::vector<double>(per));
    for (size_t k = 0; k < n; ++k) {
        rngs.emplace_back(seeds[k]);
        for (auto& v : z[k]) v = sig[0] * rngs[k].normal();
    }
    const PromptEmbedding null_ctx = PromptEmbedding::null(contexts[0].tokens, contexts[0].dim);
    std::vector<const PromptEmbedding*> ctx_rows;
    if (need_cond)
        for (const auto& c : contexts) ctx_rows.push_back(&c);
    if (need_uncond)
        for (size_t k = 0; k < n; ++k) ctx_rows.push_back(&null_ctx);
    const Tensor<float> ctx = stack_contexts(ctx_rows);
    const size_t rows = ctx_rows.size();

    for (size_t i = 0; i + 1 < sig.size(); ++i) {
        const double s = sig[i], s_next = sig[i + 1];
        Tensor<float> x({static_cast<int64_t>(rows), uc.in_channels, uc.image_size, uc.image_size});
        for (size_t r = 0; r < rows; ++r)
            for (size_t e = 0; e < per; ++e) x.data[r * per + e] = static_cast<float>(z[r % n][e]);
        Tensor<float> d = denoise(p, weights, x, std::vector<double>(rows, s), ctx);
        if (stats) {
            stats->cond_evals += need_cond ? static_cast<int>(n) : 0;
            stats->uncond_evals += need_uncond ? static_cast<int>(n) : 0;
        }
        const double s_up = std::sqrt(std::max(0.0, s_next * s_next * (s * s - s_next * s_next) / (s * s)));
        const double s_down = std::sqrt(std::max(0.0, s_next * s_next - s_up * s_up));
        for (size_t k = 0; k < n; ++k) {
            std::vector<float> cond, uncond;
            const auto row = [&](size_t r) {
                return std::vector<float>(d.data.begin() + static_cast<std::ptrdiff_t>(r * per),
                                          d.data.begin() + static_cast<std::ptrdiff_t>((r + 1) * per));
            };
            if (need_cond) cond = row(k);
            if (need_uncond) uncond = row(need_cond ? n + k : k);
            if (!need_cond) cond = uncond;
            if (!need_uncond) uncond = cond;
            auto dw = cfg_combine(cond, uncond, opt.guidance);
            for (size_t e = 0; e < per; ++e) {
                double deriv = (z[k][e] - dw[e]) / s;
                double v = z[k][e] + deriv * (s_down - s);
                if (s_up > 0) v += s_up * rngs[k].normal();
                if (!std::isfinite(v))
                    fail(ErrorCode::Numeric, "sample: non-finite value at step " + std::to_string(i) + " (sigma " +
                                                 std::to_string(s) + ")");
                z[k][e] = v;
            }
        }
    }
    std::vector<uint8_t> mask = p.mask.empty() ? std::vector<uint8_t>(static_cast<size_t>(uc.image_size * uc.image_size), 1) : p.mask;
    std::vector<LatentMap> out;
    for (size_t k = 0; k < n; ++k) {
        LatentMap m(uc.image_size, uc.image_size, uc.in_channels, mask);
        for (size_t e = 0; e < per; ++e) m.data()[e] = static_cast<float>(z[k][e]);
        m.apply_mask();
        out.push_back(std::move(m));
    }
    return out;
}

LatentMap sample(const DenoiserParams& p, const PromptEmbedding& context, const SampleOptions& opt, uint64_t seed,
                 SampleStats* stats) {
    return sample_batch(p, {context}, opt, {seed}, stats).front();
}

template Var<float> denoise_graph(const UNetConfig&, const std::vector<Var<float>>&, Var<float>, const std::vector<double>&,
                                  Var<float>, double);
template Var<double> denoise_graph(const UNetConfig&, const std::vector<Var<double>>&, Var<double>,
                                   const std::vector<double>&, Var<double>, double);
template Var<float> diffusion_loss_graph(const UNetConfig&, const std::vector<Var<float>>&, const Tensor<float>&,
                                         const Tensor<float>&, const std::vector<double>&, Var<float>, const Tensor<float>&,
                                         double, double);
template Var<double> diffusion_loss_graph(const UNetConfig&, const std::vector<Var<double>>&, const Tensor<double>&,
                                          const Tensor<double>&, const std::vector<double>&, Var<double>,
                                          const Tensor<double>&, double, double);

}  // namespace haar
