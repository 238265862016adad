// Copyright (C) 2026 The haar-strands Authors
// SPDX-License-Identifier: Apache-2.0

#include "codec.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "autodiff/optim.hpp"

namespace haar {

using ad::Tape;
using ad::Tensor;
using ad::Var;

namespace codec_graph {

enum : size_t { kEncW1, kEncB1, kEncW2, kEncB2, kMuW, kMuB, kLvW, kLvB, kDecW1, kDecB1, kDecW2, kDecB2, kOutW, kOutB };

template <class T>
Heads<T> encoder(const std::vector<Var<T>>& w, Var<T> x) {
    auto h = ad::silu(ad::linear(x, w[kEncW1], w[kEncB1]));
    h = ad::silu(ad::linear(h, w[kEncW2], w[kEncB2]));
    return {ad::linear(h, w[kMuW], w[kMuB]), ad::linear(h, w[kLvW], w[kLvB])};
}

template <class T>
Var<T> decoder(const std::vector<Var<T>>& w, Var<T> z) {
    auto h = ad::silu(ad::linear(z, w[kDecW1], w[kDecB1]));
    h = ad::silu(ad::linear(h, w[kDecW2], w[kDecB2]));
    return ad::linear(h, w[kOutW], w[kOutB]);
}

template <class T>
Loss<T> loss(const std::vector<Var<T>>& w, Var<T> x, Var<T> eps, double beta) {
    auto heads = encoder(w, x);
    auto z = heads.mu + ad::exp(ad::scale(heads.logvar, 0.5)) * eps;
    auto diff = decoder(w, z) - x;
    auto recon = ad::mean(diff * diff);
    const double batch = static_cast<double>(x.dim(0));
    const double m = static_cast<double>(heads.mu.dim(1));
    auto inner = heads.mu * heads.mu + ad::exp(heads.logvar) - heads.logvar;
    auto kl = ad::add_scalar(ad::scale(ad::sum(inner), 0.5 / batch), -0.5 * m);
    return {recon + ad::scale(kl, beta), recon, kl};
}

template Heads<float> encoder(const std::vector<Var<float>>&, Var<float>);
template Heads<double> encoder(const std::vector<Var<double>>&, Var<double>);
template Var<float> decoder(const std::vector<Var<float>>&, Var<float>);
template Var<double> decoder(const std::vector<Var<double>>&, Var<double>);
template Loss<float> loss(const std::vector<Var<float>>&, Var<float>, Var<float>, double);
template Loss<double> loss(const std::vector<Var<double>>&, Var<double>, Var<double>, double);

}  // namespace codec_graph

namespace {

void check_params(const CodecParams& p) {
    require(p.points >= 2 && p.latent >= 1 && p.hidden >= 1, ErrorCode::InvalidArgument, "codec: invalid dimensions");
    require(p.weights.size() == 14, ErrorCode::Shape, "codec: expected 14 weight tensors");
    require(p.mean.size() == static_cast<size_t>(3 * p.points) && p.stddev.size() == p.mean.size(), ErrorCode::Shape,
            "codec: normalization statistics do not match L");
}

void flatten_normalized(const CodecParams& p, const Strand& s, float* out) {
    require(static_cast<int>(s.points.size()) == p.points, ErrorCode::Shape,
            "codec expects strands of " + std::to_string(p.points) + " points, got " + std::to_string(s.points.size()));
    for (int k = 0; k < p.points; ++k)
        for (int c = 0; c < 3; ++c) {
            size_t i = static_cast<size_t>(3 * k + c);
            out[i] = static_cast<float>((s.points[static_cast<size_t>(k)][static_cast<size_t>(c)] - p.mean[i]) / p.stddev[i]);
        }
}

Tensor<float> normalized_batch(const CodecParams& p, const std::vector<Strand>& strands) {
    Tensor<float> x({static_cast<int64_t>(strands.size()), 3 * static_cast<int64_t>(p.points)});
    for (size_t r = 0; r < strands.size(); ++r) flatten_normalized(p, strands[r], x.data.data() + r * static_cast<size_t>(3 * p.points));
    return x;
}

}  // namespace

CodecParams init_codec(const CodecConfig& cfg) {
    require(cfg.points >= 2 && cfg.latent >= 1 && cfg.hidden >= 1, ErrorCode::InvalidArgument,
            "codec config needs points >= 2, latent >= 1, hidden >= 1");
    CodecParams p;
    p.points = cfg.points;
    p.latent = cfg.latent;
    p.hidden = cfg.hidden;
    p.beta = cfg.beta;
    p.mean.assign(static_cast<size_t>(3 * cfg.points), 0.0f);
    p.stddev.assign(static_cast<size_t>(3 * cfg.points), 1.0f);
    Rng rng(mix_seed(cfg.seed, 0xC0DEC));
    const int64_t d = 3 * cfg.points, h = cfg.hidden, m = cfg.latent;
    auto dense = [&](const std::string& name, int64_t out, int64_t in) {
        p.weights.add(name + ".weight", nn::uniform_init({out, in}, in, rng));
        p.weights.add(name + ".bias", nn::uniform_init({out}, in, rng));
    };
    dense("enc.fc1", h, d);
    dense("enc.fc2", h, h);
    dense("enc.mu", m, h);
    dense("enc.logvar", m, h);
    dense("dec.fc1", h, m);
    dense("dec.fc2", h, h);
    dense("dec.out", d, h);
    return p;
}

double kl_divergence(const std::vector<float>& mu, const std::vector<float>& logvar) {
    require(mu.size() == logvar.size(), ErrorCode::Shape, "kl_divergence: size mismatch");
    double kl = 0;
    for (size_t i = 0; i < mu.size(); ++i) {
        double m = mu[i], lv = logvar[i];
        kl += 0.5 * (m * m + std::exp(lv) - lv - 1.0);
    }
    return kl;
}

CodecParams train_codec(const std::vector<Strand>& dataset, const CodecConfig& cfg, std::vector<CodecEpoch>* report,
                        const CodecProgress& progress) {
    require(dataset.size() >= 2, ErrorCode::InvalidArgument, "train_codec: need at least 2 strands");
    require(cfg.epochs >= 0 && cfg.batch >= 1 && cfg.lr > 0, ErrorCode::InvalidArgument, "train_codec: invalid schedule");
    CodecParams p = init_codec(cfg);
    const size_t d = static_cast<size_t>(3 * cfg.points);
    const size_t n = dataset.size();

    std::vector<double> sum(d, 0.0), sq(d, 0.0);
    for (const auto& s : dataset) {
        require(static_cast<int>(s.points.size()) == cfg.points, ErrorCode::Shape,
                "train_codec: strand has " + std::to_string(s.points.size()) + " points, expected " + std::to_string(cfg.points));
        for (size_t i = 0; i < d; ++i) {
            double v = s.points[i / 3][i % 3];
            sum[i] += v;
            sq[i] += v * v;
        }
    }
    for (size_t i = 0; i < d; ++i) {
        double mu = sum[i] / static_cast<double>(n);
        double var = std::max(0.0, sq[i] / static_cast<double>(n) - mu * mu);
        double sd = std::sqrt(var);
        p.mean[i] = static_cast<float>(mu);
        p.stddev[i] = sd > 1e-6 ? static_cast<float>(sd) : 1.0f;
    }
    Tensor<float> all = normalized_batch(p, dataset);

    ad::OptimizerState<float> opt(ad::AdamConfig{cfg.lr, 0.9, 0.999, 1e-8, 0.0});
    Rng rng(mix_seed(cfg.seed, 0xBA7C4));
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    const int warm_epochs = static_cast<int>(std::ceil(cfg.warmup * cfg.epochs));

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (size_t i = n - 1; i > 0; --i) std::swap(order[i], order[static_cast<size_t>(rng.below(i + 1))]);
        double beta = cfg.beta;
        if (warm_epochs > 0 && epoch < warm_epochs) beta = cfg.beta * static_cast<double>(epoch + 1) / warm_epochs;
        CodecEpoch ep;
        ep.min_kl = INFINITY;
        int batches = 0;
        for (size_t start = 0; start < n; start += static_cast<size_t>(cfg.batch)) {
            size_t b = std::min(static_cast<size_t>(cfg.batch), n - start);
            Tensor<float> x({static_cast<int64_t>(b), static_cast<int64_t>(d)});
            for (size_t r = 0; r < b; ++r)
                std::copy_n(all.data.begin() + static_cast<std::ptrdiff_t>(order[start + r] * d), d,
                            x.data.begin() + static_cast<std::ptrdiff_t>(r * d));
            Tensor<float> eps({static_cast<int64_t>(b), cfg.latent});
            for (auto& e : eps.data) e = static_cast<float>(rng.normal());

            Tape<float> tape;
            auto w = nn::bind(tape, p.weights, true);
            auto l = codec_graph::loss(w, tape.constant(std::move(x)), tape.constant(std::move(eps)), beta);
            double lv = l.total.value()[0];
            if (!std::isfinite(lv)) fail(ErrorCode::Numeric, "train_codec: non-finite loss at epoch " + std::to_string(epoch));
            auto grads = tape.grad(l.total, w);
            ad::adamw_step(opt, p.weights.pointers(), grads);
            ep.loss += lv;
            ep.recon += l.recon.value()[0];
            double kl = l.kl.value()[0];
            ep.kl += kl;
            ep.min_kl = std::min(ep.min_kl, kl);
            ++batches;
        }
        ep.loss /= batches;
        ep.recon /= batches;
        ep.kl /= batches;
        if (report) report->push_back(ep);
        if (progress) progress(epoch, ep);
    }
    return p;
}

std::vector<float> encode_batch(const CodecParams& p, const std::vector<Strand>& strands, EncodeMode mode,
                                const std::vector<uint64_t>& seeds) {
    check_params(p);
    if (strands.empty()) return {};
    require(mode == EncodeMode::Mean || seeds.size() == strands.size(), ErrorCode::InvalidArgument,
            "encode_batch: sample mode needs one seed per strand");
    Tape<float> tape;
    auto w = nn::bind(tape, p.weights, false);
    auto heads = codec_graph::encoder(w, tape.constant(normalized_batch(p, strands)));
    std::vector<float> z = heads.mu.value().data;
    if (mode == EncodeMode::Sample) {
        const auto& lv = heads.logvar.value().data;
        for (size_t r = 0; r < strands.size(); ++r) {
            Rng rng(seeds[r]);
            for (int c = 0; c < p.latent; ++c) {
                size_t i = r * static_cast<size_t>(p.latent) + static_cast<size_t>(c);
                z[i] = static_cast<float>(z[i] + std::exp(0.5 * lv[i]) * rng.normal());
            }
        }
    }
    return z;
}

std::vector<float> encode(const CodecParams& p, const Strand& strand, EncodeMode mode, uint64_t seed) {
    return encode_batch(p, {strand}, mode, {seed});
}

std::vector<Strand> decode_batch(const CodecParams& p, const std::vector<float>& z, int64_t count) {
    check_params(p);
    require(static_cast<int64_t>(z.size()) == count * p.latent, ErrorCode::Shape,
            "decode: latent size " + std::to_string(z.size()) + " does not match " + std::to_string(count) + " x " +
                std::to_string(p.latent));
    for (size_t i = 0; i < z.size(); ++i)
        require(std::isfinite(z[i]), ErrorCode::Numeric, "decode: non-finite latent value at index " + std::to_string(i));
    if (count == 0) return {};
    Tape<float> tape;
    auto w = nn::bind(tape, p.weights, false);
    auto out = codec_graph::decoder(w, tape.constant(Tensor<float>({count, p.latent}, z)));
    const auto& y = out.value().data;
    const size_t d = static_cast<size_t>(3 * p.points);
    std::vector<Strand> strands(static_cast<size_t>(count));
    for (size_t r = 0; r < strands.size(); ++r) {
        auto& s = strands[r];
        s.space = Space::Local;
        s.points.resize(static_cast<size_t>(p.points));
        for (size_t i = 0; i < d; ++i)
            s.points[i / 3][i % 3] = static_cast<double>(y[r * d + i]) * p.stddev[i] + p.mean[i];
        s.points[0] = {0, 0, 0};
    }
    return strands;
}

Strand decode(const CodecParams& p, const std::vector<float>& z) {
    require(static_cast<int>(z.size()) == p.latent, ErrorCode::Shape,
            "decode: expected " + std::to_string(p.latent) + " latent values, got " + std::to_string(z.size()));
    return decode_batch(p, z, 1)[0];
}

LatentMap encode_map(const CodecParams& p, const HairMap& map, EncodeMode mode, uint64_t seed) {
    check_params(p);
    require(map.points() == p.points, ErrorCode::Shape,
            "encode_map: map strands have " + std::to_string(map.points()) + " points, codec expects " + std::to_string(p.points));
    LatentMap out(map.width(), map.height(), p.latent, map.mask());
    const int64_t count = map.strand_count();
    constexpr int64_t kChunk = 1024;
    for (int64_t s0 = 0; s0 < count; s0 += kChunk) {
        int64_t s1 = std::min(count, s0 + kChunk);
        std::vector<Strand> strands;
        std::vector<uint64_t> seeds;
        for (int64_t s = s0; s < s1; ++s) {
            strands.push_back(map.strand(map.texel_of_slot(s)));
            seeds.push_back(mix_seed(seed, static_cast<uint64_t>(map.texel_of_slot(s))));
        }
        auto z = encode_batch(p, strands, mode, seeds);
        for (int64_t s = s0; s < s1; ++s)
            out.set_latent(map.texel_of_slot(s), z.data() + (s - s0) * p.latent);
    }
    return out;
}

HairMap decode_map(const CodecParams& p, const LatentMap& latents) {
    check_params(p);
    require(latents.channels() == p.latent, ErrorCode::Shape,
            "decode_map: latent map has " + std::to_string(latents.channels()) + " channels, codec expects " +
                std::to_string(p.latent));
    HairMap out(latents.width(), latents.height(), p.points, latents.mask());
    const int64_t count = out.strand_count();
    constexpr int64_t kChunk = 1024;
    for (int64_t s0 = 0; s0 < count; s0 += kChunk) {
        int64_t s1 = std::min(count, s0 + kChunk);
        std::vector<float> z;
        for (int64_t s = s0; s < s1; ++s) {
            auto v = latents.latent(out.texel_of_slot(s));
            z.insert(z.end(), v.begin(), v.end());
        }
        auto strands = decode_batch(p, z, s1 - s0);
        for (int64_t s = s0; s < s1; ++s) out.set_strand(out.texel_of_slot(s), strands[static_cast<size_t>(s - s0)]);
    }
    return out;
}

std::vector<Strand> map_to_world(const HairMap& map, const ScalpGrid& grid) {
    require(grid.width == map.width() && grid.height == map.height(), ErrorCode::Shape,
            "map_to_world: grid " + std::to_string(grid.width) + "x" + std::to_string(grid.height) + " does not match map " +
                std::to_string(map.width()) + "x" + std::to_string(map.height()));
    std::vector<Strand> out;
    out.reserve(static_cast<size_t>(map.strand_count()));
    for (int64_t s = 0; s < map.strand_count(); ++s) {
        int64_t t = map.texel_of_slot(s);
        require(grid.valid[static_cast<size_t>(t)] != 0, ErrorCode::InvalidArgument,
                "map_to_world: texel " + std::to_string(t) + " carries a strand but is off the scalp");
        out.push_back(from_local(map.strand(t), grid.frames[static_cast<size_t>(t)]));
    }
    return out;
}

}  // namespace haar
