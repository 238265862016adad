// Copyright (C) 2026 The haar-strands Authors
// SPDX-License-Identifier: Apache-2.0

#include "unet.hpp"

#include <algorithm>
#include <cmath>

namespace haar {

using ad::Shape;
using ad::Tape;
using ad::Tensor;
using ad::Var;

void UNetConfig::validate() const {
    auto need = [](bool ok, const std::string& what) { require(ok, ErrorCode::InvalidArgument, "unet config: " + what); };
    need(image_size >= 1 && in_channels >= 1 && model_channels >= 1 && context_dim >= 1,
         "image_size, in_channels, model_channels and context_dim must be positive");
    need(!channel_mult.empty(), "channel_mult must not be empty");
    for (int m : channel_mult) need(m >= 1, "channel_mult entries must be positive");
    need(num_res_blocks >= 1, "num_res_blocks must be >= 1");
    need(num_heads >= 1 && model_channels % num_heads == 0, "model_channels must be divisible by num_heads");
    need(norm_groups >= 1 && model_channels % norm_groups == 0, "model_channels must be divisible by norm_groups");
    const int levels = static_cast<int>(channel_mult.size());
    const int reduction = 1 << (levels - 1);
    need(image_size % reduction == 0,
         "image_size must be divisible by 2^(len(channel_mult)-1) = " + std::to_string(reduction));
    for (int r : attention_resolutions)
        need(r >= 1 && r <= reduction && (r & (r - 1)) == 0,
             "attention_resolutions entries must be powers of two up to " + std::to_string(reduction));
}

UNetConfig UNetConfig::reference() {
    UNetConfig c;
    c.image_size = 32;
    c.in_channels = 64;
    c.model_channels = 320;
    c.channel_mult = {1, 2, 4, 4};
    c.num_res_blocks = 2;
    c.num_heads = 8;
    c.attention_resolutions = {4, 2, 1};
    c.context_dim = 768;
    c.norm_groups = 8;
    return c;
}

template <class T>
Tensor<T> noise_features(const std::vector<double>& c_noise, int dim) {
    require(dim >= 2 && dim % 2 == 0, ErrorCode::InvalidArgument, "noise_features: dim must be even");
    const int half = dim / 2;
    Tensor<T> out({static_cast<int64_t>(c_noise.size()), dim});
    for (size_t n = 0; n < c_noise.size(); ++n)
        for (int i = 0; i < half; ++i) {
            double f = std::exp(-std::log(10000.0) * i / half);
            out.data[n * static_cast<size_t>(dim) + static_cast<size_t>(i)] = static_cast<T>(std::cos(c_noise[n] * f));
            out.data[n * static_cast<size_t>(dim) + static_cast<size_t>(half + i)] = static_cast<T>(std::sin(c_noise[n] * f));
        }
    return out;
}

template <class T>
Var<T> cross_attention(Var<T> x, Var<T> ctx, Var<T> wq, Var<T> wk, Var<T> wv, int heads) {
    require(x.shape().size() == 3 && ctx.shape().size() == 3 && x.dim(0) == ctx.dim(0), ErrorCode::Shape,
            "cross_attention: expected x (B,N,d) and context (B,T,d_ctx), got " + ad::shape_str(x.shape()) + " and " +
                ad::shape_str(ctx.shape()));
    const int64_t b = x.dim(0), n = x.dim(1), d = x.dim(2), t = ctx.dim(1);
    require(t >= 1, ErrorCode::Shape, "cross_attention: context needs at least one token");
    require(heads >= 1 && d % heads == 0, ErrorCode::InvalidArgument,
            "cross_attention: width " + std::to_string(d) + " not divisible by " + std::to_string(heads) + " heads");
    const int64_t dh = d / heads;
    auto split = [&](Var<T> v, int64_t len) {
        return ad::reshape(ad::permute(ad::reshape(v, {b, len, heads, dh}), {0, 2, 1, 3}), {b * heads, len, dh});
    };
    auto q = split(ad::linear(x, wq, Var<T>{}), n);
    auto k = split(ad::linear(ctx, wk, Var<T>{}), t);
    auto v = split(ad::linear(ctx, wv, Var<T>{}), t);
    auto attn = ad::softmax(ad::scale(ad::matmul(q, k, false, true), 1.0 / std::sqrt(static_cast<double>(dh))));
    auto out = ad::matmul(attn, v);
    return ad::reshape(ad::permute(ad::reshape(out, {b, heads, n, dh}), {0, 2, 1, 3}), {b, n, d});
}

namespace {

/// Hands out weights in declaration order. With `bound == nullptr` it instead
/// declares shape-only parameters on a meta tape and records their specs.
template <class T>
struct WeightSource {
    Tape<T>* tape = nullptr;
    const std::vector<Var<T>>* bound = nullptr;
    std::vector<ParamSpec>* specs = nullptr;
    size_t next = 0;
    std::string prefix;

    Var<T> get(const std::string& name, Shape shape, InitKind init, int64_t fan_in = 1) {
        std::string full = prefix + name;
        if (!bound) {
            specs->push_back({full, shape, init, fan_in});
            return tape->param(Tensor<T>::meta(shape), full);
        }
        require(next < bound->size(), ErrorCode::Shape, "unet: too few weight tensors (missing '" + full + "')");
        Var<T> v = (*bound)[next++];
        require(v.shape() == shape, ErrorCode::Shape,
                "unet: weight '" + full + "' has shape " + ad::shape_str(v.shape()) + ", expected " + ad::shape_str(shape));
        return v;
    }
};

template <class T>
struct Scope {
    WeightSource<T>& ws;
    std::string saved;
    Scope(WeightSource<T>& w, const std::string& name) : ws(w), saved(w.prefix) { ws.prefix += name + "."; }
    ~Scope() { ws.prefix = saved; }
};

template <class T>
class Builder {
public:
    Builder(const UNetConfig& c, WeightSource<T>& ws) : c_(c), ws_(ws) {}

    Var<T> conv(Var<T> x, int64_t out, int k, int stride, const std::string& name, bool zero = false) {
        Scope<T> s(ws_, name);
        int64_t in = x.dim(1);
        auto w = ws_.get("weight", {out, in, k, k}, zero ? InitKind::Zero : InitKind::Uniform, in * k * k);
        auto b = ws_.get("bias", {out}, zero ? InitKind::Zero : InitKind::Uniform, in * k * k);
        return ad::conv2d(x, w, b, stride);
    }

    Var<T> dense(Var<T> x, int64_t out, const std::string& name, bool bias = true) {
        Scope<T> s(ws_, name);
        int64_t in = x.shape().back();
        auto w = ws_.get("weight", {out, in}, InitKind::Uniform, in);
        Var<T> b = bias ? ws_.get("bias", {out}, InitKind::Uniform, in) : Var<T>{};
        return ad::linear(x, w, b);
    }

    Var<T> gnorm(Var<T> x, const std::string& name) {
        Scope<T> s(ws_, name);
        int64_t ch = x.dim(1);
        auto g = ws_.get("weight", {ch}, InitKind::One);
        auto b = ws_.get("bias", {ch}, InitKind::Zero);
        return ad::group_norm(x, g, b, c_.norm_groups);
    }

    Var<T> lnorm(Var<T> x, const std::string& name) {
        Scope<T> s(ws_, name);
        int64_t ch = x.shape().back();
        auto g = ws_.get("weight", {ch}, InitKind::One);
        auto b = ws_.get("bias", {ch}, InitKind::Zero);
        return ad::layer_norm(x, g, b);
    }

    Var<T> res_block(Var<T> x, Var<T> emb, int64_t out, const std::string& name) {
        Scope<T> s(ws_, name);
        int64_t in = x.dim(1);
        auto h = conv(ad::silu(gnorm(x, "norm1")), out, 3, 1, "conv1");
        auto e = dense(ad::silu(emb), out, "emb_proj");
        h = h + ad::reshape(e, {e.dim(0), out, 1, 1});
        h = conv(ad::silu(gnorm(h, "norm2")), out, 3, 1, "conv2");
        auto skip = in == out ? x : conv(x, out, 1, 1, "skip");
        return skip + h;
    }

    Var<T> transformer(Var<T> x, Var<T> ctx, const std::string& name) {
        Scope<T> s(ws_, name);
        const int64_t b = x.dim(0), ch = x.dim(1), hh = x.dim(2), ww = x.dim(3);
        auto h = gnorm(x, "norm");
        h = ad::reshape(ad::permute(h, {0, 2, 3, 1}), {b, hh * ww, ch});
        h = dense(h, ch, "proj_in");
        {
            Scope<T> a(ws_, "attn");
            auto q_in = lnorm(h, "norm");
            auto wq = ws_.get("to_q.weight", {ch, ch}, InitKind::Uniform, ch);
            auto wk = ws_.get("to_k.weight", {ch, ctx.dim(2)}, InitKind::Uniform, ctx.dim(2));
            auto wv = ws_.get("to_v.weight", {ch, ctx.dim(2)}, InitKind::Uniform, ctx.dim(2));
            auto att = cross_attention(q_in, ctx, wq, wk, wv, c_.num_heads);
            h = h + dense(att, ch, "to_out");
        }
        {
            Scope<T> f(ws_, "ff");
            auto y = ad::silu(dense(lnorm(h, "norm"), 4 * ch, "fc1"));
            h = h + dense(y, ch, "fc2");
        }
        h = dense(h, ch, "proj_out");
        h = ad::permute(ad::reshape(h, {b, hh, ww, ch}), {0, 3, 1, 2});
        return x + h;
    }

    Var<T> forward(Var<T> x, Var<T> noise_feat, Var<T> ctx) {
        const int64_t mc = c_.model_channels;
        Var<T> emb;
        {
            Scope<T> s(ws_, "time_embed");
            emb = dense(ad::silu(dense(noise_feat, 4 * mc, "fc1")), 4 * mc, "fc2");
        }
        auto has_attn = [&](int ds) {
            return std::find(c_.attention_resolutions.begin(), c_.attention_resolutions.end(), ds) !=
                   c_.attention_resolutions.end();
        };
        std::vector<Var<T>> skips;
        auto h = conv(x, mc, 3, 1, "input_conv");
        skips.push_back(h);
        int ds = 1;
        const int levels = static_cast<int>(c_.channel_mult.size());
        for (int l = 0; l < levels; ++l) {
            int64_t ch = mc * c_.channel_mult[static_cast<size_t>(l)];
            for (int r = 0; r < c_.num_res_blocks; ++r) {
                std::string tag = "down." + std::to_string(l) + "." + std::to_string(r);
                h = res_block(h, emb, ch, tag + ".res");
                if (has_attn(ds)) h = transformer(h, ctx, tag + ".attn");
                skips.push_back(h);
            }
            if (l + 1 < levels) {
                h = conv(h, ch, 3, 2, "down." + std::to_string(l) + ".downsample");
                ds *= 2;
                skips.push_back(h);
            }
        }
        int64_t mid_ch = h.dim(1);
        h = res_block(h, emb, mid_ch, "mid.res1");
        h = transformer(h, ctx, "mid.attn");
        h = res_block(h, emb, mid_ch, "mid.res2");
        for (int l = levels - 1; l >= 0; --l) {
            int64_t ch = mc * c_.channel_mult[static_cast<size_t>(l)];
            for (int r = 0; r <= c_.num_res_blocks; ++r) {
                std::string tag = "up." + std::to_string(l) + "." + std::to_string(r);
                h = ad::concat(std::vector<Var<T>>{h, skips.back()}, 1);
                skips.pop_back();
                h = res_block(h, emb, ch, tag + ".res");
                if (has_attn(ds)) h = transformer(h, ctx, tag + ".attn");
            }
            if (l > 0) {
                h = ad::resize_nearest(h, h.dim(2) * 2, h.dim(3) * 2);
                h = conv(h, h.dim(1), 3, 1, "up." + std::to_string(l) + ".upsample");
                ds /= 2;
            }
        }
        h = ad::silu(gnorm(h, "out_norm"));
        return conv(h, c_.in_channels, 3, 1, "out_conv", true);
    }

private:
    const UNetConfig& c_;
    WeightSource<T>& ws_;
};

void check_inputs(const UNetConfig& c, const Shape& x, const Shape& ctx, size_t noise_count) {
    require(x.size() == 4 && x[1] == c.in_channels && x[2] == c.image_size && x[3] == c.image_size, ErrorCode::Shape,
            "unet: input " + ad::shape_str(x) + " does not match (N, " + std::to_string(c.in_channels) + ", " +
                std::to_string(c.image_size) + ", " + std::to_string(c.image_size) + ")");
    require(ctx.size() == 3 && ctx[0] == x[0] && ctx[1] >= 1 && ctx[2] == c.context_dim, ErrorCode::Shape,
            "unet: context " + ad::shape_str(ctx) + " does not match (N, T, " + std::to_string(c.context_dim) + ")");
    require(static_cast<int64_t>(noise_count) == x[0], ErrorCode::Shape, "unet: need one noise level per sample");
}

struct Trace {
    std::vector<ParamSpec> specs;
    Shape output;
};

Trace trace(const UNetConfig& c, Shape input, int context_tokens) {
    c.validate();
    check_inputs(c, input, {input[0], context_tokens, c.context_dim}, static_cast<size_t>(input[0]));
    Tape<float> tape(true);
    Trace tr;
    WeightSource<float> ws;
    ws.tape = &tape;
    ws.specs = &tr.specs;
    Builder<float> b(c, ws);
    auto x = tape.constant(Tensor<float>::meta(input));
    auto nf = tape.constant(Tensor<float>::meta({input[0], c.model_channels}));
    auto ctx = tape.constant(Tensor<float>::meta({input[0], context_tokens, c.context_dim}));
    tr.output = b.forward(x, nf, ctx).shape();
    return tr;
}

}  // namespace

std::vector<ParamSpec> unet_layout(const UNetConfig& c) {
    return trace(c, {1, c.in_channels, c.image_size, c.image_size}, 1).specs;
}

int64_t unet_param_count(const UNetConfig& c) {
    int64_t n = 0;
    for (const auto& s : unet_layout(c)) n += ad::numel(s.shape);
    return n;
}

Shape unet_output_shape(const UNetConfig& c, const Shape& input, int context_tokens) {
    return trace(c, input, context_tokens).output;
}

nn::ParamSet init_unet(const UNetConfig& c, uint64_t seed) {
    nn::ParamSet ps;
    Rng rng(mix_seed(seed, 0x0E7));
    for (const auto& s : unet_layout(c)) {
        switch (s.init) {
            case InitKind::Uniform: ps.add(s.name, nn::uniform_init(s.shape, s.fan_in, rng)); break;
            case InitKind::Zero: ps.add(s.name, Tensor<float>(s.shape, 0.0f)); break;
            case InitKind::One: ps.add(s.name, Tensor<float>(s.shape, 1.0f)); break;
        }
    }
    return ps;
}

DenoiserParams make_denoiser(const UNetConfig& c, uint64_t seed, double sigma_data) {
    require(sigma_data > 0, ErrorCode::InvalidArgument, "sigma_data must be positive");
    DenoiserParams p;
    p.config = c;
    p.weights = init_unet(c, seed);
    p.sigma_data = sigma_data;
    return p;
}

template <class T>
Var<T> unet_forward(const UNetConfig& c, const std::vector<Var<T>>& w, Var<T> x, const std::vector<double>& c_noise,
                    Var<T> ctx) {
    c.validate();
    check_inputs(c, x.shape(), ctx.shape(), c_noise.size());
    WeightSource<T> ws;
    ws.tape = x.tape;
    ws.bound = &w;
    Builder<T> b(c, ws);
    auto nf = x.tape->constant(x.tape->meta() ? Tensor<T>::meta({x.dim(0), c.model_channels})
                                              : noise_features<T>(c_noise, c.model_channels));
    auto out = b.forward(x, nf, ctx);
    require(ws.next == w.size(), ErrorCode::Shape,
            "unet: " + std::to_string(w.size()) + " weight tensors given, layout uses " + std::to_string(ws.next));
    return out;
}

Tensor<float> unet_eval(const UNetConfig& c, const nn::ParamSet& weights, const Tensor<float>& x,
                        const std::vector<double>& c_noise, const Tensor<float>& ctx) {
    Tape<float> tape;
    auto w = nn::bind(tape, weights, false);
    auto out = unet_forward(c, w, tape.constant(x), c_noise, tape.constant(ctx));
    return out.value();
}

template Tensor<float> noise_features(const std::vector<double>&, int);
template Tensor<double> noise_features(const std::vector<double>&, int);
template Var<float> cross_attention(Var<float>, Var<float>, Var<float>, Var<float>, Var<float>, int);
template Var<double> cross_attention(Var<double>, Var<double>, Var<double>, Var<double>, Var<double>, int);
template Var<float> unet_forward(const UNetConfig&, const std::vector<Var<float>>&, Var<float>, const std::vector<double>&,
                                 Var<float>);
template Var<double> unet_forward(const UNetConfig&, const std::vector<Var<double>>&, Var<double>,
                                  const std::vector<double>&, Var<double>);

}  // namespace haar
