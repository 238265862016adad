// Copyright (C) 2026 The haar-strands Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "autodiff/gradcheck.hpp"
#include "test_support.hpp"
#include "unet.hpp"

using namespace haar;
using haar::test::random_tensor;

namespace {

// Parameter count by shape arithmetic over the block structure.
int64_t count_params(const UNetConfig& c) {
    auto conv = [](int64_t in, int64_t out, int64_t k) { return out * in * k * k + out; };
    auto dense = [](int64_t in, int64_t out) { return out * in + out; };
    auto norm = [](int64_t ch) { return 2 * ch; };
    const int64_t mc = c.model_channels, e = 4 * mc, dc = c.context_dim;
    auto res = [&](int64_t in, int64_t out) {
        return norm(in) + conv(in, out, 3) + dense(e, out) + norm(out) + conv(out, out, 3) + (in != out ? conv(in, out, 1) : 0);
    };
    auto attn = [&](int64_t ch) {
        return norm(ch) + dense(ch, ch) + norm(ch) + ch * ch + 2 * ch * dc + dense(ch, ch) + norm(ch) + dense(ch, 4 * ch) +
               dense(4 * ch, ch) + dense(ch, ch);
    };
    auto attn_at = [&](int ds) {
        for (int r : c.attention_resolutions)
            if (r == ds) return true;
        return false;
    };
    int64_t n = dense(mc, e) + dense(e, e) + conv(c.in_channels, mc, 3);
    std::vector<int64_t> skips{mc};
    int64_t ch = mc;
    int ds = 1;
    const int levels = static_cast<int>(c.channel_mult.size());
    for (int l = 0; l < levels; ++l) {
        int64_t out = mc * c.channel_mult[static_cast<size_t>(l)];
        for (int r = 0; r < c.num_res_blocks; ++r) {
            n += res(ch, out) + (attn_at(ds) ? attn(out) : 0);
            ch = out;
            skips.push_back(ch);
        }
        if (l + 1 < levels) {
            n += conv(ch, ch, 3);
            skips.push_back(ch);
            ds *= 2;
        }
    }
    n += 2 * res(ch, ch) + attn(ch);
    for (int l = levels - 1; l >= 0; --l) {
        int64_t out = mc * c.channel_mult[static_cast<size_t>(l)];
        for (int r = 0; r <= c.num_res_blocks; ++r) {
            n += res(ch + skips.back(), out) + (attn_at(ds) ? attn(out) : 0);
            skips.pop_back();
            ch = out;
        }
        if (l > 0) {
            n += conv(ch, ch, 3);
            ds /= 2;
        }
    }
    return n + norm(ch) + conv(ch, c.in_channels, 3);
}

// Multi-head attention with explicit loops.
std::vector<double> attention_oracle(const std::vector<double>& x, const std::vector<double>& ctx,
                                     const std::vector<double>& wq, const std::vector<double>& wk,
                                     const std::vector<double>& wv, int n, int d, int t, int dc, int heads) {
    auto project = [](const std::vector<double>& in, const std::vector<double>& w, int rows, int din, int dout) {
        std::vector<double> out(static_cast<size_t>(rows * dout), 0.0);
        for (int r = 0; r < rows; ++r)
            for (int o = 0; o < dout; ++o)
                for (int i = 0; i < din; ++i)
                    out[static_cast<size_t>(r * dout + o)] += in[static_cast<size_t>(r * din + i)] * w[static_cast<size_t>(o * din + i)];
        return out;
    };
    auto q = project(x, wq, n, d, d), k = project(ctx, wk, t, dc, d), v = project(ctx, wv, t, dc, d);
    const int dh = d / heads;
    std::vector<double> out(static_cast<size_t>(n * d), 0.0);
    for (int h = 0; h < heads; ++h)
        for (int i = 0; i < n; ++i) {
            std::vector<double> logit(static_cast<size_t>(t));
            double mx = -INFINITY, z = 0;
            for (int j = 0; j < t; ++j) {
                double s = 0;
                for (int c = 0; c < dh; ++c) s += q[static_cast<size_t>(i * d + h * dh + c)] * k[static_cast<size_t>(j * d + h * dh + c)];
                logit[static_cast<size_t>(j)] = s / std::sqrt(static_cast<double>(dh));
                mx = std::max(mx, logit[static_cast<size_t>(j)]);
            }
            for (auto& l : logit) z += (l = std::exp(l - mx));
            for (int j = 0; j < t; ++j)
                for (int c = 0; c < dh; ++c)
                    out[static_cast<size_t>(i * d + h * dh + c)] += logit[static_cast<size_t>(j)] / z * v[static_cast<size_t>(j * d + h * dh + c)];
        }
    return out;
}

template <class T>
ad::Tensor<T> tensor(ad::Shape s, std::vector<double> v) {
    ad::Tensor<T> t(std::move(s));
    for (size_t i = 0; i < v.size(); ++i) t.data[i] = static_cast<T>(v[i]);
    return t;
}

}  // namespace

TEST_CASE("config validation names the violated constraint") {
    UNetConfig c;
    c.validate();
    UNetConfig::reference().validate();
    haar::test::tiny_unet().validate();
    auto expect = [](UNetConfig bad, const std::string& what) {
        try {
            bad.validate();
            FAIL("expected rejection");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::InvalidArgument);
            CHECK(std::string(e.what()).find(what) != std::string::npos);
        }
    };
    UNetConfig b = c;
    b.num_heads = 5;
    expect(b, "divisible by num_heads");
    b = c;
    b.norm_groups = 3;
    expect(b, "divisible by norm_groups");
    b = c;
    b.image_size = 10;
    b.channel_mult = {1, 2, 4};
    expect(b, "image_size must be divisible by 2^(len(channel_mult)-1) = 4");
    b = c;
    b.attention_resolutions = {3};
    expect(b, "attention_resolutions");
    b = c;
    b.channel_mult.clear();
    expect(b, "channel_mult");
}

TEST_CASE("parameter counts follow from the block shapes") {
    auto tiny = haar::test::tiny_unet();
    CHECK(unet_param_count(tiny) == count_params(tiny));
    UNetConfig desk;
    CHECK(unet_param_count(desk) == count_params(desk));
    CHECK(unet_param_count(desk) < 5'000'000);
    auto ref = UNetConfig::reference();
    CHECK(unet_param_count(ref) == count_params(ref));
    CHECK(ref.image_size == 32);
    CHECK(ref.in_channels == 64);
    CHECK(ref.num_heads == 8);
    CHECK(ref.model_channels == 320);
    CHECK(ref.context_dim == 768);
    CHECK(ref.channel_mult == std::vector<int>{1, 2, 4, 4});
    CHECK(unet_output_shape(ref, {1, 64, 32, 32}, 77) == ad::Shape{1, 64, 32, 32});
    CHECK(unet_output_shape(desk, {3, 64, 16, 16}, 2) == ad::Shape{3, 64, 16, 16});
    CHECK_THROWS_AS(unet_output_shape(desk, {1, 64, 8, 8}, 1), Error);
}

TEST_CASE("initialization is seeded and zeroes the output convolution") {
    auto c = haar::test::tiny_unet();
    auto a = init_unet(c, 5), b = init_unet(c, 5), other = init_unet(c, 6);
    CHECK(a == b);
    CHECK_FALSE(a == other);
    auto layout = unet_layout(c);
    REQUIRE(layout.size() == a.size());
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a.names[i] == layout[i].name);
        CHECK(a.tensors[i].shape == layout[i].shape);
    }
    REQUIRE(a.names[a.size() - 2] == "out_conv.weight");
    for (size_t i = a.size() - 2; i < a.size(); ++i)
        for (float v : a.tensors[i].data) CHECK(v == 0.0f);

    auto d = make_denoiser(c, 5, 0.7);
    CHECK(d.weights == a);
    CHECK(d.sigma_data == 0.7);
    CHECK_FALSE(d.has_ema());
    CHECK(&d.sampling_weights() == &d.weights);
    CHECK_THROWS_AS(make_denoiser(c, 5, 0.0), Error);
}

TEST_CASE("noise level features") {
    auto f = noise_features<double>({0.0, 2.0}, 4);
    CHECK(f.shape == ad::Shape{2, 4});
    CHECK(f.data[0] == 1.0);
    CHECK(f.data[1] == 1.0);
    CHECK(f.data[2] == 0.0);
    CHECK(f.data[3] == 0.0);
    CHECK(f.data[4] == doctest::Approx(std::cos(2.0)));
    CHECK(f.data[5] == doctest::Approx(std::cos(0.02)));
    CHECK(f.data[6] == doctest::Approx(std::sin(2.0)));
    CHECK(f.data[7] == doctest::Approx(std::sin(0.02)));
    CHECK_THROWS_AS(noise_features<double>({0.0}, 3), Error);
}

TEST_CASE("cross-attention hand cases") {
    ad::Tape<double> tape;
    // one head, d = 1: q = 2, keys {1, 0}, values {1, 0}
    auto x = tape.constant(tensor<double>({1, 1, 1}, {1}));
    auto ctx = tape.constant(tensor<double>({1, 2, 1}, {1, 0}));
    auto wq = tape.constant(tensor<double>({1, 1}, {2}));
    auto one = tape.constant(tensor<double>({1, 1}, {1}));
    auto y = cross_attention(x, ctx, wq, one, one, 1);
    CHECK(y.value().data[0] == doctest::Approx(std::exp(2.0) / (std::exp(2.0) + 1)).epsilon(1e-12));
    CHECK(y.value().data[0] == doctest::Approx(0.8808).epsilon(1e-4));

    Rng rng(1);
    // T = 1: every row equals the projected value, whatever the queries
    auto xs = tape.constant(random_tensor<double>({2, 5, 4}, rng));
    auto c1 = tape.constant(random_tensor<double>({2, 1, 3}, rng));
    auto wq4 = tape.constant(random_tensor<double>({4, 4}, rng));
    auto wk4 = tape.constant(random_tensor<double>({4, 3}, rng));
    auto wv4 = tape.constant(random_tensor<double>({4, 3}, rng));
    auto single = cross_attention(xs, c1, wq4, wk4, wv4, 2).value();
    for (int b = 0; b < 2; ++b)
        for (int o = 0; o < 4; ++o) {
            double v = 0;
            for (int i = 0; i < 3; ++i) v += c1.value().data[static_cast<size_t>(b * 3 + i)] * wv4.value().data[static_cast<size_t>(o * 3 + i)];
            for (int n = 0; n < 5; ++n) CHECK(single.data[static_cast<size_t>((b * 5 + n) * 4 + o)] == doctest::Approx(v).epsilon(1e-12));
        }

    // zero queries: uniform weights, so the mean of the value rows
    auto c3 = tape.constant(random_tensor<double>({1, 3, 3}, rng));
    auto zero_q = tape.constant(ad::Tensor<double>({4, 4}, 0.0));
    auto x1 = tape.constant(random_tensor<double>({1, 2, 4}, rng));
    auto mean = cross_attention(x1, c3, zero_q, wk4, wv4, 2).value();
    for (int o = 0; o < 4; ++o) {
        double v = 0;
        for (int j = 0; j < 3; ++j)
            for (int i = 0; i < 3; ++i) v += c3.value().data[static_cast<size_t>(j * 3 + i)] * wv4.value().data[static_cast<size_t>(o * 3 + i)] / 3;
        CHECK(mean.data[static_cast<size_t>(o)] == doctest::Approx(v).epsilon(1e-12));
        CHECK(mean.data[static_cast<size_t>(4 + o)] == doctest::Approx(v).epsilon(1e-12));
    }

    CHECK_THROWS_AS(cross_attention(xs, c1, wq4, wk4, wv4, 3), Error);
    auto empty = tape.constant(ad::Tensor<double>({2, 0, 3}));
    CHECK_THROWS_AS(cross_attention(xs, empty, wq4, wk4, wv4, 2), Error);
}

TEST_CASE("cross-attention matches an explicit multi-head loop") {
    Rng rng(2);
    for (int heads : {1, 2, 4}) {
        const int n = 6, d = 8, t = 5, dc = 3;
        auto x = random_tensor<double>({1, n, d}, rng), ctx = random_tensor<double>({1, t, dc}, rng, -2, 2);
        auto wq = random_tensor<double>({d, d}, rng), wk = random_tensor<double>({d, dc}, rng),
             wv = random_tensor<double>({d, dc}, rng);
        ad::Tape<double> tape;
        auto y = cross_attention(tape.constant(x), tape.constant(ctx), tape.constant(wq), tape.constant(wk),
                                 tape.constant(wv), heads);
        auto expect = attention_oracle(x.data, ctx.data, wq.data, wk.data, wv.data, n, d, t, dc, heads);
        for (size_t i = 0; i < expect.size(); ++i) CHECK(y.value().data[i] == doctest::Approx(expect[i]).epsilon(1e-12));
    }
}

TEST_CASE("attention weights sum to one") {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        const int d = 4, dc = 3;
        auto ctx = random_tensor<float>({2, 7, dc}, rng, -3, 3);
        for (int j = 0; j < 14; ++j) ctx.data[static_cast<size_t>(j * dc + dc - 1)] = 1.0f;
        // values are all ones, so each output entry is the weight total
        ad::Tensor<float> wv({d, dc}, 0.0f);
        for (int o = 0; o < d; ++o) wv.data[static_cast<size_t>(o * dc + dc - 1)] = 1.0f;
        ad::Tape<float> tape;
        auto y = cross_attention(tape.constant(random_tensor<float>({2, 9, d}, rng, -3, 3)), tape.constant(ctx),
                                 tape.constant(random_tensor<float>({d, d}, rng, -3, 3)),
                                 tape.constant(random_tensor<float>({d, dc}, rng, -3, 3)), tape.constant(wv), 2);
        for (float v : y.value().data) CHECK(std::abs(v - 1.0f) < 1e-6);
    }
}

TEST_CASE("forward: zero at init, deterministic, batch-order equivariant") {
    auto c = haar::test::tiny_unet();
    Rng rng(4);
    auto x = random_tensor<float>({3, 2, 4, 4}, rng);
    auto ctx = random_tensor<float>({3, 5, 4}, rng);
    std::vector<double> cn{-1.0, 0.3, 2.0};
    auto fresh = init_unet(c, 1);
    for (float v : unet_eval(c, fresh, x, cn, ctx).data) CHECK(v == 0.0f);

    auto w = init_unet(c, 1);
    for (auto& v : w.tensors[w.size() - 2].data) v = static_cast<float>(rng.uniform(-0.2, 0.2));
    auto y1 = unet_eval(c, w, x, cn, ctx), y2 = unet_eval(c, w, x, cn, ctx);
    CHECK(y1.shape == x.shape);
    CHECK(y1.data == y2.data);
    bool nonzero = false;
    for (float v : y1.data) nonzero |= v != 0.0f;
    CHECK(nonzero);

    // reverse the batch
    ad::Tensor<float> xr(x.shape), cr(ctx.shape);
    const size_t xs = 32, cs = 20;
    for (size_t b = 0; b < 3; ++b) {
        std::copy_n(x.data.begin() + static_cast<std::ptrdiff_t>(b * xs), xs, xr.data.begin() + static_cast<std::ptrdiff_t>((2 - b) * xs));
        std::copy_n(ctx.data.begin() + static_cast<std::ptrdiff_t>(b * cs), cs, cr.data.begin() + static_cast<std::ptrdiff_t>((2 - b) * cs));
    }
    auto yr = unet_eval(c, w, xr, {2.0, 0.3, -1.0}, cr);
    for (size_t b = 0; b < 3; ++b)
        for (size_t i = 0; i < xs; ++i) CHECK(yr.data[(2 - b) * xs + i] == y1.data[b * xs + i]);

    // a single sample alone gives its batched result
    ad::Tensor<float> x0({1, 2, 4, 4}), c0({1, 5, 4});
    std::copy_n(x.data.begin() + 32, 32, x0.data.begin());
    std::copy_n(ctx.data.begin() + 20, 20, c0.data.begin());
    auto y0 = unet_eval(c, w, x0, {0.3}, c0);
    for (size_t i = 0; i < xs; ++i) CHECK(y0.data[i] == y1.data[xs + i]);

    CHECK_THROWS_AS(unet_eval(c, w, random_tensor<float>({1, 3, 4, 4}, rng), {0.0}, c0), Error);
    CHECK_THROWS_AS(unet_eval(c, w, x0, {0.0}, random_tensor<float>({1, 5, 3}, rng)), Error);
    CHECK_THROWS_AS(unet_eval(c, w, x0, {0.0, 1.0}, c0), Error);
    auto short_w = w;
    short_w.tensors.pop_back();
    short_w.names.pop_back();
    CHECK_THROWS_AS(unet_eval(c, short_w, x0, {0.0}, c0), Error);
}

TEST_CASE("forward gradient matches finite differences") {
    auto c = haar::test::tiny_unet();
    c.num_res_blocks = 1;
    c.attention_resolutions = {2};
    Rng rng(5);
    auto w = init_unet(c, 2);
    for (auto& v : w.tensors[w.size() - 2].data) v = static_cast<float>(rng.uniform(-0.3, 0.3));
    for (auto& v : w.tensors[w.size() - 1].data) v = static_cast<float>(rng.uniform(-0.3, 0.3));
    ad::Tape<double> tape;
    auto params = nn::bind(tape, w, true);
    auto x = tape.param(random_tensor<double>({1, 2, 4, 4}, rng));
    auto ctx = tape.param(random_tensor<double>({1, 2, 4}, rng));
    auto y = unet_forward(c, params, x, {0.4}, ctx);
    auto r = tape.constant(random_tensor<double>(y.shape(), rng));
    auto loss = ad::sum(ad::mul(y, r));
    auto check = params;
    check.push_back(x);
    check.push_back(ctx);
    auto rep = ad::finite_diff_check(tape, loss, check);
    INFO("failing op " << rep.failing_op << " err " << rep.max_rel_error);
    CHECK(rep.passed);
    CHECK(rep.max_rel_error < 1e-4);
}
