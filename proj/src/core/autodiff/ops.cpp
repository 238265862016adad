// Copyright (C) 2026 The haar-strands Authors
// SPDX-License-Identifier: Apache-2.0

#include "ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

namespace haar::ad {

namespace {

template <class T>
Tensor<T> make_out(Shape shape, bool meta) {
    return meta ? Tensor<T>::meta(std::move(shape)) : Tensor<T>(std::move(shape));
}

Shape broadcast_shape(const Shape& a, const Shape& b) {
    size_t r = std::max(a.size(), b.size());
    Shape out(r, 1);
    for (size_t i = 0; i < r; ++i) {
        int64_t da = i < r - a.size() ? 1 : a[i - (r - a.size())];
        int64_t db = i < r - b.size() ? 1 : b[i - (r - b.size())];
        require(da == db || da == 1 || db == 1, ErrorCode::Shape,
                "cannot broadcast " + shape_str(a) + " with " + shape_str(b));
        out[i] = std::max(da, db);
    }
    return out;
}

/// Strides of `s` aligned to `out`, zero along broadcast axes.
std::vector<int64_t> broadcast_strides(const Shape& s, const Shape& out) {
    size_t r = out.size();
    std::vector<int64_t> st(r, 0);
    int64_t acc = 1;
    for (size_t i = s.size(); i-- > 0;) {
        size_t oi = i + (r - s.size());
        st[oi] = s[i] == 1 ? 0 : acc;
        acc *= s[i];
    }
    return st;
}

/// Calls f(out_index, a_index, b_index) over the broadcast output.
template <class F>
void for_each_broadcast(const Shape& out, const Shape& sa, const Shape& sb, F&& f) {
    int64_t n = numel(out);
    if (sa == out && sb == out) {
        for (int64_t i = 0; i < n; ++i) f(i, i, i);
        return;
    }
    auto st_a = broadcast_strides(sa, out);
    auto st_b = broadcast_strides(sb, out);
    size_t r = out.size();
    std::vector<int64_t> idx(r, 0);
    int64_t ia = 0, ib = 0;
    for (int64_t i = 0; i < n; ++i) {
        f(i, ia, ib);
        for (size_t d = r; d-- > 0;) {
            if (++idx[d] < out[d]) {
                ia += st_a[d];
                ib += st_b[d];
                break;
            }
            ia -= st_a[d] * (out[d] - 1);
            ib -= st_b[d] * (out[d] - 1);
            idx[d] = 0;
        }
    }
}

enum class BinOp { Add, Sub, Mul };

template <class T>
Var<T> binary(Var<T> a, Var<T> b, BinOp kind, const char* name) {
    auto fwd = [kind](const Inputs<T>& in, bool meta) {
        const auto& x = *in[0];
        const auto& y = *in[1];
        auto out = make_out<T>(broadcast_shape(x.shape, y.shape), meta);
        if (meta) return out;
        for_each_broadcast(out.shape, x.shape, y.shape, [&](int64_t o, int64_t i, int64_t j) {
            switch (kind) {
                case BinOp::Add: out.data[o] = x.data[i] + y.data[j]; break;
                case BinOp::Sub: out.data[o] = x.data[i] - y.data[j]; break;
                case BinOp::Mul: out.data[o] = x.data[i] * y.data[j]; break;
            }
        });
        return out;
    };
    auto bwd = [kind](const Inputs<T>& in, const Tensor<T>& out, const Tensor<T>& g, const std::vector<Tensor<T>*>& gin) {
        const auto& x = *in[0];
        const auto& y = *in[1];
        for_each_broadcast(out.shape, x.shape, y.shape, [&](int64_t o, int64_t i, int64_t j) {
            T go = g.data[o];
            switch (kind) {
                case BinOp::Add:
                    if (gin[0]) gin[0]->data[i] += go;
                    if (gin[1]) gin[1]->data[j] += go;
                    break;
                case BinOp::Sub:
                    if (gin[0]) gin[0]->data[i] += go;
                    if (gin[1]) gin[1]->data[j] -= go;
                    break;
                case BinOp::Mul:
                    if (gin[0]) gin[0]->data[i] += go * y.data[j];
                    if (gin[1]) gin[1]->data[j] += go * x.data[i];
                    break;
            }
        });
    };
    return a.tape->apply(name, {a, b}, fwd, bwd);
}

/// Elementwise unary op given f(x) and f'(x, y).
template <class T, class F, class D>
Var<T> unary(Var<T> a, const char* name, F f, D df) {
    auto fwd = [f](const Inputs<T>& in, bool meta) {
        auto out = make_out<T>(in[0]->shape, meta);
        if (meta) return out;
        const auto& x = in[0]->data;
        for (size_t i = 0; i < x.size(); ++i) out.data[i] = f(x[i]);
        return out;
    };
    auto bwd = [df](const Inputs<T>& in, const Tensor<T>& out, const Tensor<T>& g, const std::vector<Tensor<T>*>& gin) {
        if (!gin[0]) return;
        const auto& x = in[0]->data;
        for (size_t i = 0; i < x.size(); ++i) gin[0]->data[i] += g.data[i] * df(x[i], out.data[i]);
    };
    return a.tape->apply(name, {a}, fwd, bwd);
}

template <class T>
std::vector<T> transposed(const T* src, int64_t rows, int64_t cols) {
    std::vector<T> t(static_cast<size_t>(rows * cols));
    for (int64_t r = 0; r < rows; ++r)
        for (int64_t c = 0; c < cols; ++c) t[static_cast<size_t>(c * rows + r)] = src[r * cols + c];
    return t;
}

}  // namespace

const std::vector<std::string>& registered_ops() {
    static const std::vector<std::string> names{
        "add",     "sub",        "mul",     "scale",   "add_scalar", "exp",   "log",
        "silu",    "matmul",     "conv2d",  "group_norm", "layer_norm", "softmax", "reshape",
        "permute", "concat",     "slice",   "resize_nearest", "resize_bilinear", "sum", "mean"};
    return names;
}

template <class T>
void gemm(const T* a, bool trans_a, const T* b, bool trans_b, T* c, int64_t m, int64_t k, int64_t n, bool accumulate) {
    std::vector<T> bt;
    const T* bn = b;
    if (trans_b) {
        bt = transposed(b, n, k);
        bn = bt.data();
    }
    for (int64_t i = 0; i < m; ++i) {
        T* crow = c + i * n;
        if (!accumulate) std::fill(crow, crow + n, T(0));
        for (int64_t p = 0; p < k; ++p) {
            T av = trans_a ? a[p * m + i] : a[i * k + p];
            const T* brow = bn + p * n;
            for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

template <class T> Var<T> add(Var<T> a, Var<T> b) { return binary(a, b, BinOp::Add, "add"); }
template <class T> Var<T> sub(Var<T> a, Var<T> b) { return binary(a, b, BinOp::Sub, "sub"); }
template <class T> Var<T> mul(Var<T> a, Var<T> b) { return binary(a, b, BinOp::Mul, "mul"); }

template <class T>
Var<T> scale(Var<T> a, double c) {
    T s = static_cast<T>(c);
    return unary(a, "scale", [s](T x) { return x * s; }, [s](T, T) { return s; });
}

template <class T>
Var<T> add_scalar(Var<T> a, double c) {
    T s = static_cast<T>(c);
    return unary(a, "add_scalar", [s](T x) { return x + s; }, [](T, T) { return T(1); });
}

template <class T>
Var<T> exp(Var<T> a) {
    return unary(a, "exp", [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

template <class T>
Var<T> log(Var<T> a) {
    return unary(a, "log", [](T x) { return std::log(x); }, [](T x, T) { return T(1) / x; });
}

template <class T>
Var<T> silu(Var<T> a) {
    return unary(
        a, "silu", [](T x) { return x / (T(1) + std::exp(-x)); },
        [](T x, T) {
            T s = T(1) / (T(1) + std::exp(-x));
            return s * (T(1) + x * (T(1) - s));
        });
}

template <class T>
Var<T> matmul(Var<T> a, Var<T> b, bool trans_a, bool trans_b) {
    auto dims = [trans_a, trans_b](const Shape& sa, const Shape& sb) {
        require(sa.size() == sb.size() && (sa.size() == 2 || sa.size() == 3), ErrorCode::Shape,
                "matmul expects matching rank 2 or 3 operands, got " + shape_str(sa) + " and " + shape_str(sb));
        size_t r = sa.size();
        int64_t batch = r == 3 ? sa[0] : 1;
        if (r == 3) require(sb[0] == batch, ErrorCode::Shape, "matmul batch mismatch");
        int64_t m = trans_a ? sa[r - 1] : sa[r - 2];
        int64_t k = trans_a ? sa[r - 2] : sa[r - 1];
        int64_t kb = trans_b ? sb[r - 1] : sb[r - 2];
        int64_t n = trans_b ? sb[r - 2] : sb[r - 1];
        require(k == kb, ErrorCode::Shape, "matmul inner dimension mismatch " + shape_str(sa) + " x " + shape_str(sb));
        return std::array<int64_t, 4>{batch, m, k, n};
    };
    auto fwd = [=](const Inputs<T>& in, bool meta) {
        auto [batch, m, k, n] = dims(in[0]->shape, in[1]->shape);
        Shape os = in[0]->shape.size() == 3 ? Shape{batch, m, n} : Shape{m, n};
        auto out = make_out<T>(os, meta);
        if (meta) return out;
        for (int64_t bi = 0; bi < batch; ++bi)
            gemm(in[0]->data.data() + bi * m * k, trans_a, in[1]->data.data() + bi * k * n, trans_b,
                 out.data.data() + bi * m * n, m, k, n, false);
        return out;
    };
    auto bwd = [=](const Inputs<T>& in, const Tensor<T>&, const Tensor<T>& g, const std::vector<Tensor<T>*>& gin) {
        auto [batch, m, k, n] = dims(in[0]->shape, in[1]->shape);
        for (int64_t bi = 0; bi < batch; ++bi) {
            const T* A = in[0]->data.data() + bi * m * k;
            const T* B = in[1]->data.data() + bi * k * n;
            const T* G = g.data.data() + bi * m * n;
            if (gin[0]) {
                T* dA = gin[0]->data.data() + bi * m * k;
                if (!trans_a)
                    gemm(G, false, B, !trans_b, dA, m, n, k, true);
                else
                    gemm(B, trans_b, G, true, dA, k, n, m, true);
            }
            if (gin[1]) {
                T* dB = gin[1]->data.data() + bi * k * n;
                if (!trans_b)
                    gemm(A, !trans_a, G, false, dB, k, m, n, true);
                else
                    gemm(G, true, A, trans_a, dB, n, m, k, true);
            }
        }
    };
    return a.tape->apply("matmul", {a, b}, fwd, bwd);
}

template <class T>
Var<T> conv2d(Var<T> x, Var<T> w, Var<T> bias, int stride) {
    require(stride >= 1, ErrorCode::InvalidArgument, "conv2d stride must be >= 1");
    struct State {
        std::vector<T> cols;  // per sample (C*k*k, P)
    };
    auto st = std::make_shared<State>();
    bool has_bias = bias.valid();
    auto geometry = [stride](const Shape& xs, const Shape& ws) {
        require(xs.size() == 4 && ws.size() == 4, ErrorCode::Shape, "conv2d expects (N,C,H,W) input and (O,C,k,k) kernel");
        require(ws[1] == xs[1], ErrorCode::Shape, "conv2d channel mismatch " + shape_str(xs) + " vs " + shape_str(ws));
        require(ws[2] == ws[3] && ws[2] % 2 == 1, ErrorCode::Shape, "conv2d kernel must be square and odd");
        int64_t k = ws[2], pad = k / 2;
        int64_t ho = (xs[2] + 2 * pad - k) / stride + 1;
        int64_t wo = (xs[3] + 2 * pad - k) / stride + 1;
        return std::array<int64_t, 4>{k, pad, ho, wo};
    };
    auto fwd = [=](const Inputs<T>& in, bool meta) {
        const auto& X = *in[0];
        const auto& W = *in[1];
        auto [k, pad, ho, wo] = geometry(X.shape, W.shape);
        int64_t n = X.shape[0], c = X.shape[1], h = X.shape[2], wd = X.shape[3], o = W.shape[0];
        if (has_bias) require(in[2]->shape == Shape{o}, ErrorCode::Shape, "conv2d bias shape mismatch");
        auto out = make_out<T>({n, o, ho, wo}, meta);
        if (meta) return out;
        int64_t ckk = c * k * k, p = ho * wo;
        st->cols.assign(static_cast<size_t>(n * ckk * p), T(0));
        for (int64_t s = 0; s < n; ++s) {
            T* cols = st->cols.data() + s * ckk * p;
            const T* xs = X.data.data() + s * c * h * wd;
            for (int64_t ci = 0; ci < c; ++ci)
                for (int64_t ki = 0; ki < k; ++ki)
                    for (int64_t kj = 0; kj < k; ++kj) {
                        T* row = cols + ((ci * k + ki) * k + kj) * p;
                        for (int64_t oy = 0; oy < ho; ++oy) {
                            int64_t iy = oy * stride + ki - pad;
                            if (iy < 0 || iy >= h) continue;
                            for (int64_t ox = 0; ox < wo; ++ox) {
                                int64_t ix = ox * stride + kj - pad;
                                if (ix < 0 || ix >= wd) continue;
                                row[oy * wo + ox] = xs[(ci * h + iy) * wd + ix];
                            }
                        }
                    }
            T* os = out.data.data() + s * o * p;
            gemm(W.data.data(), false, cols, false, os, o, ckk, p, false);
            if (has_bias)
                for (int64_t oc = 0; oc < o; ++oc) {
                    T bv = in[2]->data[oc];
                    for (int64_t q = 0; q < p; ++q) os[oc * p + q] += bv;
                }
        }
        return out;
    };
    auto bwd = [=](const Inputs<T>& in, const Tensor<T>&, const Tensor<T>& g, const std::vector<Tensor<T>*>& gin) {
        const auto& X = *in[0];
        const auto& W = *in[1];
        auto [k, pad, ho, wo] = geometry(X.shape, W.shape);
        int64_t n = X.shape[0], c = X.shape[1], h = X.shape[2], wd = X.shape[3], o = W.shape[0];
        int64_t ckk = c * k * k, p = ho * wo;
        std::vector<T> gcols(static_cast<size_t>(ckk * p));
        for (int64_t s = 0; s < n; ++s) {
            const T* G = g.data.data() + s * o * p;
            const T* cols = st->cols.data() + s * ckk * p;
            if (gin[1]) gemm(G, false, cols, true, gin[1]->data.data(), o, p, ckk, true);
            if (has_bias && gin[2])
                for (int64_t oc = 0; oc < o; ++oc) {
                    T acc = 0;
                    for (int64_t q = 0; q < p; ++q) acc += G[oc * p + q];
                    gin[2]->data[oc] += acc;
                }
            if (gin[0]) {
                gemm(W.data.data(), true, G, false, gcols.data(), ckk, o, p, false);
                T* gx = gin[0]->data.data() + s * c * h * wd;
                for (int64_t ci = 0; ci < c; ++ci)
                    for (int64_t ki = 0; ki < k; ++ki)
                        for (int64_t kj = 0; kj < k; ++kj) {
                            const T* row = gcols.data() + ((ci * k + ki) * k + kj) * p;
                            for (int64_t oy = 0; oy < ho; ++oy) {
                                int64_t iy = oy * stride + ki - pad;
                                if (iy < 0 || iy >= h) continue;
                                for (int64_t ox = 0; ox < wo; ++ox) {
                                    int64_t ix = ox * stride + kj - pad;
                                    if (ix < 0 || ix >= wd) continue;
                                    gx[(ci * h + iy) * wd + ix] += row[oy * wo + ox];
                                }
                            }
                        }
            }
        }
    };
    std::vector<Var<T>> inputs{x, w};
    if (has_bias) inputs.push_back(bias);
    return x.tape->apply("conv2d", inputs, fwd, bwd);
}

namespace {

/// Per-row statistics kept between forward and backward of the norm ops.
template <class T>
struct NormState {
    std::vector<T> mean, rstd;
};

}  // namespace

template <class T>
Var<T> group_norm(Var<T> x, Var<T> gamma, Var<T> beta, int groups, double eps) {
    auto st = std::make_shared<NormState<T>>();
    auto check = [groups](const Shape& xs, const Shape& gs, const Shape& bs) {
        require(xs.size() >= 2, ErrorCode::Shape, "group_norm expects (N,C,...)");
        require(groups > 0 && xs[1] % groups == 0, ErrorCode::Shape,
                "group_norm: channels " + std::to_string(xs[1]) + " not divisible by groups " + std::to_string(groups));
        require(gs == Shape{xs[1]} && bs == Shape{xs[1]}, ErrorCode::Shape, "group_norm affine shape mismatch");
    };
    auto fwd = [=](const Inputs<T>& in, bool meta) {
        const auto& X = *in[0];
        check(X.shape, in[1]->shape, in[2]->shape);
        auto out = make_out<T>(X.shape, meta);
        if (meta) return out;
        int64_t n = X.shape[0], c = X.shape[1], spatial = X.size() / (n * c);
        int64_t cpg = c / groups, len = cpg * spatial;
        st->mean.assign(static_cast<size_t>(n * groups), 0);
        st->rstd.assign(static_cast<size_t>(n * groups), 0);
        for (int64_t s = 0; s < n; ++s)
            for (int64_t gi = 0; gi < groups; ++gi) {
                const T* xs = X.data.data() + (s * c + gi * cpg) * spatial;
                T m = 0;
                for (int64_t e = 0; e < len; ++e) m += xs[e];
                m /= static_cast<T>(len);
                T v = 0;
                for (int64_t e = 0; e < len; ++e) v += (xs[e] - m) * (xs[e] - m);
                v /= static_cast<T>(len);
                T r = T(1) / std::sqrt(v + static_cast<T>(eps));
                st->mean[s * groups + gi] = m;
                st->rstd[s * groups + gi] = r;
                T* os = out.data.data() + (s * c + gi * cpg) * spatial;
                for (int64_t e = 0; e < len; ++e) {
                    int64_t ch = gi * cpg + e / spatial;
                    os[e] = (xs[e] - m) * r * in[1]->data[ch] + in[2]->data[ch];
                }
            }
        return out;
    };
    auto bwd = [=](const Inputs<T>& in, const Tensor<T>&, const Tensor<T>& g, const std::vector<Tensor<T>*>& gin) {
        const auto& X = *in[0];
        const auto& gamma_v = *in[1];
        int64_t n = X.shape[0], c = X.shape[1], spatial = X.size() / (n * c);
        int64_t cpg = c / groups, len = cpg * spatial;
        std::vector<T> dxhat(static_cast<size_t>(len));
        for (int64_t s = 0; s < n; ++s)
            for (int64_t gi = 0; gi < groups; ++gi) {
                int64_t base = (s * c + gi * cpg) * spatial;
                const T* xs = X.data.data() + base;
                const T* gs = g.data.data() + base;
                T m = st->mean[s * groups + gi], r = st->rstd[s * groups + gi];
                T sum_d = 0, sum_dx = 0;
                for (int64_t e = 0; e < len; ++e) {
                    int64_t ch = gi * cpg + e / spatial;
                    T xh = (xs[e] - m) * r;
                    if (gin[1]) gin[1]->data[ch] += gs[e] * xh;
                    if (gin[2]) gin[2]->data[ch] += gs[e];
                    dxhat[e] = gs[e] * gamma_v.data[ch];
                    sum_d += dxhat[e];
                    sum_dx += dxhat[e] * xh;
                }
                if (!gin[0]) continue;
                T* gx = gin[0]->data.data() + base;
                T inv = T(1) / static_cast<T>(len);
                for (int64_t e = 0; e < len; ++e) {
                    T xh = (xs[e] - m) * r;
                    gx[e] += r * (dxhat[e] - inv * sum_d - xh * inv * sum_dx);
                }
            }
    };
    return x.tape->apply("group_norm", {x, gamma, beta}, fwd, bwd);
}

template <class T>
Var<T> layer_norm(Var<T> x, Var<T> gamma, Var<T> beta, double eps) {
    auto st = std::make_shared<NormState<T>>();
    auto fwd = [=](const Inputs<T>& in, bool meta) {
        const auto& X = *in[0];
        require(!X.shape.empty(), ErrorCode::Shape, "layer_norm on a scalar");
        int64_t d = X.shape.back();
        require(in[1]->shape == Shape{d} && in[2]->shape == Shape{d}, ErrorCode::Shape, "layer_norm affine shape mismatch");
        auto out = make_out<T>(X.shape, meta);
        if (meta) return out;
        int64_t rows = X.size() / d;
        st->mean.assign(static_cast<size_t>(rows), 0);
        st->rstd.assign(static_cast<size_t>(rows), 0);
        for (int64_t r = 0; r < rows; ++r) {
            const T* xs = X.data.data() + r * d;
            T m = 0;
            for (int64_t e = 0; e < d; ++e) m += xs[e];
            m /= static_cast<T>(d);
            T v = 0;
            for (int64_t e = 0; e < d; ++e) v += (xs[e] - m) * (xs[e] - m);
            v /= static_cast<T>(d);
            T rs = T(1) / std::sqrt(v + static_cast<T>(eps));
            st->mean[r] = m;
            st->rstd[r] = rs;
            T* os = out.data.data() + r * d;
            for (int64_t e = 0; e < d; ++e) os[e] = (xs[e] - m) * rs * in[1]->data[e] + in[2]->data[e];
        }
        return out;
    };
    auto bwd = [=](const Inputs<T>& in, const Tensor<T>&, const Tensor<T>& g, const std::vector<Tensor<T>*>& gin) {
        const auto& X = *in[0];
        int64_t d = X.shape.back(), rows = X.size() / d;
        std::vector<T> dxhat(static_cast<size_t>(d));
        for (int64_t r = 0; r < rows; ++r) {
            const T* xs = X.data.data() + r * d;
            const T* gs = g.data.data() + r * d;
            T m = st->mean[r], rs = st->rstd[r];
            T sum_d = 0, sum_dx = 0;
            for (int64_t e = 0; e < d; ++e) {
                T xh = (xs[e] - m) * rs;
                if (gin[1]) gin[1]->data[e] += gs[e] * xh;
                if (gin[2]) gin[2]->data[e] += gs[e];
                dxhat[e] = gs[e] * in[1]->data[e];
                sum_d += dxhat[e];
                sum_dx += dxhat[e] * xh;
            }
            if (!gin[0]) continue;
            T* gx = gin[0]->data.data() + r * d;
            T inv = T(1) / static_cast<T>(d);
            for (int64_t e = 0; e < d; ++e) {
                T xh = (xs[e] - m) * rs;
                gx[e] += rs * (dxhat[e] - inv * sum_d - xh * inv * sum_dx);
            }
        }
    };
    return x.tape->apply("layer_norm", {x, gamma, beta}, fwd, bwd);
}

template <class T>
Var<T> softmax(Var<T> x) {
    auto fwd = [](const Inputs<T>& in, bool meta) {
        const auto& X = *in[0];
        require(!X.shape.empty(), ErrorCode::Shape, "softmax on a scalar");
        auto out = make_out<T>(X.shape, meta);
        if (meta) return out;
        int64_t d = X.shape.back(), rows = X.size() / d;
        for (int64_t r = 0; r < rows; ++r) {
            const T* xs = X.data.data() + r * d;
            T* os = out.data.data() + r * d;
            T mx = *std::max_element(xs, xs + d);
            T total = 0;
            for (int64_t e = 0; e < d; ++e) {
                os[e] = std::exp(xs[e] - mx);
                total += os[e];
            }
            for (int64_t e = 0; e < d; ++e) os[e] /= total;
        }
        return out;
    };
    auto bwd = [](const Inputs<T>&, const Tensor<T>& y, const Tensor<T>& g, const std::vector<Tensor<T>*>& gin) {
        if (!gin[0]) return;
        int64_t d = y.shape.back(), rows = y.size() / d;
        for (int64_t r = 0; r < rows; ++r) {
            const T* ys = y.data.data() + r * d;
            const T* gs = g.data.data() + r * d;
            T dotp = 0;
            for (int64_t e = 0; e < d; ++e) dotp += gs[e] * ys[e];
            T* gx = gin[0]->data.data() + r * d;
            for (int64_t e = 0; e < d; ++e) gx[e] += ys[e] * (gs[e] - dotp);
        }
    };
    return x.tape->apply("softmax", {x}, fwd, bwd);
}

template <class T>
Var<T> reshape(Var<T> x, Shape shape) {
    auto fwd = [shape](const Inputs<T>& in, bool meta) {
        require(numel(shape) == in[0]->size(), ErrorCode::Shape,
                "reshape " + shape_str(in[0]->shape) + " -> " + shape_str(shape) + " changes element count");
        if (meta) return Tensor<T>::meta(shape);
        return Tensor<T>(shape, in[0]->data);
    };
    auto bwd = [](const Inputs<T>&, const Tensor<T>&, const Tensor<T>& g, const std::vector<Tensor<T>*>& gin) {
        if (!gin[0]) return;
        for (size_t i = 0; i < g.data.size(); ++i) gin[0]->data[i] += g.data[i];
    };
    return x.tape->apply("reshape", {x}, fwd, bwd);
}

template <class T>
Var<T> permute(Var<T> x, std::vector<int> perm) {
    auto plan = [perm](const Shape& s) {
        require(perm.size() == s.size(), ErrorCode::Shape, "permute rank mismatch");
        std::vector<int> seen(s.size(), 0);
        for (int p : perm) {
            require(p >= 0 && p < static_cast<int>(s.size()) && !seen[static_cast<size_t>(p)], ErrorCode::InvalidArgument,
                    "permute: invalid permutation");
            seen[static_cast<size_t>(p)] = 1;
        }
        Shape os(s.size());
        std::vector<int64_t> in_stride(s.size()), st(s.size());
        int64_t acc = 1;
        for (size_t d = s.size(); d-- > 0;) {
            in_stride[d] = acc;
            acc *= s[d];
        }
        for (size_t d = 0; d < s.size(); ++d) {
            os[d] = s[static_cast<size_t>(perm[d])];
            st[d] = in_stride[static_cast<size_t>(perm[d])];
        }
        return std::make_pair(os, st);
    };
    // Visits output elements in order with the matching input offset.
    auto walk = [](const Shape& os, const std::vector<int64_t>& st, auto&& f) {
        int64_t n = numel(os);
        std::vector<int64_t> idx(os.size(), 0);
        int64_t off = 0;
        for (int64_t i = 0; i < n; ++i) {
            f(i, off);
            for (size_t d = os.size(); d-- > 0;) {
                if (++idx[d] < os[d]) {
                    off += st[d];
                    break;
                }
                off -= st[d] * (os[d] - 1);
                idx[d] = 0;
            }
        }
    };
    auto fwd = [=](const Inputs<T>& in, bool meta) {
        auto [os, st] = plan(in[0]->shape);
        auto out = make_out<T>(os, meta);
        if (meta) return out;
        walk(os, st, [&](int64_t i, int64_t off) { out.data[i] = in[0]->data[off]; });
        return out;
    };
    auto bwd = [=](const Inputs<T>& in, const Tensor<T>&, const Tensor<T>& g, const std::vector<Tensor<T>*>& gin) {
        if (!gin[0]) return;
        auto [os, st] = plan(in[0]->shape);
        walk(os, st, [&](int64_t i, int64_t off) { gin[0]->data[off] += g.data[i]; });
    };
    return x.tape->apply("permute", {x}, fwd, bwd);
}

template <class T>
Var<T> concat(const std::vector<Var<T>>& xs, int axis) {
    require(!xs.empty(), ErrorCode::InvalidArgument, "concat of an empty list");
    auto layout = [axis](const Inputs<T>& in) {
        const Shape& s0 = in[0]->shape;
        int r = static_cast<int>(s0.size());
        int ax = axis < 0 ? axis + r : axis;
        require(ax >= 0 && ax < r, ErrorCode::InvalidArgument, "concat axis out of range");
        Shape os = s0;
        os[static_cast<size_t>(ax)] = 0;
        for (const auto* t : in) {
            require(t->shape.size() == s0.size(), ErrorCode::Shape, "concat rank mismatch");
            for (int d = 0; d < r; ++d)
                if (d != ax)
                    require(t->shape[static_cast<size_t>(d)] == s0[static_cast<size_t>(d)], ErrorCode::Shape,
                            "concat shape mismatch " + shape_str(t->shape) + " vs " + shape_str(s0));
            os[static_cast<size_t>(ax)] += t->shape[static_cast<size_t>(ax)];
        }
        int64_t outer = 1, inner = 1;
        for (int d = 0; d < ax; ++d) outer *= s0[static_cast<size_t>(d)];
        for (int d = ax + 1; d < r; ++d) inner *= s0[static_cast<size_t>(d)];
        return std::make_tuple(os, ax, outer, inner);
    };
    auto fwd = [=](const Inputs<T>& in, bool meta) {
        auto [os, ax, outer, inner] = layout(in);
        auto out = make_out<T>(os, meta);
        if (meta) return out;
        int64_t total = os[static_cast<size_t>(ax)] * inner;
        int64_t off = 0;
        for (const auto* t : in) {
            int64_t blk = t->shape[static_cast<size_t>(ax)] * inner;
            for (int64_t o = 0; o < outer; ++o)
                std::copy(t->data.begin() + o * blk, t->data.begin() + (o + 1) * blk, out.data.begin() + o * total + off);
            off += blk;
        }
        return out;
    };
    auto bwd = [=](const Inputs<T>& in, const Tensor<T>& out, const Tensor<T>& g, const std::vector<Tensor<T>*>& gin) {
        auto [os, ax, outer, inner] = layout(in);
        int64_t total = out.shape[static_cast<size_t>(ax)] * inner;
        int64_t off = 0;
        for (size_t k = 0; k < in.size(); ++k) {
            int64_t blk = in[k]->shape[static_cast<size_t>(ax)] * inner;
            if (gin[k])
                for (int64_t o = 0; o < outer; ++o)
                    for (int64_t e = 0; e < blk; ++e) gin[k]->data[o * blk + e] += g.data[o * total + off + e];
            off += blk;
        }
    };
    return xs[0].tape->apply("concat", xs, fwd, bwd);
}

template <class T>
Var<T> slice(Var<T> x, int axis, int64_t start, int64_t length) {
    auto layout = [=](const Shape& s) {
        int r = static_cast<int>(s.size());
        int ax = axis < 0 ? axis + r : axis;
        require(ax >= 0 && ax < r, ErrorCode::InvalidArgument, "slice axis out of range");
        require(start >= 0 && length >= 0 && start + length <= s[static_cast<size_t>(ax)], ErrorCode::Shape,
                "slice [" + std::to_string(start) + "," + std::to_string(start + length) + ") out of range for " + shape_str(s));
        Shape os = s;
        os[static_cast<size_t>(ax)] = length;
        int64_t outer = 1, inner = 1;
        for (int d = 0; d < ax; ++d) outer *= s[static_cast<size_t>(d)];
        for (int d = ax + 1; d < r; ++d) inner *= s[static_cast<size_t>(d)];
        return std::make_tuple(os, s[static_cast<size_t>(ax)], outer, inner);
    };
    auto fwd = [=](const Inputs<T>& in, bool meta) {
        auto [os, full, outer, inner] = layout(in[0]->shape);
        auto out = make_out<T>(os, meta);
        if (meta) return out;
        for (int64_t o = 0; o < outer; ++o)
            std::copy(in[0]->data.begin() + (o * full + start) * inner, in[0]->data.begin() + (o * full + start + length) * inner,
                      out.data.begin() + o * length * inner);
        return out;
    };
    auto bwd = [=](const Inputs<T>& in, const Tensor<T>&, const Tensor<T>& g, const std::vector<Tensor<T>*>& gin) {
        if (!gin[0]) return;
        auto [os, full, outer, inner] = layout(in[0]->shape);
        for (int64_t o = 0; o < outer; ++o)
            for (int64_t e = 0; e < length * inner; ++e) gin[0]->data[(o * full + start) * inner + e] += g.data[o * length * inner + e];
    };
    return x.tape->apply("slice", {x}, fwd, bwd);
}

template <class T>
Var<T> resize_nearest(Var<T> x, int64_t height, int64_t width) {
    auto src = [](int64_t i, int64_t in_n, int64_t out_n) { return std::min(in_n - 1, (i * in_n) / out_n); };
    auto fwd = [=](const Inputs<T>& in, bool meta) {
        const auto& X = *in[0];
        require(X.rank() == 4 && height > 0 && width > 0, ErrorCode::Shape, "resize_nearest expects (N,C,H,W)");
        int64_t nc = X.shape[0] * X.shape[1], h = X.shape[2], w = X.shape[3];
        auto out = make_out<T>({X.shape[0], X.shape[1], height, width}, meta);
        if (meta) return out;
        for (int64_t p = 0; p < nc; ++p)
            for (int64_t i = 0; i < height; ++i)
                for (int64_t j = 0; j < width; ++j)
                    out.data[(p * height + i) * width + j] = X.data[(p * h + src(i, h, height)) * w + src(j, w, width)];
        return out;
    };
    auto bwd = [=](const Inputs<T>& in, const Tensor<T>&, const Tensor<T>& g, const std::vector<Tensor<T>*>& gin) {
        if (!gin[0]) return;
        const auto& X = *in[0];
        int64_t nc = X.shape[0] * X.shape[1], h = X.shape[2], w = X.shape[3];
        for (int64_t p = 0; p < nc; ++p)
            for (int64_t i = 0; i < height; ++i)
                for (int64_t j = 0; j < width; ++j)
                    gin[0]->data[(p * h + src(i, h, height)) * w + src(j, w, width)] += g.data[(p * height + i) * width + j];
    };
    return x.tape->apply("resize_nearest", {x}, fwd, bwd);
}

template <class T>
Var<T> resize_bilinear(Var<T> x, int64_t height, int64_t width) {
    struct Tap {
        int64_t i0, i1;
        double t;
    };
    auto taps = [](int64_t in_n, int64_t out_n) {
        std::vector<Tap> v(static_cast<size_t>(out_n));
        for (int64_t i = 0; i < out_n; ++i) {
            double s = (static_cast<double>(i) + 0.5) * static_cast<double>(in_n) / static_cast<double>(out_n) - 0.5;
            s = std::max(0.0, s);
            auto i0 = std::min(in_n - 1, static_cast<int64_t>(std::floor(s)));
            v[static_cast<size_t>(i)] = {i0, std::min(in_n - 1, i0 + 1), s - static_cast<double>(i0)};
        }
        return v;
    };
    auto fwd = [=](const Inputs<T>& in, bool meta) {
        const auto& X = *in[0];
        require(X.rank() == 4 && height > 0 && width > 0, ErrorCode::Shape, "resize_bilinear expects (N,C,H,W)");
        int64_t nc = X.shape[0] * X.shape[1], h = X.shape[2], w = X.shape[3];
        auto out = make_out<T>({X.shape[0], X.shape[1], height, width}, meta);
        if (meta) return out;
        auto ty = taps(h, height), tx = taps(w, width);
        for (int64_t p = 0; p < nc; ++p) {
            const T* xs = X.data.data() + p * h * w;
            for (int64_t i = 0; i < height; ++i)
                for (int64_t j = 0; j < width; ++j) {
                    const auto& a = ty[static_cast<size_t>(i)];
                    const auto& b = tx[static_cast<size_t>(j)];
                    T ay = static_cast<T>(a.t), ax = static_cast<T>(b.t);
                    T top = xs[a.i0 * w + b.i0] * (1 - ax) + xs[a.i0 * w + b.i1] * ax;
                    T bot = xs[a.i1 * w + b.i0] * (1 - ax) + xs[a.i1 * w + b.i1] * ax;
                    out.data[(p * height + i) * width + j] = top * (1 - ay) + bot * ay;
                }
        }
        return out;
    };
    auto bwd = [=](const Inputs<T>& in, const Tensor<T>&, const Tensor<T>& g, const std::vector<Tensor<T>*>& gin) {
        if (!gin[0]) return;
        const auto& X = *in[0];
        int64_t nc = X.shape[0] * X.shape[1], h = X.shape[2], w = X.shape[3];
        auto ty = taps(h, height), tx = taps(w, width);
        for (int64_t p = 0; p < nc; ++p) {
            T* gx = gin[0]->data.data() + p * h * w;
            for (int64_t i = 0; i < height; ++i)
                for (int64_t j = 0; j < width; ++j) {
                    const auto& a = ty[static_cast<size_t>(i)];
                    const auto& b = tx[static_cast<size_t>(j)];
                    T ay = static_cast<T>(a.t), ax = static_cast<T>(b.t);
                    T go = g.data[(p * height + i) * width + j];
                    gx[a.i0 * w + b.i0] += go * (1 - ay) * (1 - ax);
                    gx[a.i0 * w + b.i1] += go * (1 - ay) * ax;
                    gx[a.i1 * w + b.i0] += go * ay * (1 - ax);
                    gx[a.i1 * w + b.i1] += go * ay * ax;
                }
        }
    };
    return x.tape->apply("resize_bilinear", {x}, fwd, bwd);
}

template <class T>
Var<T> sum(Var<T> x) {
    auto fwd = [](const Inputs<T>& in, bool meta) {
        auto out = make_out<T>(Shape{}, meta);
        if (meta) return out;
        T acc = 0;
        for (T v : in[0]->data) acc += v;
        out.data[0] = acc;
        return out;
    };
    auto bwd = [](const Inputs<T>&, const Tensor<T>&, const Tensor<T>& g, const std::vector<Tensor<T>*>& gin) {
        if (!gin[0]) return;
        for (auto& v : gin[0]->data) v += g.data[0];
    };
    return x.tape->apply("sum", {x}, fwd, bwd);
}

template <class T>
Var<T> mean(Var<T> x) {
    auto fwd = [](const Inputs<T>& in, bool meta) {
        auto out = make_out<T>(Shape{}, meta);
        if (meta) return out;
        T acc = 0;
        for (T v : in[0]->data) acc += v;
        out.data[0] = acc / static_cast<T>(in[0]->size());
        return out;
    };
    auto bwd = [](const Inputs<T>& in, const Tensor<T>&, const Tensor<T>& g, const std::vector<Tensor<T>*>& gin) {
        if (!gin[0]) return;
        T s = g.data[0] / static_cast<T>(in[0]->size());
        for (auto& v : gin[0]->data) v += s;
    };
    return x.tape->apply("mean", {x}, fwd, bwd);
}

template <class T>
Var<T> linear(Var<T> x, Var<T> w, Var<T> bias) {
    const Shape xs = x.shape();
    require(!xs.empty() && w.shape().size() == 2 && xs.back() == w.shape()[1], ErrorCode::Shape,
            "linear: input " + shape_str(xs) + " incompatible with weight " + shape_str(w.shape()));
    int64_t in_f = xs.back(), out_f = w.shape()[0];
    auto flat = reshape(x, {numel(xs) / in_f, in_f});
    auto y = matmul(flat, w, false, true);
    if (bias.valid()) y = add(y, bias);
    Shape os = xs;
    os.back() = out_f;
    return reshape(y, os);
}

#define HAAR_INSTANTIATE_OPS(T)                                                                       \
    template Var<T> add(Var<T>, Var<T>);                                                              \
    template Var<T> sub(Var<T>, Var<T>);                                                              \
    template Var<T> mul(Var<T>, Var<T>);                                                              \
    template Var<T> scale(Var<T>, double);                                                            \
    template Var<T> add_scalar(Var<T>, double);                                                       \
    template Var<T> exp(Var<T>);                                                                      \
    template Var<T> log(Var<T>);                                                                      \
    template Var<T> silu(Var<T>);                                                                     \
    template Var<T> matmul(Var<T>, Var<T>, bool, bool);                                               \
    template Var<T> conv2d(Var<T>, Var<T>, Var<T>, int);                                              \
    template Var<T> group_norm(Var<T>, Var<T>, Var<T>, int, double);                                  \
    template Var<T> layer_norm(Var<T>, Var<T>, Var<T>, double);                                       \
    template Var<T> softmax(Var<T>);                                                                  \
    template Var<T> reshape(Var<T>, Shape);                                                           \
    template Var<T> permute(Var<T>, std::vector<int>);                                                \
    template Var<T> concat(const std::vector<Var<T>>&, int);                                          \
    template Var<T> slice(Var<T>, int, int64_t, int64_t);                                             \
    template Var<T> resize_nearest(Var<T>, int64_t, int64_t);                                         \
    template Var<T> resize_bilinear(Var<T>, int64_t, int64_t);                                        \
    template Var<T> sum(Var<T>);                                                                      \
    template Var<T> mean(Var<T>);                                                                     \
    template Var<T> linear(Var<T>, Var<T>, Var<T>);                                                   \
    template void gemm(const T*, bool, const T*, bool, T*, int64_t, int64_t, int64_t, bool);

HAAR_INSTANTIATE_OPS(float)
HAAR_INSTANTIATE_OPS(double)

}  // namespace haar::ad
