// Copyright (C) 2026 The haar-strands Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "tape.hpp"

namespace haar::ad {

// Elementwise binary ops broadcast with numpy semantics (right-aligned).
template <class T> Var<T> add(Var<T> a, Var<T> b);
template <class T> Var<T> sub(Var<T> a, Var<T> b);
template <class T> Var<T> mul(Var<T> a, Var<T> b);

template <class T> Var<T> scale(Var<T> a, double c);
template <class T> Var<T> add_scalar(Var<T> a, double c);
template <class T> Var<T> exp(Var<T> a);
template <class T> Var<T> log(Var<T> a);
template <class T> Var<T> silu(Var<T> a);

/// Rank-2 or batched rank-3 product of op(a) and op(b), where op transposes
/// the last two axes when the flag is set.
template <class T> Var<T> matmul(Var<T> a, Var<T> b, bool trans_a = false, bool trans_b = false);

/// x: (N,C,H,W), w: (O,C,k,k) with odd k, bias: (O) or invalid Var.
/// Zero padding k/2, so stride 1 keeps the spatial extent.
template <class T> Var<T> conv2d(Var<T> x, Var<T> w, Var<T> bias, int stride = 1);

/// x: (N,C,...). Statistics per sample and channel group.
template <class T> Var<T> group_norm(Var<T> x, Var<T> gamma, Var<T> beta, int groups, double eps = 1e-5);

/// Normalizes over the last axis.
template <class T> Var<T> layer_norm(Var<T> x, Var<T> gamma, Var<T> beta, double eps = 1e-5);

template <class T> Var<T> softmax(Var<T> x);

template <class T> Var<T> reshape(Var<T> x, Shape shape);
template <class T> Var<T> permute(Var<T> x, std::vector<int> perm);
template <class T> Var<T> concat(const std::vector<Var<T>>& xs, int axis);
template <class T> Var<T> slice(Var<T> x, int axis, int64_t start, int64_t length);

/// Nearest-neighbour resize of (N,C,H,W); source index floor(i*H/H').
template <class T> Var<T> resize_nearest(Var<T> x, int64_t height, int64_t width);
/// Bilinear resize of (N,C,H,W) with half-pixel centres.
template <class T> Var<T> resize_bilinear(Var<T> x, int64_t height, int64_t width);

template <class T> Var<T> sum(Var<T> x);
template <class T> Var<T> mean(Var<T> x);

/// x: (..., in), w: (out, in), bias: (out) or invalid Var.
template <class T> Var<T> linear(Var<T> x, Var<T> w, Var<T> bias);

/// Names under which primitives are recorded on a tape.
const std::vector<std::string>& registered_ops();

template <class T> inline Var<T> operator+(Var<T> a, Var<T> b) { return add(a, b); }
template <class T> inline Var<T> operator-(Var<T> a, Var<T> b) { return sub(a, b); }
template <class T> inline Var<T> operator*(Var<T> a, Var<T> b) { return mul(a, b); }

/// C(M,N) (+)= op(A)·op(B) with a fixed k-order summation per output
/// element, independent of M. A is stored (M,K) or (K,M) when trans_a.
template <class T>
void gemm(const T* a, bool trans_a, const T* b, bool trans_b, T* c, int64_t m, int64_t k, int64_t n, bool accumulate);

}  // namespace haar::ad
