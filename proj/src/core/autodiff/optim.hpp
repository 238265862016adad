// Copyright (C) 2026 The haar-strands Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <vector>

#include "tensor.hpp"

namespace haar::ad {

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.95;
    double beta2 = 0.999;
    double eps = 1e-6;
    double weight_decay = 1e-3;
};

template <class T>
struct OptimizerState {
    AdamConfig config;
    std::vector<Tensor<T>> m, v;
    int64_t step = 0;

    OptimizerState() = default;
    explicit OptimizerState(AdamConfig cfg) : config(cfg) {}
};

/// One AdamW step with bias-corrected moments and decoupled decay:
///   p <- p - lr * (m_hat / (sqrt(v_hat) + eps) + wd * p)
/// Plain Adam is the wd = 0 case.
template <class T>
void adamw_step(OptimizerState<T>& state, const std::vector<Tensor<T>*>& params, const std::vector<Tensor<T>>& grads) {
    require(params.size() == grads.size(), ErrorCode::Shape, "adamw_step: parameter/gradient count mismatch");
    if (state.m.empty()) {
        for (const auto* p : params) {
            state.m.emplace_back(p->shape);
            state.v.emplace_back(p->shape);
        }
    }
    require(state.m.size() == params.size(), ErrorCode::Shape, "adamw_step: optimizer state does not match parameters");
    for (size_t i = 0; i < params.size(); ++i)
        require(params[i]->shape == grads[i].shape && params[i]->shape == state.m[i].shape, ErrorCode::Shape,
                "adamw_step: shape mismatch for parameter " + std::to_string(i) + " " + shape_str(params[i]->shape) +
                    " vs gradient " + shape_str(grads[i].shape));
    const auto& c = state.config;
    state.step += 1;
    const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
    for (size_t i = 0; i < params.size(); ++i) {
        auto& p = params[i]->data;
        const auto& g = grads[i].data;
        auto& m = state.m[i].data;
        auto& v = state.v[i].data;
        for (size_t j = 0; j < p.size(); ++j) {
            double gj = static_cast<double>(g[j]);
            double mj = c.beta1 * static_cast<double>(m[j]) + (1.0 - c.beta1) * gj;
            double vj = c.beta2 * static_cast<double>(v[j]) + (1.0 - c.beta2) * gj * gj;
            m[j] = static_cast<T>(mj);
            v[j] = static_cast<T>(vj);
            double mhat = mj / bc1, vhat = vj / bc2;
            double pj = static_cast<double>(p[j]);
            p[j] = static_cast<T>(pj - c.lr * (mhat / (std::sqrt(vhat) + c.eps) + c.weight_decay * pj));
        }
    }
}

/// shadow <- decay * shadow + (1 - decay) * params
template <class T>
void ema_update(std::vector<Tensor<T>>& shadow, const std::vector<Tensor<T>>& params, double decay) {
    require(decay >= 0.0 && decay < 1.0, ErrorCode::InvalidArgument, "ema decay must lie in [0,1)");
    require(shadow.size() == params.size(), ErrorCode::Shape, "ema_update: tensor count mismatch");
    for (size_t i = 0; i < params.size(); ++i) {
        require(shadow[i].shape == params[i].shape, ErrorCode::Shape, "ema_update: shape mismatch at tensor " + std::to_string(i));
        auto& s = shadow[i].data;
        const auto& p = params[i].data;
        for (size_t j = 0; j < s.size(); ++j)
            s[j] = static_cast<T>(decay * static_cast<double>(s[j]) + (1.0 - decay) * static_cast<double>(p[j]));
    }
}

}  // namespace haar::ad
