// Copyright (C) 2026 The haar-strands Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "../autodiff/tape.hpp"

namespace haar::nn {

using ad::Shape;
using ad::Tensor;
using ad::Var;

/// Named float tensors kept in declaration order. The order is the on-disk
/// order of every checkpoint format.
struct ParamSet {
    std::vector<std::string> names;
    std::vector<Tensor<float>> tensors;

    int add(std::string name, Tensor<float> t) {
        names.push_back(std::move(name));
        tensors.push_back(std::move(t));
        return static_cast<int>(tensors.size()) - 1;
    }
    size_t size() const { return tensors.size(); }
    int64_t scalar_count() const {
        int64_t n = 0;
        for (const auto& t : tensors) n += t.size();
        return n;
    }
    std::vector<Tensor<float>*> pointers() {
        std::vector<Tensor<float>*> out;
        for (auto& t : tensors) out.push_back(&t);
        return out;
    }
    friend bool operator==(const ParamSet& a, const ParamSet& b) {
        if (a.names != b.names || a.tensors.size() != b.tensors.size()) return false;
        for (size_t i = 0; i < a.tensors.size(); ++i)
            if (a.tensors[i].shape != b.tensors[i].shape || a.tensors[i].data != b.tensors[i].data) return false;
        return true;
    }
};

/// Places every tensor of `ps` on `tape`, cast to T, as trainable parameters
/// or as constants.
template <class T>
std::vector<Var<T>> bind(ad::Tape<T>& tape, const ParamSet& ps, bool trainable) {
    std::vector<Var<T>> out;
    out.reserve(ps.size());
    for (size_t i = 0; i < ps.size(); ++i) {
        Tensor<T> t = tape.meta() ? Tensor<T>::meta(ps.tensors[i].shape) : ps.tensors[i].template cast<T>();
        out.push_back(trainable ? tape.param(std::move(t), ps.names[i]) : tape.constant(std::move(t), ps.names[i]));
    }
    return out;
}

/// U(-1/sqrt(fan_in), 1/sqrt(fan_in)) fill.
inline Tensor<float> uniform_init(Shape shape, int64_t fan_in, Rng& rng) {
    Tensor<float> t(std::move(shape));
    double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (auto& v : t.data) v = static_cast<float>(rng.uniform(-bound, bound));
    return t;
}

}  // namespace haar::nn
