// Copyright (C) 2026 The haar-strands Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#include "../common.hpp"

namespace haar::ad {

using Shape = std::vector<int64_t>;

inline int64_t numel(const Shape& s) {
    int64_t n = 1;
    for (auto d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s);

/// Dense row-major array. A tensor with a shape but no data is a "meta"
/// tensor, produced when a tape runs in shape-inference mode.
template <class T>
struct Tensor {
    Shape shape;
    std::vector<T> data;

    Tensor() = default;
    explicit Tensor(Shape s, T fill = T(0)) : shape(std::move(s)), data(static_cast<size_t>(numel(shape)), fill) {}
    Tensor(Shape s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
        require(static_cast<int64_t>(data.size()) == numel(shape), ErrorCode::Shape,
                "tensor data length " + std::to_string(data.size()) + " does not match shape " + shape_str(shape));
    }

    static Tensor meta(Shape s) {
        Tensor t;
        t.shape = std::move(s);
        return t;
    }

    int64_t size() const { return numel(shape); }
    int rank() const { return static_cast<int>(shape.size()); }
    int64_t dim(int i) const { return shape[static_cast<size_t>(i < 0 ? i + rank() : i)]; }
    bool is_meta() const { return data.empty() && size() != 0; }

    T& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
    const T& operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }

    template <class U>
    Tensor<U> cast() const {
        Tensor<U> out;
        out.shape = shape;
        out.data.assign(data.begin(), data.end());
        return out;
    }
};

}  // namespace haar::ad
