// Copyright (C) 2026 The haar-strands Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "tensor.hpp"

namespace haar::ad {

template <class T>
class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
template <class T>
struct Var {
    Tape<T>* tape = nullptr;
    int id = -1;

    const Tensor<T>& value() const;
    const Shape& shape() const { return value().shape; }
    int64_t dim(int i) const { return value().dim(i); }
    bool valid() const { return tape != nullptr && id >= 0; }
};

template <class T>
using Inputs = std::vector<const Tensor<T>*>;

/// Recomputes an op's output from its inputs. When `meta` is set only the
/// output shape is produced.
template <class T>
using ForwardFn = std::function<Tensor<T>(const Inputs<T>& in, bool meta)>;

/// Accumulates vector-Jacobian products into `grad_in[k]` (null when input k
/// does not need a gradient).
template <class T>
using BackwardFn = std::function<void(const Inputs<T>& in, const Tensor<T>& out, const Tensor<T>& grad_out,
                                      const std::vector<Tensor<T>*>& grad_in)>;

template <class T>
struct Node {
    std::string op;
    std::vector<int> inputs;
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    bool is_leaf = false;
    ForwardFn<T> forward;
    BackwardFn<T> backward;
};

/// Linear recording of a computation. Nodes are appended in evaluation order,
/// so reverse iteration is a valid topological order for backpropagation.
template <class T>
class Tape {
public:
    explicit Tape(bool meta_only = false) : meta_(meta_only) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    bool meta() const { return meta_; }

    Var<T> param(Tensor<T> value, std::string name = "param");
    Var<T> constant(Tensor<T> value, std::string name = "const");

    Var<T> apply(std::string op, const std::vector<Var<T>>& inputs, ForwardFn<T> forward, BackwardFn<T> backward);

    /// Reverse pass from a scalar loss. Throws on non-scalar loss.
    void backward(Var<T> loss);

    /// Gradients of `loss` with respect to `wrt`, in order. Runs `backward`.
    /// Throws if any element of `wrt` is not a parameter reachable from loss.
    std::vector<Tensor<T>> grad(Var<T> loss, const std::vector<Var<T>>& wrt);

    /// Re-evaluates every non-leaf node from its inputs, in recorded order.
    void replay();

    const Node<T>& node(int id) const { return *nodes_[static_cast<size_t>(id)]; }
    Node<T>& node(int id) { return *nodes_[static_cast<size_t>(id)]; }
    int size() const { return static_cast<int>(nodes_.size()); }

    Inputs<T> input_values(int id) const;
    void zero_grad();

private:
    Var<T> leaf(Tensor<T> value, std::string name, bool requires_grad);

    bool meta_;
    std::vector<std::unique_ptr<Node<T>>> nodes_;
};

template <class T>
const Tensor<T>& Var<T>::value() const {
    return tape->node(id).value;
}

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace haar::ad
