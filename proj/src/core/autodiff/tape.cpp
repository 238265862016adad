// Copyright (C) 2026 The haar-strands Authors
// SPDX-License-Identifier: Apache-2.0

#include "tape.hpp"

#include <sstream>

namespace haar::ad {

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ")";
    return os.str();
}

template <class T>
Var<T> Tape<T>::leaf(Tensor<T> value, std::string name, bool requires_grad) {
    auto n = std::make_unique<Node<T>>();
    n->op = std::move(name);
    n->value = std::move(value);
    n->is_leaf = true;
    n->requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return Var<T>{this, static_cast<int>(nodes_.size()) - 1};
}

template <class T>
Var<T> Tape<T>::param(Tensor<T> value, std::string name) {
    if (meta_) value = Tensor<T>::meta(value.shape);
    return leaf(std::move(value), std::move(name), true);
}

template <class T>
Var<T> Tape<T>::constant(Tensor<T> value, std::string name) {
    if (meta_) value = Tensor<T>::meta(value.shape);
    return leaf(std::move(value), std::move(name), false);
}

template <class T>
Inputs<T> Tape<T>::input_values(int id) const {
    const auto& n = node(id);
    Inputs<T> in;
    in.reserve(n.inputs.size());
    for (int k : n.inputs) in.push_back(&node(k).value);
    return in;
}

template <class T>
Var<T> Tape<T>::apply(std::string op, const std::vector<Var<T>>& inputs, ForwardFn<T> forward,
                      BackwardFn<T> backward) {
    auto n = std::make_unique<Node<T>>();
    n->op = std::move(op);
    for (const auto& v : inputs) {
        require(v.tape == this, ErrorCode::InvalidArgument, "op '" + n->op + "' mixes variables from different tapes");
        n->inputs.push_back(v.id);
        n->requires_grad = n->requires_grad || node(v.id).requires_grad;
    }
    Inputs<T> in;
    for (int k : n->inputs) in.push_back(&node(k).value);
    n->value = forward(in, meta_);
    n->forward = std::move(forward);
    n->backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var<T>{this, static_cast<int>(nodes_.size()) - 1};
}

template <class T>
void Tape<T>::zero_grad() {
    for (auto& n : nodes_) n->grad = Tensor<T>();
}

template <class T>
void Tape<T>::backward(Var<T> loss) {
    require(!meta_, ErrorCode::InvalidArgument, "backward on a shape-only tape");
    require(loss.tape == this, ErrorCode::InvalidArgument, "loss belongs to a different tape");
    auto& ln = node(loss.id);
    require(ln.value.size() == 1, ErrorCode::Shape, "backward requires a scalar loss, got shape " + shape_str(ln.value.shape));
    zero_grad();
    if (!ln.requires_grad) return;
    ln.grad = Tensor<T>(ln.value.shape, T(1));
    for (int id = loss.id; id >= 0; --id) {
        auto& n = node(id);
        if (n.is_leaf || !n.requires_grad || n.grad.data.empty()) continue;
        std::vector<Tensor<T>*> gin(n.inputs.size(), nullptr);
        for (size_t k = 0; k < n.inputs.size(); ++k) {
            auto& pn = node(n.inputs[k]);
            if (!pn.requires_grad) continue;
            if (pn.grad.data.empty()) pn.grad = Tensor<T>(pn.value.shape, T(0));
            gin[k] = &pn.grad;
        }
        n.backward(input_values(id), n.value, n.grad, gin);
    }
}

template <class T>
std::vector<Tensor<T>> Tape<T>::grad(Var<T> loss, const std::vector<Var<T>>& wrt) {
    std::vector<char> reach(static_cast<size_t>(size()), 0);
    reach[static_cast<size_t>(loss.id)] = 1;
    for (int id = loss.id; id >= 0; --id) {
        if (!reach[static_cast<size_t>(id)]) continue;
        for (int k : node(id).inputs) reach[static_cast<size_t>(k)] = 1;
    }
    for (const auto& w : wrt) {
        const auto& n = node(w.id);
        require(n.is_leaf && n.requires_grad, ErrorCode::InvalidArgument,
                "grad requested for non-parameter node '" + n.op + "'");
        require(reach[static_cast<size_t>(w.id)] != 0, ErrorCode::InvalidArgument,
                "detached parameter '" + n.op + "' does not influence the loss");
    }
    backward(loss);
    std::vector<Tensor<T>> out;
    out.reserve(wrt.size());
    for (const auto& w : wrt) {
        const auto& n = node(w.id);
        out.push_back(n.grad.data.empty() ? Tensor<T>(n.value.shape, T(0)) : n.grad);
    }
    return out;
}

template <class T>
void Tape<T>::replay() {
    for (int id = 0; id < size(); ++id) {
        auto& n = node(id);
        if (n.is_leaf) continue;
        n.value = n.forward(input_values(id), meta_);
    }
}

template class Tape<float>;
template class Tape<double>;

}  // namespace haar::ad
