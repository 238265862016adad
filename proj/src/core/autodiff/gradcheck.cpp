// Copyright (C) 2026 The haar-strands Authors
// SPDX-License-Identifier: Apache-2.0

#include "gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace haar::ad {

double rel_error(double analytic, double numeric, double floor) {
    double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
    return std::abs(analytic - numeric) / denom;
}

namespace {

std::vector<int64_t> pick_coords(int64_t n, int max_coords, Rng& rng) {
    std::vector<int64_t> idx(static_cast<size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    if (n <= max_coords) return idx;
    for (int64_t i = 0; i < max_coords; ++i) {
        auto j = i + static_cast<int64_t>(rng.below(static_cast<uint64_t>(n - i)));
        std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
    }
    idx.resize(static_cast<size_t>(max_coords));
    return idx;
}

struct Tracker {
    double worst = 0.0;
    std::string op;
    int node = -1;

    void add(GradCheckReport& rep, double err, const GradCheckOptions& opt, const std::string& name, int id) {
        rep.coordinates_checked += 1;
        rep.max_rel_error = std::max(rep.max_rel_error, err);
        if (err > opt.tolerance) rep.passed = false;
        if (err > worst) {
            worst = err;
            op = name;
            node = id;
        }
    }
};

}  // namespace

GradCheckReport finite_diff_check(Tape<double>& tape, Var<double> loss, const std::vector<Var<double>>& params,
                                  const GradCheckOptions& opt) {
    GradCheckReport rep;
    Rng rng(opt.seed);
    const double h = opt.step;

    Tracker global, local;

    auto grads = tape.grad(loss, params);
    for (size_t pi = 0; pi < params.size(); ++pi) {
        auto& leaf = tape.node(params[pi].id).value;
        for (int64_t c : pick_coords(leaf.size(), opt.max_coords, rng)) {
            double orig = leaf.data[static_cast<size_t>(c)];
            leaf.data[static_cast<size_t>(c)] = orig + h;
            tape.replay();
            double fp = tape.node(loss.id).value.data[0];
            leaf.data[static_cast<size_t>(c)] = orig - h;
            tape.replay();
            double fm = tape.node(loss.id).value.data[0];
            leaf.data[static_cast<size_t>(c)] = orig;
            double numeric = (fp - fm) / (2 * h);
            global.add(rep, rel_error(grads[pi].data[static_cast<size_t>(c)], numeric, opt.floor), opt,
                       "param:" + tape.node(params[pi].id).op, params[pi].id);
        }
    }
    tape.replay();

    for (int id = 0; id < tape.size(); ++id) {
        auto& n = tape.node(id);
        if (n.is_leaf) continue;
        Inputs<double> in = tape.input_values(id);
        Tensor<double> u(n.value.shape);
        for (auto& x : u.data) x = rng.normal();
        std::vector<Tensor<double>> gin_store;
        std::vector<Tensor<double>*> gin;
        for (const auto* t : in) gin_store.emplace_back(t->shape);
        for (auto& g : gin_store) gin.push_back(&g);
        n.backward(in, n.value, u, gin);

        for (size_t k = 0; k < in.size(); ++k) {
            Tensor<double> perturbed = *in[k];
            Inputs<double> pin = in;
            pin[k] = &perturbed;
            for (int64_t c : pick_coords(perturbed.size(), opt.max_coords, rng)) {
                double orig = perturbed.data[static_cast<size_t>(c)];
                perturbed.data[static_cast<size_t>(c)] = orig + h;
                auto yp = n.forward(pin, false);
                perturbed.data[static_cast<size_t>(c)] = orig - h;
                auto ym = n.forward(pin, false);
                perturbed.data[static_cast<size_t>(c)] = orig;
                double numeric = 0;
                for (size_t e = 0; e < u.data.size(); ++e) numeric += u.data[e] * (yp.data[e] - ym.data[e]);
                numeric /= 2 * h;
                local.add(rep, rel_error(gin_store[k].data[static_cast<size_t>(c)], numeric, opt.floor), opt, n.op, id);
            }
        }
        // restore any state the op keeps from its last forward
        n.value = n.forward(in, false);
    }

    // A faulty op shows up in both passes; the per-op pass names it.
    const Tracker& blame = local.worst > opt.tolerance ? local : global;
    if (blame.worst > opt.tolerance) {
        rep.failing_op = blame.op;
        rep.failing_node = blame.node;
    }
    return rep;
}

}  // namespace haar::ad
