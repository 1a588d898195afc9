// Copyright 2026 The malk Authors
// SPDX-License-Identifier: Apache-2.0
//
// Seeded gradient-check instances shared by the unit and acceptance suites.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <deque>
#include <memory>
#include <string>
#include <vector>

#include "malk/adapters/lora.hpp"
#include "malk/autodiff/grad_check.hpp"
#include "malk/autodiff/tape.hpp"
#include "malk/linalg/random.hpp"
#include "malk/moe/malora.hpp"
#include "malk/moe/molora.hpp"
#include "malk/moe/router.hpp"

namespace malk::testing {

struct GradCase {
    std::string name;
    std::shared_ptr<void> keepalive;
    std::vector<ad::ParamRef> params;
    ad::LossRecipe recipe;
};

struct Store {
    std::deque<Matrix> mats;
    Matrix* add(Matrix m) {
        mats.push_back(std::move(m));
        return &mats.back();
    }
};

inline Matrix away_from_zero(std::size_t r, std::size_t c, Rng& rng) {
    Matrix m(r, c);
    for (double& v : m.values()) {
        const double mag = rng.uniform(0.1, 1.0);
        v = rng.uniform() < 0.5 ? -mag : mag;
    }
    return m;
}

/// One case per tape op. Each output is reduced through a random weighted
/// sum so no entry of the upstream gradient is structurally special.
inline std::vector<GradCase> op_cases(std::uint64_t seed) {
    Rng rng(seed);
    std::vector<GradCase> out;
    auto make = [&](std::string name, std::vector<std::pair<std::string, Matrix>> inputs,
                    std::function<ad::Var(ad::Tape&, const std::vector<ad::Var>&)> body) {
        auto store = std::make_shared<Store>();
        GradCase c;
        c.name = std::move(name);
        std::vector<std::string> names;
        for (auto& [n, m] : inputs) {
            c.params.push_back({n, store->add(std::move(m)), true});
            names.push_back(n);
        }
        auto params = c.params;
        c.recipe = [params, body](ad::Tape& tape) {
            std::vector<ad::Var> vars;
            for (const auto& p : params) vars.push_back(tape.parameter(p.name, *p.value, true));
            return body(tape, vars);
        };
        c.keepalive = store;
        out.push_back(std::move(c));
    };
    auto reduce = [](ad::Var v, std::uint64_t s) {
        Rng r(s);
        return ad::weighted_sum(v, uniform_matrix(v.rows(), v.cols(), -1.0, 1.0, r));
    };
    const std::uint64_t ws = Rng::derive(seed, 99);
    const std::size_t m = 2 + rng.below(4), k = 2 + rng.below(4), n = 2 + rng.below(4);

    make("add", {{"a", uniform_matrix(m, n, -1, 1, rng)}, {"b", uniform_matrix(m, n, -1, 1, rng)}},
         [=](ad::Tape&, const auto& v) { return reduce(ad::add(v[0], v[1]), ws); });
    make("sub", {{"a", uniform_matrix(m, n, -1, 1, rng)}, {"b", uniform_matrix(m, n, -1, 1, rng)}},
         [=](ad::Tape&, const auto& v) { return reduce(ad::sub(v[0], v[1]), ws); });
    make("matmul", {{"a", uniform_matrix(m, k, -1, 1, rng)}, {"b", uniform_matrix(k, n, -1, 1, rng)}},
         [=](ad::Tape&, const auto& v) { return reduce(ad::matmul(v[0], v[1]), ws); });
    make("matmul_nt", {{"a", uniform_matrix(m, k, -1, 1, rng)}, {"b", uniform_matrix(n, k, -1, 1, rng)}},
         [=](ad::Tape&, const auto& v) { return reduce(ad::matmul_nt(v[0], v[1]), ws); });
    {
        auto w = std::make_shared<Matrix>(uniform_matrix(k, n, -1, 1, rng));
        make("matmul_const", {{"x", uniform_matrix(m, k, -1, 1, rng)}},
             [=](ad::Tape&, const auto& v) { return reduce(ad::matmul_const(v[0], *w), ws); });
    }
    make("scale", {{"a", uniform_matrix(m, n, -1, 1, rng)}},
         [=](ad::Tape&, const auto& v) { return reduce(ad::scale(v[0], -1.7), ws); });
    make("hadamard", {{"a", uniform_matrix(m, n, -1, 1, rng)}, {"b", uniform_matrix(m, n, -1, 1, rng)}},
         [=](ad::Tape&, const auto& v) { return reduce(ad::hadamard(v[0], v[1]), ws); });
    make("softmax_rows", {{"a", uniform_matrix(m, n, -2, 2, rng)}},
         [=](ad::Tape&, const auto& v) { return reduce(ad::softmax_rows(v[0]), ws); });
    make("relu", {{"a", away_from_zero(m, n, rng)}},
         [=](ad::Tape&, const auto& v) { return reduce(ad::relu(v[0]), ws); });
    {
        Matrix mask(m, n);
        for (double& x : mask.values()) x = rng.uniform() < 0.5 ? 1.0 : 0.0;
        mask(0, 0) = 1.0;
        make("mask_select", {{"a", uniform_matrix(m, n, -1, 1, rng)}},
             [=](ad::Tape&, const auto& v) { return reduce(ad::mask_select(v[0], mask), ws); });
    }
    make("row_normalize", {{"a", uniform_matrix(m, n, 0.2, 1.0, rng)}},
         [=](ad::Tape&, const auto& v) { return reduce(ad::row_normalize(v[0]), ws); });
    make("concat_rows", {{"a", uniform_matrix(m, n, -1, 1, rng)}, {"b", uniform_matrix(k, n, -1, 1, rng)}},
         [=](ad::Tape&, const auto& v) { return reduce(ad::concat_rows(v), ws); });
    {
        std::vector<std::size_t> rows;
        for (std::size_t i = 0; i < m + 2; ++i) rows.push_back(rng.below(m));
        make("gather_rows", {{"a", uniform_matrix(m, n, -1, 1, rng)}},
             [=](ad::Tape&, const auto& v) { return reduce(ad::gather_rows(v[0], rows), ws); });
    }
    {
        std::vector<std::size_t> rows;
        for (std::size_t i = 0; i < m; i += 2) rows.push_back(i);
        const std::size_t col = rng.below(k);
        make("scale_rows_by_gate",
             {{"v", uniform_matrix(rows.size(), n, -1, 1, rng)}, {"g", uniform_matrix(m, k, -1, 1, rng)}},
             [=](ad::Tape&, const auto& v) {
                 return reduce(ad::scale_rows_by_gate(v[0], v[1], rows, col), ws);
             });
    }
    {
        std::vector<std::vector<std::size_t>> rows = {{0, m - 1}, {m - 1}};
        make("scatter_add",
             {{"base", uniform_matrix(m, n, -1, 1, rng)},
              {"p0", uniform_matrix(2, n, -1, 1, rng)},
              {"p1", uniform_matrix(1, n, -1, 1, rng)}},
             [=](ad::Tape&, const auto& v) {
                 const std::vector<ad::Var> parts = {v[1], v[2]};
                 return reduce(ad::scatter_add(v[0], parts, rows), ws);
             });
    }
    {
        const std::uint64_t ds = Rng::derive(seed, 7);
        make("dropout", {{"a", uniform_matrix(m, n, -1, 1, rng)}}, [=](ad::Tape&, const auto& v) {
            Rng r(ds);
            return reduce(ad::dropout(v[0], 0.3, r), ws);
        });
    }
    make("sum_all", {{"a", uniform_matrix(m, n, -1, 1, rng)}},
         [=](ad::Tape&, const auto& v) { return ad::sum_all(ad::hadamard(v[0], v[0])); });
    make("weighted_sum", {{"a", uniform_matrix(m, n, -1, 1, rng)}},
         [=](ad::Tape&, const auto& v) { return reduce(ad::hadamard(v[0], v[0]), ws); });
    {
        const Matrix target = uniform_matrix(m, n, -1, 1, rng);
        make("mse_loss", {{"a", uniform_matrix(m, n, -1, 1, rng)}},
             [=](ad::Tape&, const auto& v) { return ad::mse_loss(v[0], target); });
    }
    {
        std::vector<std::size_t> labels;
        for (std::size_t i = 0; i < m; ++i) labels.push_back(rng.below(n));
        make("softmax_cross_entropy", {{"a", uniform_matrix(m, n, -2, 2, rng)}},
             [=](ad::Tape&, const auto& v) { return ad::softmax_cross_entropy(v[0], labels); });
    }
    // Three-layer composition with a nonlinearity and a classification head.
    {
        std::vector<std::size_t> labels;
        for (std::size_t i = 0; i < m; ++i) labels.push_back(rng.below(3));
        const Matrix x = uniform_matrix(m, n, -1, 1, rng);
        make("three_layer",
             {{"w1", uniform_matrix(n, 5, -1, 1, rng)},
              {"w2", uniform_matrix(5, 4, -1, 1, rng)},
              {"w3", uniform_matrix(4, 3, -1, 1, rng)}},
             [=](ad::Tape& t, const auto& v) {
                 const ad::Var h1 = ad::softmax_rows(ad::matmul(t.constant(x), v[0]));
                 const ad::Var h2 = ad::hadamard(ad::matmul(h1, v[1]), ad::matmul(h1, v[1]));
                 return ad::softmax_cross_entropy(ad::matmul(h2, v[2]), labels);
             });
    }
    return out;
}

enum class LayerKind {
    Lora,
    AsyLora,
    Molora,
    MoAsyLora,
    Malora,
    MaloraFixedSa,
    MaloraSymmetric,
    MaloraUnshared,
    MaloraFrozenP,
    MaloraDecomposeB,
    MaloraRenormalized,
    MoloraDropout,
};

inline std::vector<LayerKind> all_layer_kinds() {
    return {LayerKind::Lora,           LayerKind::AsyLora,         LayerKind::Molora,
            LayerKind::MoAsyLora,      LayerKind::Malora,          LayerKind::MaloraFixedSa,
            LayerKind::MaloraSymmetric, LayerKind::MaloraUnshared, LayerKind::MaloraFrozenP,
            LayerKind::MaloraDecomposeB, LayerKind::MaloraRenormalized, LayerKind::MoloraDropout};
}

inline std::string layer_kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::Lora: return "lora";
        case LayerKind::AsyLora: return "asylora";
        case LayerKind::Molora: return "molora";
        case LayerKind::MoAsyLora: return "moasylora";
        case LayerKind::Malora: return "malora";
        case LayerKind::MaloraFixedSa: return "malora/fixed_s_a";
        case LayerKind::MaloraSymmetric: return "malora/symmetric";
        case LayerKind::MaloraUnshared: return "malora/unshared";
        case LayerKind::MaloraFrozenP: return "malora/frozen_p";
        case LayerKind::MaloraDecomposeB: return "malora/decompose_b";
        case LayerKind::MaloraRenormalized: return "malora/renormalized";
        case LayerKind::MoloraDropout: return "molora/dropout";
    }
    return "?";
}

struct SmallDims {
    std::size_t n = 6, m = 5, batch = 7, experts = 4, top_k = 2, r = 2, d = 4, r_bar = 3;
};

inline std::unique_ptr<AdapterLayer> make_layer(LayerKind kind, const SmallDims& dims, Rng& rng) {
    Matrix base = uniform_matrix(dims.m, dims.n, -1, 1, rng);
    double dropout = kind == LayerKind::MoloraDropout ? 0.2 : 0.0;
    switch (kind) {
        case LayerKind::Lora:
        case LayerKind::AsyLora: {
            LoraOptions o;
            o.rank = dims.r;
            o.asymmetric = kind == LayerKind::AsyLora;
            return std::make_unique<LoraLayer>(std::move(base), o, rng);
        }
        case LayerKind::Molora:
        case LayerKind::MoAsyLora:
        case LayerKind::MoloraDropout: {
            MoloraOptions o;
            o.n_experts = dims.experts;
            o.rank = dims.r;
            o.top_k = dims.top_k;
            o.asymmetric = kind == LayerKind::MoAsyLora;
            o.dropout = dropout;
            return std::make_unique<MoloraLayer>(std::move(base), o, rng);
        }
        default: break;
    }
    MaloraOptions o;
    o.geometry.n_experts = dims.experts;
    o.geometry.r = dims.r;
    o.geometry.d = dims.d;
    o.geometry.r_bar = dims.r_bar;
    o.geometry.top_k = dims.top_k;
    o.geometry.beta = 1.25;
    o.flags.freeze_s_a = kind == LayerKind::MaloraFixedSa;
    o.flags.symmetric = kind == LayerKind::MaloraSymmetric;
    o.flags.shared_subspace = kind != LayerKind::MaloraUnshared;
    o.flags.freeze_p_t = kind == LayerKind::MaloraFrozenP;
    o.flags.decompose_b_side = kind == LayerKind::MaloraDecomposeB;
    o.renormalize = kind == LayerKind::MaloraRenormalized;
    return std::make_unique<MaloraLayer>(std::move(base), o, rng);
}

/// Smallest gap between the k-th and (k+1)-th routing probability over the
/// batch; the selection is piecewise constant, so finite differences are only
/// meaningful when perturbations cannot cross a tie.
inline double routing_margin(const Matrix& probs, std::size_t k) {
    double margin = 1.0;
    for (std::size_t r = 0; r < probs.rows(); ++r) {
        std::vector<double> row(probs.row(r).begin(), probs.row(r).end());
        std::sort(row.rbegin(), row.rend());
        if (k < row.size()) margin = std::min(margin, row[k - 1] - row[k]);
    }
    return margin;
}

struct LayerCase {
    GradCase grad;
    std::shared_ptr<AdapterLayer> layer;
};

/// Full-layer loss: mse against a random target plus, for mixture layers, the
/// balance penalty. All adapter matrices (and the router) are randomised so
/// that no gradient vanishes through a zero factor.
inline LayerCase layer_case(LayerKind kind, std::uint64_t seed, const SmallDims& dims = {}) {
    for (std::uint64_t attempt = 0;; ++attempt) {
        Rng rng(Rng::derive(seed, attempt));
        std::shared_ptr<AdapterLayer> layer = make_layer(kind, dims, rng);
        auto params = layer->params("site0");
        for (auto& p : params) *p.value = scale(away_from_zero(p.value->rows(), p.value->cols(), rng), 0.8);
        const Matrix x = uniform_matrix(dims.batch, dims.n, -1, 1, rng);
        const Matrix target = uniform_matrix(dims.batch, dims.m, -1, 1, rng);
        const std::uint64_t drop_seed = Rng::derive(seed, 1000 + attempt);

        ad::LossRecipe recipe = [layer, x, target, drop_seed](ad::Tape& tape) {
            Rng drop(drop_seed);
            ForwardContext ctx{tape, true, &drop};
            ForwardOutput out = layer->forward(ctx, tape.constant(x), "site0");
            ad::Var loss = ad::mse_loss(out.y, target);
            if (out.route) loss = ad::add(loss, balance_loss(*out.route, 0.05));
            return loss;
        };
        if (auto* moe = dynamic_cast<MoeLayer*>(layer.get())) {
            ad::Tape t;
            ad::Var xv = t.constant(x);
            const ad::Var w = t.parameter("w", moe->router(), false);
            const RouteResult r = route(w, xv, moe->top_k());
            if (routing_margin(r.probs.value(), moe->top_k()) < 1e-3) continue;
        }
        LayerCase c;
        c.grad.name = layer_kind_name(kind);
        c.grad.keepalive = layer;
        c.grad.params = params;
        c.grad.recipe = recipe;
        c.layer = layer;
        return c;
    }
}

}  // namespace malk::testing
