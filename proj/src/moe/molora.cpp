// Copyright 2026 The malk Authors
// SPDX-License-Identifier: Apache-2.0
//

#include "malk/moe/molora.hpp"

#include "malk/errors.hpp"
#include "malk/linalg/random.hpp"

namespace malk {

MoloraLayer::MoloraLayer(Matrix base_w, const MoloraOptions& opts, Rng& rng)
    : MoeLayer(std::move(base_w), opts.n_experts, opts.top_k, opts.renormalize),
      rank_(opts.asymmetric ? 2 * opts.rank : opts.rank),
      asymmetric_(opts.asymmetric),
      dropout_(opts.dropout) {
    if (opts.rank == 0) throw ConfigError("molora: rank must be at least 1");
    if (!(opts.dropout >= 0.0 && opts.dropout < 1.0)) throw ConfigError("molora: dropout must be in [0, 1)");
    alpha_ = opts.alpha > 0.0 ? opts.alpha : 2.0 * static_cast<double>(rank_);
    for (std::size_t t = 0; t < opts.n_experts; ++t) {
        a_.push_back(kaiming_uniform(rank_, in_dim(), rng));
        b_.emplace_back(out_dim(), rank_);
    }
    router_w_ = kaiming_uniform(opts.n_experts, in_dim(), rng);
}

ForwardOutput MoloraLayer::forward(ForwardContext& ctx, ad::Var x, const std::string& prefix) {
    const ad::Var base = base_forward(x);
    RouteResult r = route_inputs(ctx, x, prefix);
    const ad::Var xin = adapter_input(ctx, x, dropout_);

    std::vector<ad::Var> parts;
    std::vector<std::vector<std::size_t>> rows;
    for (std::size_t t = 0; t < experts(); ++t) {
        const std::string id = std::to_string(t);
        const ad::Var a = ctx.tape.parameter(prefix + ".a." + id, a_[t], !asymmetric_);
        const ad::Var b = ctx.tape.parameter(prefix + ".b." + id, b_[t], true);
        const auto& sel = r.rows_per_expert[t];
        if (sel.empty()) continue;
        const ad::Var xt = ad::gather_rows(xin, sel);
        const ad::Var out = ad::matmul_nt(ad::matmul_nt(xt, a), b);
        parts.push_back(ad::scale(ad::scale_rows_by_gate(out, r.gates, sel, t), scale()));
        rows.push_back(sel);
    }
    const ad::Var y = ad::scatter_add(base, parts, rows);
    return {y, std::move(r)};
}

std::vector<ad::ParamRef> MoloraLayer::params(const std::string& prefix) {
    std::vector<ad::ParamRef> out;
    out.push_back({prefix + ".router", &router_w_, true});
    for (std::size_t t = 0; t < experts(); ++t) {
        const std::string id = std::to_string(t);
        out.push_back({prefix + ".a." + id, &a_[t], !asymmetric_});
        out.push_back({prefix + ".b." + id, &b_[t], true});
    }
    return out;
}

Matrix MoloraLayer::merged_delta(std::size_t expert) const {
    check_expert(expert);
    return malk::scale(matmul(b_[expert], a_[expert]), scale());
}

Matrix MoloraLayer::down(std::size_t t) const {
    check_expert(t);
    return a_[t];
}

Matrix MoloraLayer::up(std::size_t t) const {
    check_expert(t);
    return b_[t];
}

}  // namespace malk
