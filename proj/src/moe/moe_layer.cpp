// Copyright 2026 The malk Authors
// SPDX-License-Identifier: Apache-2.0
//

#include "malk/moe/moe_layer.hpp"

#include "malk/errors.hpp"

namespace malk {

MoeLayer::MoeLayer(Matrix base_w, std::size_t n_experts, std::size_t top_k, bool renormalize)
    : AdapterLayer(std::move(base_w)), n_experts_(n_experts), top_k_(top_k), renormalize_(renormalize) {
    if (n_experts == 0) throw ConfigError("n_experts must be at least 1");
    if (top_k == 0 || top_k > n_experts) {
        throw ConfigError("top_k must be in [1, " + std::to_string(n_experts) + "], got " +
                          std::to_string(top_k));
    }
}

RouteResult MoeLayer::route_inputs(ForwardContext& ctx, ad::Var x, const std::string& prefix) {
    const ad::Var w = ctx.tape.parameter(prefix + ".router", router_w_, true);
    return route(w, x, top_k_, renormalize_);
}

ad::Var MoeLayer::adapter_input(ForwardContext& ctx, ad::Var x, double rate) const {
    if (!ctx.training || rate == 0.0) return x;
    if (ctx.dropout_rng == nullptr) throw InvalidInput("adapter dropout needs an rng");
    return ad::dropout(x, rate, *ctx.dropout_rng);
}

void MoeLayer::check_expert(std::size_t t) const {
    if (t >= n_experts_) {
        throw InvalidInput("expert index " + std::to_string(t) + " out of range for " +
                           std::to_string(n_experts_) + " experts");
    }
}

}  // namespace malk
