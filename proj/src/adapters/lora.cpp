// Copyright 2026 The malk Authors
// SPDX-License-Identifier: Apache-2.0
//

#include "malk/adapters/lora.hpp"

#include <cmath>

#include "malk/errors.hpp"
#include "malk/linalg/random.hpp"

namespace malk {

LoraLayer::LoraLayer(Matrix base_w, const LoraOptions& opts, Rng& rng)
    : AdapterLayer(std::move(base_w)), asymmetric_(opts.asymmetric), dropout_(opts.dropout) {
    if (opts.rank == 0) throw InvalidInput("lora: rank must be at least 1");
    if (!(opts.dropout >= 0.0 && opts.dropout < 1.0)) throw InvalidInput("lora: dropout must be in [0, 1)");
    const std::size_t r = opts.asymmetric ? 2 * opts.rank : opts.rank;
    a_ = kaiming_uniform(r, in_dim(), rng);
    b_ = Matrix(out_dim(), r);
    alpha_ = opts.alpha > 0.0 ? opts.alpha : 2.0 * static_cast<double>(r);
}

void LoraLayer::set_alpha(double alpha) {
    if (!(alpha > 0.0) || !std::isfinite(alpha)) throw InvalidInput("lora: alpha must be positive");
    alpha_ = alpha;
}

ForwardOutput LoraLayer::forward(ForwardContext& ctx, ad::Var x, const std::string& prefix) {
    const ad::Var base = base_forward(x);
    const ad::Var a = ctx.tape.parameter(prefix + ".a", a_, !asymmetric_);
    const ad::Var b = ctx.tape.parameter(prefix + ".b", b_, true);
    ad::Var xin = x;
    if (ctx.training && dropout_ > 0.0) {
        if (ctx.dropout_rng == nullptr) throw InvalidInput("lora: dropout needs an rng");
        xin = ad::dropout(x, dropout_, *ctx.dropout_rng);
    }
    const ad::Var delta = ad::matmul_nt(ad::matmul_nt(xin, a), b);
    return {ad::add(base, ad::scale(delta, scale())), std::nullopt};
}

std::vector<ad::ParamRef> LoraLayer::params(const std::string& prefix) {
    return {{prefix + ".a", &a_, !asymmetric_}, {prefix + ".b", &b_, true}};
}

Matrix LoraLayer::merged_delta(std::size_t) const { return malk::scale(matmul(b_, a_), scale()); }

Matrix merge_delta(const LoraLayer& layer) { return layer.merged_delta(); }

ParamCount lora_param_count(std::size_t m, std::size_t n, std::size_t r, bool asymmetric) {
    if (r == 0) throw InvalidInput("lora_param_count: rank must be at least 1");
    if (asymmetric) return {m * 2 * r, 2 * r * n};
    return {r * n + m * r, 0};
}

}  // namespace malk
