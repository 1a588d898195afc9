// Copyright 2026 The malk Authors
// SPDX-License-Identifier: Apache-2.0
//

#include "malk/moe/malora.hpp"

#include "malk/errors.hpp"
#include "malk/linalg/decomposition.hpp"
#include "malk/linalg/random.hpp"

namespace malk {
namespace {

// First `rows` rows of U * diag(sigma) restricted to the first `cols` columns.
Matrix scaled_left(const SvdResult& svd, std::size_t rows, std::size_t cols) {
    Matrix out(rows, cols);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) out(i, j) = svd.u(i, j) * svd.sigma[j];
    return out;
}

}  // namespace

MaloraInit malora_init(const MaloraGeometry& g, Rng& rng, bool b_side) {
    validate_geometry(g);
    const std::size_t fan = b_side ? g.out_dim : g.in_dim;
    if (fan < g.d) {
        throw ConfigError("malora_init: d = " + std::to_string(g.d) + " exceeds the " +
                          (b_side ? "output" : "input") + " dimension " + std::to_string(fan));
    }
    MaloraInit init;
    for (std::size_t t = 0; t < g.n_experts; ++t) {
        const SvdResult svd = svd_thin(kaiming_uniform(g.d, fan, rng));
        Matrix p = malk::scale(scaled_left(svd, g.r_bar, g.d), 1.0 / g.beta);
        init.coeffs.push_back(b_side ? transpose(p) : std::move(p));
        if (t == 0) {
            Matrix s = malk::scale(svd.v, g.beta);
            init.shared = b_side ? transpose(s) : std::move(s);
        }
    }
    return init;
}

MaloraLayer::MaloraLayer(Matrix base_w, const MaloraOptions& opts, Rng& rng)
    : MoeLayer(std::move(base_w), opts.geometry.n_experts, opts.geometry.top_k, opts.renormalize),
      geo_(opts.geometry),
      flags_(opts.flags),
      dropout_(opts.dropout),
      sub_rank_(opts.geometry.d) {
    geo_.in_dim = in_dim();
    geo_.out_dim = out_dim();
    if (flags_.symmetric) geo_.r_bar = geo_.r;
    if (flags_.decompose_b_side && !flags_.shared_subspace) {
        throw ConfigError("malora: decompose_b_side and shared_subspace = false cannot be combined");
    }
    if (!(opts.dropout >= 0.0 && opts.dropout < 1.0)) throw ConfigError("malora: dropout must be in [0, 1)");
    validate_geometry(geo_);
    alpha_ = opts.alpha > 0.0 ? opts.alpha : 2.0 * static_cast<double>(geo_.r_bar);
    const std::size_t n = geo_.n_experts;

    if (flags_.decompose_b_side) {
        MaloraInit init = malora_init(geo_, rng, true);
        s_a_.push_back(std::move(init.shared));
        coeff_ = std::move(init.coeffs);
        for (std::size_t t = 0; t < n; ++t) side_.emplace_back(geo_.r_bar, in_dim());
    } else if (flags_.shared_subspace) {
        MaloraInit init = malora_init(geo_, rng, false);
        s_a_.push_back(std::move(init.shared));
        coeff_ = std::move(init.coeffs);
        for (std::size_t t = 0; t < n; ++t) side_.emplace_back(out_dim(), geo_.r_bar);
    } else {
        // Private subspaces split the shared rank evenly, so each expert's
        // delta has rank at most d / N.
        sub_rank_ = geo_.d / n;
        if (sub_rank_ == 0) throw ConfigError("malora: d / n_experts must be at least 1 without a shared subspace");
        if (sub_rank_ > geo_.r_bar) throw ConfigError("malora: d / n_experts must not exceed r_bar");
        for (std::size_t t = 0; t < n; ++t) {
            const SvdResult svd = svd_thin(kaiming_uniform(geo_.r_bar, in_dim(), rng));
            coeff_.push_back(malk::scale(scaled_left(svd, geo_.r_bar, sub_rank_), 1.0 / geo_.beta));
            s_a_.push_back(malk::scale(slice_rows(svd.v, 0, sub_rank_), geo_.beta));
            side_.emplace_back(out_dim(), geo_.r_bar);
        }
    }
    router_w_ = kaiming_uniform(n, in_dim(), rng);
}

std::string MaloraLayer::subspace_name(const std::string& prefix, std::size_t t) const {
    if (flags_.decompose_b_side) return prefix + ".s_b";
    if (flags_.shared_subspace) return prefix + ".s_a";
    return prefix + ".s_a." + std::to_string(t);
}

ForwardOutput MaloraLayer::forward(ForwardContext& ctx, ad::Var x, const std::string& prefix) {
    return flags_.decompose_b_side ? forward_b_side(ctx, x, prefix) : forward_a_side(ctx, x, prefix);
}

ForwardOutput MaloraLayer::forward_a_side(ForwardContext& ctx, ad::Var x, const std::string& prefix) {
    const ad::Var base = base_forward(x);
    RouteResult r = route_inputs(ctx, x, prefix);
    const ad::Var xin = adapter_input(ctx, x, dropout_);

    std::vector<ad::Var> subspaces;
    for (std::size_t i = 0; i < s_a_.size(); ++i) {
        subspaces.push_back(ctx.tape.parameter(subspace_name(prefix, i), s_a_[i], !flags_.freeze_s_a));
    }
    // Shared projection first: one batch x d product serves every expert.
    ad::Var h;
    if (flags_.shared_subspace) h = ad::matmul_nt(xin, subspaces[0]);

    std::vector<ad::Var> parts;
    std::vector<std::vector<std::size_t>> rows;
    for (std::size_t t = 0; t < experts(); ++t) {
        const std::string id = std::to_string(t);
        const ad::Var p = ctx.tape.parameter(prefix + ".p." + id, coeff_[t], !flags_.freeze_p_t);
        const ad::Var b = ctx.tape.parameter(prefix + ".b." + id, side_[t], true);
        const auto& sel = r.rows_per_expert[t];
        if (sel.empty()) continue;
        const ad::Var ht = flags_.shared_subspace ? ad::gather_rows(h, sel)
                                                  : ad::matmul_nt(ad::gather_rows(xin, sel), subspaces[t]);
        const ad::Var out = ad::matmul_nt(ad::matmul_nt(ht, p), b);
        parts.push_back(ad::scale(ad::scale_rows_by_gate(out, r.gates, sel, t), scale()));
        rows.push_back(sel);
    }
    return {ad::scatter_add(base, parts, rows), std::move(r)};
}

ForwardOutput MaloraLayer::forward_b_side(ForwardContext& ctx, ad::Var x, const std::string& prefix) {
    const ad::Var base = base_forward(x);
    RouteResult r = route_inputs(ctx, x, prefix);
    const ad::Var xin = adapter_input(ctx, x, dropout_);

    const ad::Var s_b = ctx.tape.parameter(prefix + ".s_b", s_a_[0], !flags_.freeze_s_a);
    std::vector<ad::Var> parts;
    std::vector<std::vector<std::size_t>> rows;
    for (std::size_t t = 0; t < experts(); ++t) {
        const std::string id = std::to_string(t);
        const ad::Var q = ctx.tape.parameter(prefix + ".q." + id, coeff_[t], !flags_.freeze_p_t);
        const ad::Var a = ctx.tape.parameter(prefix + ".a." + id, side_[t], true);
        const auto& sel = r.rows_per_expert[t];
        if (sel.empty()) continue;
        const ad::Var u = ad::matmul_nt(ad::matmul_nt(ad::gather_rows(xin, sel), a), q);
        parts.push_back(ad::scale_rows_by_gate(u, r.gates, sel, t));
        rows.push_back(sel);
    }
    // Experts meet in the d-dimensional space; S_B is applied once.
    const ad::Var zero = ctx.tape.constant(Matrix(x.rows(), geo_.d));
    const ad::Var mixed = ad::scatter_add(zero, parts, rows);
    const ad::Var delta = ad::scale(ad::matmul_nt(mixed, s_b), scale());
    return {ad::add(base, delta), std::move(r)};
}

std::vector<ad::ParamRef> MaloraLayer::params(const std::string& prefix) {
    std::vector<ad::ParamRef> out;
    out.push_back({prefix + ".router", &router_w_, true});
    for (std::size_t i = 0; i < s_a_.size(); ++i) {
        out.push_back({subspace_name(prefix, i), &s_a_[i], !flags_.freeze_s_a});
    }
    const char* coeff = flags_.decompose_b_side ? ".q." : ".p.";
    const char* side = flags_.decompose_b_side ? ".a." : ".b.";
    for (std::size_t t = 0; t < experts(); ++t) {
        const std::string id = std::to_string(t);
        out.push_back({prefix + coeff + id, &coeff_[t], !flags_.freeze_p_t});
        out.push_back({prefix + side + id, &side_[t], true});
    }
    return out;
}

Matrix MaloraLayer::down(std::size_t t) const {
    check_expert(t);
    if (flags_.decompose_b_side) return side_[t];
    return matmul(coeff_[t], s_a_[flags_.shared_subspace ? 0 : t]);
}

Matrix MaloraLayer::up(std::size_t t) const {
    check_expert(t);
    if (flags_.decompose_b_side) return matmul(s_a_[0], coeff_[t]);
    return side_[t];
}

Matrix MaloraLayer::merged_delta(std::size_t expert) const {
    return malk::scale(matmul(up(expert), down(expert)), scale());
}

}  // namespace malk
