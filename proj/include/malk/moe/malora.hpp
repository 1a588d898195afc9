// Copyright 2026 The malk Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstddef>
#include <vector>

#include "malk/moe/geometry.hpp"
#include "malk/moe/moe_layer.hpp"

namespace malk {

/// Ablation switches. Defaults give the full method.
struct MaloraFlags {
    // Shared subspace is registered but not trained.
    bool freeze_s_a = false;
    // Coefficient matrices are registered but not trained.
    bool freeze_p_t = false;
    // Apply the shared-subspace factorisation to the up side instead:
    // delta_t = S_B Q_t A_t with S_B (m x d), Q_t (d x r_bar), A_t (r_bar x n).
    bool decompose_b_side = false;
    // false: each expert owns a (d / N) x n subspace instead of sharing S_A.
    bool shared_subspace = true;
    // Drop the rank expansion (r_bar forced to r).
    bool symmetric = false;
};

struct MaloraOptions {
    MaloraGeometry geometry;
    MaloraFlags flags;
    // Zero selects 2 * r_bar.
    double alpha = 0.0;
    double dropout = 0.0;
    bool renormalize = false;
};

struct MaloraInit {
    Matrix shared;                // S_A (d x n), or S_B (m x d) on the B side
    std::vector<Matrix> coeffs;   // P_t (r_bar x d), or Q_t (d x r_bar)
};

/// Shared-subspace initialisation. For t = 0..N-1 draw K_t = kaiming(d, n),
/// take its thin SVD U_t S_t V_t, set P_t to the first r_bar rows of U_t S_t
/// divided by beta, and S_A = beta * V_0. With b_side the draw is
/// kaiming(d, out_dim) and the factors are transposed:
/// Q_t = (first r_bar rows of U_t S_t)^T / beta and S_B = beta * V_0^T.
MaloraInit malora_init(const MaloraGeometry& geometry, Rng& rng, bool b_side = false);

/// Mixture layer whose experts share a trainable down subspace:
/// delta_t = (alpha / r_bar) * B_t P_t S_A. The input is projected onto S_A
/// once per batch; each selected expert then applies its own P_t and B_t.
class MaloraLayer final : public MoeLayer {
public:
    /// Draws the subspace factors (malora_init order), then the router.
    /// Up matrices (or A_t on the B side) start at zero.
    MaloraLayer(Matrix base_w, const MaloraOptions& opts, Rng& rng);

    Method method() const noexcept override { return Method::Malora; }
    ForwardOutput forward(ForwardContext& ctx, ad::Var x, const std::string& prefix) override;
    std::vector<ad::ParamRef> params(const std::string& prefix) override;
    Matrix merged_delta(std::size_t expert = 0) const override;

    Matrix down(std::size_t t) const override;
    Matrix up(std::size_t t) const override;
    double scale() const noexcept override { return alpha_ / static_cast<double>(geo_.r_bar); }

    const MaloraGeometry& geometry() const noexcept { return geo_; }
    const MaloraFlags& flags() const noexcept { return flags_; }
    /// Rank of each expert's private subspace when shared_subspace is off.
    std::size_t expert_subspace_rank() const noexcept { return sub_rank_; }

    // Standard layout (shared subspace or per-expert subspaces).
    Matrix& s_a(std::size_t t = 0) { return flags_.shared_subspace ? s_a_.at(0) : s_a_.at(t); }
    Matrix& p(std::size_t t) { return coeff_.at(t); }
    Matrix& b(std::size_t t) { return side_.at(t); }
    // B-side layout: S_B shared, Q_t coefficients, A_t per expert.
    Matrix& s_b() { return s_a_.at(0); }
    Matrix& q(std::size_t t) { return coeff_.at(t); }
    Matrix& a(std::size_t t) { return side_.at(t); }

private:
    ForwardOutput forward_a_side(ForwardContext& ctx, ad::Var x, const std::string& prefix);
    ForwardOutput forward_b_side(ForwardContext& ctx, ad::Var x, const std::string& prefix);
    std::string subspace_name(const std::string& prefix, std::size_t t) const;

    MaloraGeometry geo_;
    MaloraFlags flags_;
    double alpha_;
    double dropout_;
    std::size_t sub_rank_;
    std::vector<Matrix> s_a_;    // one entry unless shared_subspace is off
    std::vector<Matrix> coeff_;  // P_t, or Q_t on the B side
    std::vector<Matrix> side_;   // B_t, or A_t on the B side
};

}  // namespace malk
