// Copyright 2026 The malk Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstddef>
#include <vector>

#include "malk/moe/moe_layer.hpp"

namespace malk {

struct MoloraOptions {
    std::size_t n_experts = 8;
    std::size_t rank = 8;
    std::size_t top_k = 2;
    // Zero selects 2 * effective rank.
    double alpha = 0.0;
    // MoAsyLoRA: every expert's down matrix frozen, rank doubled.
    bool asymmetric = false;
    double dropout = 0.0;
    bool renormalize = false;
};

/// Mixture of N LoRA experts behind a top-k softmax router:
/// y = x W^T + sum_t G_t * (alpha / r) * x A_t^T B_t^T, evaluated only on
/// the rows routed to each expert.
class MoloraLayer final : public MoeLayer {
public:
    /// Draws A_0..A_{N-1} then the router from rng; every B_t starts at zero.
    MoloraLayer(Matrix base_w, const MoloraOptions& opts, Rng& rng);

    Method method() const noexcept override {
        return asymmetric_ ? Method::MoAsyLora : Method::Molora;
    }
    ForwardOutput forward(ForwardContext& ctx, ad::Var x, const std::string& prefix) override;
    std::vector<ad::ParamRef> params(const std::string& prefix) override;
    Matrix merged_delta(std::size_t expert = 0) const override;

    Matrix down(std::size_t t) const override;
    Matrix up(std::size_t t) const override;
    double scale() const noexcept override { return alpha_ / static_cast<double>(rank_); }
    std::size_t effective_rank() const noexcept { return rank_; }

    Matrix& a(std::size_t t) { return a_.at(t); }
    Matrix& b(std::size_t t) { return b_.at(t); }
    const Matrix& a(std::size_t t) const { return a_.at(t); }
    const Matrix& b(std::size_t t) const { return b_.at(t); }

private:
    std::vector<Matrix> a_;
    std::vector<Matrix> b_;
    std::size_t rank_;
    double alpha_;
    bool asymmetric_;
    double dropout_;
};

}  // namespace malk
