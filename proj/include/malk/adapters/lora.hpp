// Copyright 2026 The malk Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstddef>

#include "malk/adapters/adapter.hpp"

namespace malk {

struct LoraOptions {
    std::size_t rank = 8;
    // Zero selects the default 2 * effective_rank.
    double alpha = 0.0;
    // AsyLoRA: the down matrix is frozen and the rank doubled.
    bool asymmetric = false;
    double dropout = 0.0;
};

/// y = x W^T + (alpha / r) * (x A^T) B^T with A (r x n) Kaiming-initialised
/// and B (m x r) zero. In asymmetric mode r is 2 * rank and A is frozen.
class LoraLayer final : public AdapterLayer {
public:
    LoraLayer(Matrix base_w, const LoraOptions& opts, Rng& rng);

    Method method() const noexcept override {
        return asymmetric_ ? Method::AsyLora : Method::Lora;
    }
    ForwardOutput forward(ForwardContext& ctx, ad::Var x, const std::string& prefix) override;
    std::vector<ad::ParamRef> params(const std::string& prefix) override;
    Matrix merged_delta(std::size_t expert = 0) const override;

    std::size_t effective_rank() const noexcept { return a_.rows(); }
    double alpha() const noexcept { return alpha_; }
    double scale() const noexcept { return alpha_ / static_cast<double>(a_.rows()); }
    void set_alpha(double alpha);

    Matrix& a() noexcept { return a_; }
    Matrix& b() noexcept { return b_; }
    const Matrix& a() const noexcept { return a_; }
    const Matrix& b() const noexcept { return b_; }

private:
    Matrix a_;
    Matrix b_;
    double alpha_;
    bool asymmetric_;
    double dropout_;
};

/// (alpha / r) * B A as a dense m x n matrix.
Matrix merge_delta(const LoraLayer& layer);

struct ParamCount {
    std::size_t trainable = 0;
    std::size_t frozen = 0;
};

/// Plain: r*n + m*r trainable. Asymmetric: m*2r trainable and 2r*n frozen.
/// Throws InvalidInput for r == 0.
ParamCount lora_param_count(std::size_t m, std::size_t n, std::size_t r, bool asymmetric);

}  // namespace malk
