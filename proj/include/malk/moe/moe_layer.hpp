// Copyright 2026 The malk Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstddef>

#include "malk/adapters/adapter.hpp"

namespace malk {

/// Shared parts of the mixture layers: a router W_g (N x n) and top-k
/// selection. Subclasses supply the expert deltas.
class MoeLayer : public AdapterLayer {
public:
    MoeLayer(Matrix base_w, std::size_t n_experts, std::size_t top_k, bool renormalize);

    std::size_t experts() const noexcept override { return n_experts_; }
    std::size_t top_k() const noexcept { return top_k_; }
    bool renormalize() const noexcept { return renormalize_; }

    Matrix& router() noexcept { return router_w_; }
    const Matrix& router() const noexcept { return router_w_; }

    /// Effective down projection of expert t (rank x n) and up projection
    /// (m x rank), so that merged_delta(t) = scale * up(t) * down(t).
    virtual Matrix down(std::size_t t) const = 0;
    virtual Matrix up(std::size_t t) const = 0;
    virtual double scale() const noexcept = 0;

protected:
    // Registers the router on the tape and routes x.
    RouteResult route_inputs(ForwardContext& ctx, ad::Var x, const std::string& prefix);
    // Dropout on the adapter branch input.
    ad::Var adapter_input(ForwardContext& ctx, ad::Var x, double rate) const;
    void check_expert(std::size_t t) const;

    Matrix router_w_;

private:
    std::size_t n_experts_;
    std::size_t top_k_;
    bool renormalize_;
};

}  // namespace malk
