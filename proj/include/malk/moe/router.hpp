// Copyright 2026 The malk Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstddef>
#include <vector>

#include "malk/autodiff/tape.hpp"
#include "malk/linalg/matrix.hpp"

namespace malk {

struct RouterStats {
    // Share of batch rows that selected expert i; sums to top_k.
    std::vector<double> fraction;
    // Batch mean of the softmax probability of expert i.
    std::vector<double> mean_prob;
    // Batch mean of the routing distribution entropy (nats).
    double entropy = 0.0;
};

struct RouteResult {
    ad::Var probs;  // batch x N softmax
    ad::Var gates;  // batch x N, zero outside the top-k
    Matrix mask;    // 0/1 selection
    std::vector<std::vector<std::size_t>> rows_per_expert;
    RouterStats stats;
};

/// Per row: softmax over the N logits x * router_w^T, keep the k largest
/// probabilities (ties go to the lower expert index) and zero the rest. The
/// kept values are used as-is unless `renormalize` rescales them to sum to 1.
/// Selection is treated as constant; gradients flow through the kept
/// probabilities into the router weights. Throws ConfigError if k > N or
/// k == 0.
RouteResult route(ad::Var router_w, ad::Var x, std::size_t k, bool renormalize = false);

/// Top-k expert indices of one probability row, tie-break by lowest index.
std::vector<std::size_t> top_k_indices(std::span<const double> probs, std::size_t k);

/// Switch-style load balance penalty factor * N * sum_i f_i * p_i, with f_i
/// held constant and p_i differentiable through route.probs.
ad::Var balance_loss(const RouteResult& route, double factor);

/// Same value from raw statistics, no tape.
double balance_loss_value(const RouterStats& stats, double factor);

}  // namespace malk
