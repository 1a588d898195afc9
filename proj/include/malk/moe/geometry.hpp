// Copyright 2026 The malk Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstddef>

namespace malk {

/// Rank layout of a shared-subspace mixture layer. d is the rank of the
/// shared down subspace and r_bar the per-expert up rank; r is the rank a
/// plain mixture-of-LoRA expert would have at the same budget.
struct MaloraGeometry {
    std::size_t n_experts = 8;
    std::size_t r = 8;
    double lambda = 0.5;
    std::size_t d = 32;
    std::size_t r_bar = 12;
    double beta = 1.0;
    std::size_t top_k = 2;
    std::size_t in_dim = 0;
    std::size_t out_dim = 0;
};

/// Half-up rounding of non-negative values, tolerant of representation error
/// (0.5 * 5 computed as 2.4999999999 still rounds to 3).
std::size_t round_half_up(double x);

/// d = round(lambda * r * N), r_bar = r + round((1 - lambda) * r); the other
/// fields keep their defaults. Throws ConfigError unless 0 < lambda <= 1 and
/// r, N >= 1.
MaloraGeometry derive_geometry(std::size_t r, std::size_t n_experts, double lambda);

/// lambda = d / (r * N), the inverse of the d formula.
double lambda_from_d(std::size_t d, std::size_t r, std::size_t n_experts);

/// Checks the geometry invariants (d, r_bar >= 1, 1 <= K <= N, r_bar <= d,
/// beta > 0, and d <= in_dim when in_dim is set). Throws ConfigError.
void validate_geometry(const MaloraGeometry& g);

/// sqrt(r_bar / r). Throws InvalidInput when r == 0.
double bound_ratio(std::size_t r_bar, std::size_t r);

}  // namespace malk
