// Copyright 2026 The malk Authors
// SPDX-License-Identifier: Apache-2.0
//

#include "malk/moe/geometry.hpp"

#include <cmath>
#include <string>

#include "malk/errors.hpp"

namespace malk {

std::size_t round_half_up(double x) { return static_cast<std::size_t>(std::floor(x + 0.5 + 1e-9)); }

MaloraGeometry derive_geometry(std::size_t r, std::size_t n_experts, double lambda) {
    if (!(lambda > 0.0 && lambda <= 1.0)) {
        throw ConfigError("geometry.lambda must be in (0, 1], got " + std::to_string(lambda));
    }
    if (r == 0 || n_experts == 0) throw ConfigError("geometry: r and n_experts must be at least 1");
    MaloraGeometry g;
    g.n_experts = n_experts;
    g.r = r;
    g.lambda = lambda;
    const double rd = static_cast<double>(r);
    g.d = round_half_up(lambda * rd * static_cast<double>(n_experts));
    g.r_bar = r + round_half_up((1.0 - lambda) * rd);
    if (g.d == 0) throw ConfigError("geometry: lambda * r * N rounds to d = 0");
    return g;
}

double lambda_from_d(std::size_t d, std::size_t r, std::size_t n_experts) {
    if (r == 0 || n_experts == 0) throw ConfigError("geometry: r and n_experts must be at least 1");
    return static_cast<double>(d) / static_cast<double>(r * n_experts);
}

void validate_geometry(const MaloraGeometry& g) {
    auto fail = [](const std::string& what) { throw ConfigError("geometry: " + what); };
    if (g.n_experts == 0) fail("n_experts must be at least 1");
    if (g.r == 0) fail("r must be at least 1");
    if (g.d == 0) fail("d must be at least 1");
    if (g.r_bar == 0) fail("r_bar must be at least 1");
    if (g.top_k == 0 || g.top_k > g.n_experts) {
        fail("top_k must be in [1, n_experts], got " + std::to_string(g.top_k));
    }
    if (g.r_bar > g.d) {
        fail("r_bar (" + std::to_string(g.r_bar) + ") must not exceed d (" + std::to_string(g.d) + ")");
    }
    if (!(g.beta > 0.0) || !std::isfinite(g.beta)) fail("beta must be positive");
    if (g.in_dim != 0 && g.d > g.in_dim) {
        fail("d (" + std::to_string(g.d) + ") exceeds the input dimension " + std::to_string(g.in_dim));
    }
}

double bound_ratio(std::size_t r_bar, std::size_t r) {
    if (r == 0) throw InvalidInput("bound_ratio: r must be at least 1");
    return std::sqrt(static_cast<double>(r_bar) / static_cast<double>(r));
}

}  // namespace malk
