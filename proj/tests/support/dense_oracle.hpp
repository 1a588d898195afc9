// Copyright 2026 The malk Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense reference evaluation of mixture layers: every expert is computed on
// every row and combined through an independently computed gate matrix.

#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "malk/linalg/matrix.hpp"
#include "malk/moe/moe_layer.hpp"

namespace malk::testing {

inline Matrix oracle_gates(const Matrix& router_w, const Matrix& x, std::size_t k, bool renormalize) {
    const std::size_t n = router_w.rows();
    Matrix gates(x.rows(), n);
    for (std::size_t r = 0; r < x.rows(); ++r) {
        std::vector<double> logit(n, 0.0);
        for (std::size_t e = 0; e < n; ++e)
            for (std::size_t j = 0; j < x.cols(); ++j) logit[e] += x(r, j) * router_w(e, j);
        const double mx = *std::max_element(logit.begin(), logit.end());
        double z = 0.0;
        for (double& l : logit) z += (l = std::exp(l - mx));
        for (double& l : logit) l /= z;
        std::vector<bool> taken(n, false);
        double kept = 0.0;
        for (std::size_t pick = 0; pick < k; ++pick) {
            std::size_t best = n;
            for (std::size_t e = 0; e < n; ++e)
                if (!taken[e] && (best == n || logit[e] > logit[best])) best = e;
            taken[best] = true;
            kept += logit[best];
        }
        for (std::size_t e = 0; e < n; ++e)
            if (taken[e]) gates(r, e) = renormalize ? logit[e] / kept : logit[e];
    }
    return gates;
}

inline Matrix dense_forward(const MoeLayer& layer, const Matrix& x) {
    const Matrix gates = oracle_gates(layer.router(), x, layer.top_k(), layer.renormalize());
    Matrix y = matmul_nt(x, layer.base_weight());
    for (std::size_t t = 0; t < layer.experts(); ++t) {
        const Matrix out = matmul_nt(x, layer.merged_delta(t));
        for (std::size_t r = 0; r < y.rows(); ++r)
            for (std::size_t c = 0; c < y.cols(); ++c) y(r, c) += gates(r, t) * out(r, c);
    }
    return y;
}

}  // namespace malk::testing
