// Copyright 2026 The malk Authors
// SPDX-License-Identifier: Apache-2.0
//

#include "malk/moe/router.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "malk/errors.hpp"

namespace malk {

std::vector<std::size_t> top_k_indices(std::span<const double> probs, std::size_t k) {
    std::vector<std::size_t> order(probs.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return probs[a] > probs[b]; });
    order.resize(std::min(k, order.size()));
    std::sort(order.begin(), order.end());
    return order;
}

RouteResult route(ad::Var router_w, ad::Var x, std::size_t k, bool renormalize) {
    const std::size_t n_experts = router_w.rows();
    if (k == 0 || k > n_experts) {
        throw ConfigError("route: top_k must be in [1, " + std::to_string(n_experts) + "], got " +
                          std::to_string(k));
    }
    const ad::Var logits = ad::matmul_nt(x, router_w);
    const ad::Var probs = ad::softmax_rows(logits);
    const Matrix& p = probs.value();
    const std::size_t batch = p.rows();

    RouteResult out{probs, probs, Matrix(batch, n_experts), {}, {}};
    out.rows_per_expert.resize(n_experts);
    out.stats.fraction.assign(n_experts, 0.0);
    out.stats.mean_prob.assign(n_experts, 0.0);
    double entropy = 0.0;
    for (std::size_t r = 0; r < batch; ++r) {
        for (std::size_t e : top_k_indices(p.row(r), k)) {
            out.mask(r, e) = 1.0;
            out.rows_per_expert[e].push_back(r);
            out.stats.fraction[e] += 1.0;
        }
        for (std::size_t e = 0; e < n_experts; ++e) {
            out.stats.mean_prob[e] += p(r, e);
            if (p(r, e) > 0.0) entropy -= p(r, e) * std::log(p(r, e));
        }
    }
    const double b = static_cast<double>(batch);
    for (std::size_t e = 0; e < n_experts; ++e) {
        out.stats.fraction[e] /= b;
        out.stats.mean_prob[e] /= b;
    }
    out.stats.entropy = entropy / b;

    out.gates = ad::mask_select(probs, out.mask);
    if (renormalize) out.gates = ad::row_normalize(out.gates);
    return out;
}

ad::Var balance_loss(const RouteResult& route, double factor) {
    const Matrix& p = route.probs.value();
    const double n_experts = static_cast<double>(p.cols());
    const double batch = static_cast<double>(p.rows());
    Matrix w(p.rows(), p.cols());
    for (std::size_t r = 0; r < p.rows(); ++r)
        for (std::size_t e = 0; e < p.cols(); ++e)
            w(r, e) = factor * n_experts * route.stats.fraction[e] / batch;
    return ad::weighted_sum(route.probs, w);
}

double balance_loss_value(const RouterStats& stats, double factor) {
    double s = 0.0;
    for (std::size_t e = 0; e < stats.fraction.size(); ++e) s += stats.fraction[e] * stats.mean_prob[e];
    return factor * static_cast<double>(stats.fraction.size()) * s;
}

}  // namespace malk
