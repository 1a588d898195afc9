// Copyright 2026 The malk Authors
// SPDX-License-Identifier: Apache-2.0
//

#include "malk/moe/budget.hpp"

#include "malk/errors.hpp"

namespace malk {
namespace {

using u64 = std::uint64_t;

void check(const BudgetConfig& cfg, Method method) {
    if (cfg.rank == 0) throw ConfigError("budget: rank must be at least 1");
    if (!is_moe(method)) return;
    if (cfg.n_experts == 0) throw ConfigError("budget: n_experts must be at least 1");
    if (cfg.top_k > cfg.n_experts) throw ConfigError("budget: top_k exceeds n_experts");
    if (method == Method::Malora) {
        const std::size_t r_bar = cfg.flags.symmetric ? cfg.rank : cfg.r_bar;
        if (cfg.d == 0 || r_bar == 0) throw ConfigError("budget: d and r_bar must be at least 1");
        if (r_bar > cfg.d) throw ConfigError("budget: r_bar must not exceed d");
        if (!cfg.flags.shared_subspace && cfg.d / cfg.n_experts == 0) {
            throw ConfigError("budget: d / n_experts must be at least 1 without a shared subspace");
        }
    }
}

// Trainable and frozen adapter counts of one site, router excluded.
std::pair<u64, u64> site_params(Method method, const SiteDims& s, const BudgetConfig& cfg) {
    const u64 m = s.out, n = s.in, r = cfg.rank, N = cfg.n_experts;
    switch (method) {
        case Method::Lora: return {r * (n + m), 0};
        case Method::AsyLora: return {m * 2 * r, 2 * r * n};
        case Method::Molora: return {N * r * (n + m), 0};
        case Method::MoAsyLora: return {N * m * 2 * r, N * 2 * r * n};
        case Method::Malora: break;
    }
    const u64 d = cfg.d, rb = cfg.flags.symmetric ? cfg.rank : cfg.r_bar;
    u64 shared, coeffs, side;
    if (cfg.flags.decompose_b_side) {
        shared = m * d;
        coeffs = N * d * rb;
        side = N * rb * n;
    } else if (cfg.flags.shared_subspace) {
        shared = d * n;
        coeffs = N * rb * d;
        side = N * m * rb;
    } else {
        const u64 de = d / N;
        shared = N * de * n;
        coeffs = N * rb * de;
        side = N * m * rb;
    }
    u64 trainable = side, frozen = 0;
    (cfg.flags.freeze_s_a ? frozen : trainable) += shared;
    (cfg.flags.freeze_p_t ? frozen : trainable) += coeffs;
    return {trainable, frozen};
}

}  // namespace

Budget param_budget(Method method, const std::vector<SiteDims>& sites, const BudgetConfig& cfg) {
    check(cfg, method);
    Budget b;
    u64 base = 0;
    for (const SiteDims& s : sites) {
        const auto [t, f] = site_params(method, s, cfg);
        b.trainable += t;
        b.frozen += f;
        if (is_moe(method) && cfg.include_router) b.router += static_cast<u64>(cfg.n_experts) * s.in;
        base += static_cast<u64>(s.out) * s.in;
    }
    b.trainable += b.router;
    if (cfg.base_params != 0) base = cfg.base_params;
    b.percent_of_base = base == 0 ? 0.0 : 100.0 * static_cast<double>(b.trainable) / static_cast<double>(base);
    return b;
}

FlopCount flop_budget(Method method, const std::vector<SiteDims>& sites, const BudgetConfig& cfg,
                      std::size_t batch) {
    check(cfg, method);
    FlopCount f;
    const u64 r = cfg.rank, K = cfg.top_k;
    for (const SiteDims& s : sites) {
        const u64 m = s.out, n = s.in;
        f.base += m * n;
        switch (method) {
            case Method::Lora: f.adapter += r * (n + m); break;
            case Method::AsyLora: f.adapter += 2 * r * (n + m); break;
            case Method::Molora: f.adapter += K * r * (n + m); break;
            case Method::MoAsyLora: f.adapter += K * 2 * r * (n + m); break;
            case Method::Malora: {
                const u64 d = cfg.d, rb = cfg.flags.symmetric ? cfg.rank : cfg.r_bar;
                if (cfg.flags.decompose_b_side) {
                    f.adapter += K * (rb * n + d * rb) + m * d;
                } else if (cfg.flags.shared_subspace) {
                    f.adapter += d * n + K * (rb * d + m * rb);
                } else {
                    const u64 de = d / cfg.n_experts;
                    f.adapter += K * (de * n + rb * de + m * rb);
                }
                break;
            }
        }
        if (is_moe(method)) f.router += static_cast<u64>(cfg.n_experts) * n;
    }
    const u64 rows = batch;
    f.adapter *= rows;
    f.router *= rows;
    f.base *= rows;
    return f;
}

std::vector<SiteDims> llama2_7b_linear_sites() {
    std::vector<SiteDims> sites;
    for (int layer = 0; layer < 32; ++layer) {
        sites.push_back({4096, 4096});   // q
        sites.push_back({4096, 4096});   // k
        sites.push_back({4096, 4096});   // v
        sites.push_back({11008, 4096});  // up
        sites.push_back({4096, 11008});  // down
        sites.push_back({11008, 4096});  // gate
    }
    return sites;
}

}  // namespace malk
