// Copyright 2026 The malk Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

#include "malk/adapters/adapter.hpp"
#include "malk/moe/malora.hpp"

namespace malk {

/// One adapted linear site with weight shape out x in.
struct SiteDims {
    std::size_t out = 0;
    std::size_t in = 0;
};

/// Everything the counting formulas need, independent of any weights.
struct BudgetConfig {
    // Single-expert rank for lora/asylora and per-expert rank for molora.
    std::size_t rank = 8;
    std::size_t n_experts = 8;
    std::size_t top_k = 2;
    std::size_t d = 32;
    std::size_t r_bar = 12;
    MaloraFlags flags;
    bool include_router = true;
    // Frozen backbone size for percent_of_base; 0 means sum of site sizes.
    std::uint64_t base_params = 0;
};

struct Budget {
    std::uint64_t trainable = 0;
    std::uint64_t frozen = 0;  // frozen adapter matrices, backbone excluded
    std::uint64_t router = 0;  // included in trainable when counted
    double percent_of_base = 0.0;
};

/// Exact counts. Per site: lora r(n + m); asylora m*2r trainable, 2r*n frozen;
/// molora N(rn + mr) + Nn; malora dn + N(r_bar d + m r_bar) + Nn. Ablation
/// flags move matrices between trainable and frozen or change their shapes.
/// Throws ConfigError on an invalid configuration.
Budget param_budget(Method method, const std::vector<SiteDims>& sites, const BudgetConfig& cfg);

struct FlopCount {
    std::uint64_t adapter = 0;  // forward multiply-adds of the delta path
    std::uint64_t router = 0;
    std::uint64_t base = 0;
};

/// Forward multiply-adds for `batch` rows. Per row and site: lora r(n + m);
/// molora K(rn + mr); malora dn + K(r_bar d + m r_bar); routers Nn; base mn.
FlopCount flop_budget(Method method, const std::vector<SiteDims>& sites, const BudgetConfig& cfg,
                      std::size_t batch);

inline constexpr std::string_view kLlama2Preset = "llama2-7b-linear-sites";
inline constexpr std::uint64_t kLlama2BaseParams = 6'738'415'616ULL;

/// Q, K, V (4096 x 4096), Up and Gate (11008 x 4096) and Down (4096 x 11008)
/// for each of the 32 decoder layers.
std::vector<SiteDims> llama2_7b_linear_sites();

}  // namespace malk
