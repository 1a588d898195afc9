// Copyright 2026 The malk Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "malk/adapters/adapter.hpp"
#include "malk/harness/tasks.hpp"
#include "malk/moe/malora.hpp"

namespace malk {

/// Everything needed to build the adapter stack for one method.
struct ModelSpec {
    Method method = Method::Malora;
    Backbone backbone;
    // lora/asylora rank, or per-expert rank for the mixtures.
    std::size_t rank = 8;
    std::size_t n_experts = 8;
    std::size_t top_k = 2;
    std::size_t d = 32;
    std::size_t r_bar = 12;
    double beta = 1.0;
    // Zero selects 2 * (effective rank).
    double alpha = 0.0;
    double dropout = 0.0;
    bool renormalize = false;
    MaloraFlags flags;
};

struct ModelOutput {
    ad::Var y;
    std::vector<RouteResult> routes;  // one per mixture site
};

/// A chain of adapted linear sites named site0, site1, ...
class Model {
public:
    /// Base weights must match spec.backbone. Adapter matrices are drawn from
    /// Rng(seed), site by site.
    Model(const ModelSpec& spec, std::vector<Matrix> base, std::uint64_t seed);

    ModelOutput forward(ForwardContext& ctx, const Matrix& x);
    /// Adapter parameters of every site (router included), in site order.
    std::vector<ad::ParamRef> params();

    const ModelSpec& spec() const noexcept { return spec_; }
    std::size_t sites() const noexcept { return layers_.size(); }
    AdapterLayer& site(std::size_t i) { return *layers_.at(i); }
    const AdapterLayer& site(std::size_t i) const { return *layers_.at(i); }
    static std::string site_prefix(std::size_t i) { return "site" + std::to_string(i); }

private:
    ModelSpec spec_;
    std::vector<std::unique_ptr<AdapterLayer>> layers_;
};

/// Builds one adapter layer of the given method over a base weight.
std::unique_ptr<AdapterLayer> make_adapter(const ModelSpec& spec, Matrix base, Rng& rng);

/// Trainable adapter parameter count of the built model (router included).
std::size_t trainable_count(Model& model);

}  // namespace malk
