// Copyright 2026 The malk Authors
// SPDX-License-Identifier: Apache-2.0
//

#include "malk/harness/model.hpp"

#include "malk/adapters/lora.hpp"
#include "malk/errors.hpp"
#include "malk/linalg/random.hpp"
#include "malk/moe/molora.hpp"

namespace malk {

std::unique_ptr<AdapterLayer> make_adapter(const ModelSpec& spec, Matrix base, Rng& rng) {
    switch (spec.method) {
        case Method::Lora:
        case Method::AsyLora: {
            LoraOptions o;
            o.rank = spec.rank;
            o.alpha = spec.alpha;
            o.asymmetric = spec.method == Method::AsyLora;
            o.dropout = spec.dropout;
            return std::make_unique<LoraLayer>(std::move(base), o, rng);
        }
        case Method::Molora:
        case Method::MoAsyLora: {
            MoloraOptions o;
            o.n_experts = spec.n_experts;
            o.rank = spec.rank;
            o.top_k = spec.top_k;
            o.alpha = spec.alpha;
            o.asymmetric = spec.method == Method::MoAsyLora;
            o.dropout = spec.dropout;
            o.renormalize = spec.renormalize;
            return std::make_unique<MoloraLayer>(std::move(base), o, rng);
        }
        case Method::Malora: {
            MaloraOptions o;
            o.geometry.n_experts = spec.n_experts;
            o.geometry.r = spec.rank;
            o.geometry.d = spec.d;
            o.geometry.r_bar = spec.r_bar;
            o.geometry.top_k = spec.top_k;
            o.geometry.beta = spec.beta;
            o.geometry.lambda = lambda_from_d(spec.d, spec.rank, spec.n_experts);
            o.flags = spec.flags;
            o.alpha = spec.alpha;
            o.dropout = spec.dropout;
            o.renormalize = spec.renormalize;
            return std::make_unique<MaloraLayer>(std::move(base), o, rng);
        }
    }
    throw UnsupportedMethod("unknown method");
}

Model::Model(const ModelSpec& spec, std::vector<Matrix> base, std::uint64_t seed) : spec_(spec) {
    if (base.size() != spec.backbone.sites.size()) {
        throw ConfigError("model: " + std::to_string(base.size()) + " base weights for " +
                          std::to_string(spec.backbone.sites.size()) + " sites");
    }
    Rng rng(seed);
    for (std::size_t i = 0; i < base.size(); ++i) {
        const SiteDims& s = spec.backbone.sites[i];
        if (base[i].rows() != s.out || base[i].cols() != s.in) {
            throw SchemaError("model: base weight " + std::to_string(i) + " is " + base[i].shape() +
                              ", expected " + std::to_string(s.out) + "x" + std::to_string(s.in));
        }
        layers_.push_back(make_adapter(spec, std::move(base[i]), rng));
    }
}

ModelOutput Model::forward(ForwardContext& ctx, const Matrix& x) {
    ModelOutput out;
    ad::Var h = ctx.tape.constant(x);
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        ForwardOutput f = layers_[i]->forward(ctx, h, site_prefix(i));
        if (f.route) out.routes.push_back(std::move(*f.route));
        h = f.y;
        if (spec_.backbone.relu && i + 1 < layers_.size()) h = ad::relu(h);
    }
    out.y = h;
    return out;
}

std::vector<ad::ParamRef> Model::params() {
    std::vector<ad::ParamRef> out;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        auto p = layers_[i]->params(site_prefix(i));
        out.insert(out.end(), p.begin(), p.end());
    }
    return out;
}

std::size_t trainable_count(Model& model) {
    std::size_t n = 0;
    for (const auto& p : model.params())
        if (p.trainable) n += p.value->size();
    return n;
}

}  // namespace malk
