// Copyright 2026 The malk Authors
// SPDX-License-Identifier: Apache-2.0
//

#include "malk/adapters/adapter.hpp"

#include "malk/errors.hpp"

namespace malk {

std::string_view method_name(Method m) noexcept {
    switch (m) {
        case Method::Lora: return "lora";
        case Method::AsyLora: return "asylora";
        case Method::Molora: return "molora";
        case Method::MoAsyLora: return "moasylora";
        case Method::Malora: return "malora";
    }
    return "unknown";
}

Method parse_method(std::string_view name) {
    for (Method m : {Method::Lora, Method::AsyLora, Method::Molora, Method::MoAsyLora, Method::Malora}) {
        if (method_name(m) == name) return m;
    }
    throw ConfigError("unknown method '" + std::string(name) +
                      "' (expected lora, asylora, molora, moasylora or malora)");
}

bool is_moe(Method m) noexcept {
    return m == Method::Molora || m == Method::MoAsyLora || m == Method::Malora;
}

AdapterLayer::AdapterLayer(Matrix base_w) : base_w_(std::move(base_w)), base_wt_(transpose(base_w_)) {}

ad::Var AdapterLayer::base_forward(ad::Var x) const {
    if (x.cols() != in_dim()) {
        throw ShapeError("adapter input " + x.value().shape() + " does not match base weight " +
                         base_w_.shape());
    }
    return ad::matmul_const(x, base_wt_);
}

}  // namespace malk
