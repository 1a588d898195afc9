// Copyright 2026 The malk Authors
// SPDX-License-Identifier: Apache-2.0
//

#include "malk/harness/optim.hpp"

#include <cmath>

#include "malk/errors.hpp"
#include "malk/linalg/kernels.hpp"

namespace malk {

void AdamW::step(const std::vector<ad::ParamRef>& params, const ad::GradientMap& grads, double lr) {
    ++t_;
    const double td = static_cast<double>(t_);
    const kernels::AdamwParams hp{lr,
                                  cfg_.beta1,
                                  cfg_.beta2,
                                  cfg_.eps,
                                  cfg_.weight_decay,
                                  1.0 - std::pow(cfg_.beta1, td),
                                  1.0 - std::pow(cfg_.beta2, td)};
    const kernels::KernelTable& k = kernels::active();
    for (const ad::ParamRef& p : params) {
        if (!p.trainable) continue;
        const auto it = grads.find(p.name);
        if (it == grads.end()) throw InvalidInput("adamw: no gradient for '" + p.name + "'");
        const Matrix& g = it->second;
        if (g.rows() != p.value->rows() || g.cols() != p.value->cols()) {
            throw ShapeError("adamw: gradient " + g.shape() + " for parameter '" + p.name + "' of shape " +
                             p.value->shape());
        }
        auto [slot, fresh] = state_.try_emplace(p.name);
        if (fresh) {
            slot->second.first = Matrix(g.rows(), g.cols());
            slot->second.second = Matrix(g.rows(), g.cols());
        }
        k.adamw(hp, g.data(), p.value->data(), slot->second.first.data(), slot->second.second.data(),
                g.size());
    }
}

double scheduled_lr(double lr, std::size_t step, std::size_t warmup_steps, std::size_t total_steps) {
    if (step < warmup_steps) return lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
    if (step >= total_steps) return 0.0;
    return lr * static_cast<double>(total_steps - step) / static_cast<double>(total_steps - warmup_steps);
}

double clip_grad_norm(ad::GradientMap& grads, double max_norm) {
    double sq = 0.0;
    for (const auto& [name, g] : grads) {
        const double n = frobenius_norm(g);
        sq += n * n;
    }
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        const double s = max_norm / norm;
        for (auto& [name, g] : grads) g = scale(g, s);
    }
    return norm;
}

}  // namespace malk
