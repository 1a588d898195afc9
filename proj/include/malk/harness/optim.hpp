// Copyright 2026 The malk Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "malk/autodiff/grad_check.hpp"
#include "malk/autodiff/tape.hpp"

namespace malk {

struct AdamwConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

/// Adam with decoupled weight decay. Moment buffers exist only for trainable
/// parameters; frozen ones are never touched.
class AdamW {
public:
    explicit AdamW(AdamwConfig cfg = {}) : cfg_(cfg) {}

    /// One update at learning rate lr. Every trainable parameter must have a
    /// gradient entry of matching shape.
    void step(const std::vector<ad::ParamRef>& params, const ad::GradientMap& grads, double lr);

    std::size_t steps_taken() const noexcept { return t_; }
    /// Moment buffers by parameter name (empty for frozen parameters).
    const std::map<std::string, std::pair<Matrix, Matrix>>& state() const noexcept { return state_; }

private:
    AdamwConfig cfg_;
    std::size_t t_ = 0;
    std::map<std::string, std::pair<Matrix, Matrix>> state_;
};

/// Linear warmup to lr over warmup_steps, then linear decay to 0 at
/// total_steps: lr * s / warmup for s < warmup, lr * (total - s) / (total -
/// warmup) afterwards.
double scheduled_lr(double lr, std::size_t step, std::size_t warmup_steps, std::size_t total_steps);

/// Scales every gradient so the global norm is at most max_norm. Returns the
/// norm before clipping.
double clip_grad_norm(ad::GradientMap& grads, double max_norm);

}  // namespace malk
