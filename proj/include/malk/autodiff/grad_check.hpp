// Copyright 2026 The malk Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "malk/autodiff/tape.hpp"

namespace malk::ad {

/// A named matrix that a loss recipe reads when it builds its tape. The
/// checker perturbs *value in place, so the recipe must read through the
/// same storage every time it runs.
struct ParamRef {
    std::string name;
    Matrix* value;
    bool trainable;
};

using LossRecipe = std::function<Var(Tape&)>;

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::string worst_param;
    std::size_t worst_index = 0;
    double worst_numeric = 0.0;
    double worst_analytic = 0.0;
    std::size_t entries_checked = 0;
};

/// Compares backward() against central differences (f(t+eps) - f(t-eps)) / 2eps
/// for every entry of every trainable parameter. Relative error per entry is
/// |numeric - analytic| / max(|numeric|, |analytic|, 1e-12). eps must lie in
/// [1e-7, 1e-3].
GradCheckReport grad_check_report(const std::vector<ParamRef>& params, const LossRecipe& recipe,
                                  double eps = 1e-5);

double grad_check(const std::vector<ParamRef>& params, const LossRecipe& recipe,
                  double eps = 1e-5);

}  // namespace malk::ad
