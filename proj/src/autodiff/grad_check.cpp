// Copyright 2026 The malk Authors
// SPDX-License-Identifier: Apache-2.0
//

#include "malk/autodiff/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "malk/errors.hpp"

namespace malk::ad {
namespace {

double evaluate(const LossRecipe& recipe) {
    Tape tape;
    const Var loss = recipe(tape);
    const Matrix& v = loss.value();
    if (v.rows() != 1 || v.cols() != 1) throw NotScalarLoss("grad_check: recipe must return 1x1");
    return v(0, 0);
}

}  // namespace

GradCheckReport grad_check_report(const std::vector<ParamRef>& params, const LossRecipe& recipe,
                                  double eps) {
    if (!(eps >= 1e-7 && eps <= 1e-3)) throw InvalidInput("grad_check: eps must be in [1e-7, 1e-3]");

    GradientMap analytic;
    {
        Tape tape;
        const Var loss = recipe(tape);
        analytic = tape.backward(loss);
    }

    GradCheckReport report;
    for (const ParamRef& p : params) {
        if (!p.trainable) continue;
        const auto it = analytic.find(p.name);
        if (it == analytic.end()) {
            throw InvalidInput("grad_check: no gradient for trainable parameter '" + p.name + "'");
        }
        const Matrix& grad = it->second;
        for (std::size_t i = 0; i < p.value->size(); ++i) {
            double& slot = p.value->data()[i];
            const double saved = slot;
            slot = saved + eps;
            const double up = evaluate(recipe);
            slot = saved - eps;
            const double down = evaluate(recipe);
            slot = saved;
            const double numeric = (up - down) / (2.0 * eps);
            const double exact = grad.data()[i];
            const double denom = std::max({std::fabs(numeric), std::fabs(exact), 1e-12});
            const double rel = std::fabs(numeric - exact) / denom;
            ++report.entries_checked;
            if (rel > report.max_rel_error) {
                report.max_rel_error = rel;
                report.worst_param = p.name;
                report.worst_index = i;
                report.worst_numeric = numeric;
                report.worst_analytic = exact;
            }
        }
    }
    return report;
}

double grad_check(const std::vector<ParamRef>& params, const LossRecipe& recipe, double eps) {
    return grad_check_report(params, recipe, eps).max_rel_error;
}

}  // namespace malk::ad
