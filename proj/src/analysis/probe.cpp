// Copyright 2026 The malk Authors
// SPDX-License-Identifier: Apache-2.0
//

#include "malk/analysis/probe.hpp"

#include <cmath>

#include "malk/autodiff/tape.hpp"
#include "malk/errors.hpp"
#include "malk/linalg/random.hpp"
#include "malk/moe/malora.hpp"

namespace malk {

std::vector<BetaProbeRow> beta_grad_probe(const BetaProbeInput& in, const std::vector<double>& betas) {
    if (betas.empty()) throw InvalidInput("beta_grad_probe: no beta values");
    const MaloraGeometry& g = in.geometry;
    std::vector<Matrix> ups;
    {
        Rng rng(Rng::derive(in.seed, 0x70726f6265ULL));
        for (std::size_t t = 0; t < g.n_experts; ++t) {
            ups.push_back(uniform_matrix(in.base_w.rows(), g.r_bar, -in.probe_scale, in.probe_scale, rng));
        }
    }

    std::vector<BetaProbeRow> rows;
    for (double beta : betas) {
        MaloraOptions opts;
        opts.geometry = g;
        opts.geometry.beta = beta;
        Rng rng(in.seed);
        MaloraLayer layer(in.base_w, opts, rng);
        for (std::size_t t = 0; t < g.n_experts; ++t) layer.b(t) = ups[t];

        ad::Tape tape;
        ForwardContext ctx{tape};
        const ForwardOutput out = layer.forward(ctx, tape.constant(in.x), "probe");
        const ad::GradientMap grads = tape.backward(ad::mse_loss(out.y, in.target));

        double p2 = 0.0;
        for (std::size_t t = 0; t < g.n_experts; ++t) {
            const double n = frobenius_norm(grads.at("probe.p." + std::to_string(t)));
            p2 += n * n;
        }
        rows.push_back({beta, std::sqrt(p2), frobenius_norm(grads.at("probe.s_a"))});
    }
    return rows;
}

}  // namespace malk
