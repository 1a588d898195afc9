// Copyright 2026 The malk Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstdint>
#include <vector>

#include "malk/linalg/matrix.hpp"
#include "malk/moe/geometry.hpp"

namespace malk {

struct BetaProbeRow {
    double beta = 0.0;
    double grad_p = 0.0;    // Frobenius norm over all P_t together
    double grad_s_a = 0.0;
};

struct BetaProbeInput {
    MaloraGeometry geometry;  // beta is overridden per row
    Matrix base_w;            // out x in
    Matrix x;                 // batch x in
    Matrix target;            // batch x out
    std::uint64_t seed = 0;
    double probe_scale = 0.01;
};

/// For each beta: rebuild the layer from the same seed (so P_t S_A and the
/// router are identical up to rounding), install one fixed set of up
/// matrices drawn uniformly from [-probe_scale, probe_scale], run one
/// forward/backward of the mean squared error, and record the gradient
/// norms. The up matrices cannot be zero here: at the true initialisation
/// both gradients vanish.
std::vector<BetaProbeRow> beta_grad_probe(const BetaProbeInput& in, const std::vector<double>& betas);

}  // namespace malk
