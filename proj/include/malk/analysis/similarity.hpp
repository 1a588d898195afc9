// Copyright 2026 The malk Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "malk/linalg/matrix.hpp"
#include "malk/moe/moe_layer.hpp"

namespace malk {

/// Mean canonical correlation between the row spaces of x (r1 x n) and
/// y (r2 x n): the mean singular value of Qx Qy^T for orthonormal row bases.
/// Result is clamped to [0, 1]. Throws RankDeficient if either argument is
/// not full row rank.
double cca_similarity(const Matrix& x, const Matrix& y);

enum class Family { A, B };
std::string family_name(Family f);

struct PairScore {
    std::size_t site = 0;
    Family family = Family::A;
    std::size_t i = 0;
    std::size_t j = 0;
    double score = 0.0;
};

struct SimilarityReport {
    std::vector<PairScore> pairs;
    double mean_a = 0.0;
    double mean_b = 0.0;
    double spread_a = 0.0;  // population standard deviation
    double spread_b = 0.0;
};

/// Pairwise CCA between the experts of every site: A side compares the
/// effective down projections (rank x in), B side the transposed up
/// projections (rank x out).
SimilarityReport expert_similarity(std::span<const MoeLayer* const> sites);

struct SpectrumReport {
    std::vector<double> sigma;  // descending
    double threshold = 0.0;
    double fraction_above = 0.0;
};

/// Thin SVD of the row concatenation. The threshold defaults to the mean
/// singular value; fraction_above counts values strictly above it. Throws
/// ShapeError on mismatched column counts.
SpectrumReport concat_spectrum(std::span<const Matrix> mats, std::optional<double> threshold = {});

/// Homologous expert matrices of one site: family A stacks down(t), family B
/// stacks up(t)^T.
std::vector<Matrix> homologous(const MoeLayer& layer, Family family);

}  // namespace malk
