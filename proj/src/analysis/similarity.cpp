// Copyright 2026 The malk Authors
// SPDX-License-Identifier: Apache-2.0
//

#include "malk/analysis/similarity.hpp"

#include <algorithm>
#include <cmath>

#include "malk/errors.hpp"
#include "malk/linalg/decomposition.hpp"

namespace malk {

double cca_similarity(const Matrix& x, const Matrix& y) {
    if (x.cols() != y.cols()) {
        throw ShapeError("cca_similarity: " + x.shape() + " and " + y.shape() + " differ in columns");
    }
    const Matrix qx = orthonormal_basis(x);
    const Matrix qy = orthonormal_basis(y);
    const SvdResult s = svd_thin(matmul_nt(qx, qy));
    double sum = 0.0;
    for (double v : s.sigma) sum += std::min(v, 1.0);
    return std::clamp(sum / static_cast<double>(s.sigma.size()), 0.0, 1.0);
}

std::string family_name(Family f) { return f == Family::A ? "A" : "B"; }

std::vector<Matrix> homologous(const MoeLayer& layer, Family family) {
    std::vector<Matrix> out;
    for (std::size_t t = 0; t < layer.experts(); ++t) {
        out.push_back(family == Family::A ? layer.down(t) : transpose(layer.up(t)));
    }
    return out;
}

namespace {

void summarize(const std::vector<double>& v, double& mean, double& spread) {
    if (v.empty()) return;
    double s = 0.0;
    for (double x : v) s += x;
    mean = s / static_cast<double>(v.size());
    double q = 0.0;
    for (double x : v) q += (x - mean) * (x - mean);
    spread = std::sqrt(q / static_cast<double>(v.size()));
}

}  // namespace

SimilarityReport expert_similarity(std::span<const MoeLayer* const> sites) {
    SimilarityReport rep;
    std::vector<double> a, b;
    for (std::size_t s = 0; s < sites.size(); ++s) {
        for (Family f : {Family::A, Family::B}) {
            const std::vector<Matrix> mats = homologous(*sites[s], f);
            for (std::size_t i = 0; i < mats.size(); ++i) {
                for (std::size_t j = i + 1; j < mats.size(); ++j) {
                    const double score = cca_similarity(mats[i], mats[j]);
                    rep.pairs.push_back({s, f, i, j, score});
                    (f == Family::A ? a : b).push_back(score);
                }
            }
        }
    }
    summarize(a, rep.mean_a, rep.spread_a);
    summarize(b, rep.mean_b, rep.spread_b);
    return rep;
}

SpectrumReport concat_spectrum(std::span<const Matrix> mats, std::optional<double> threshold) {
    if (mats.empty()) throw InvalidInput("concat_spectrum: no matrices");
    const Matrix stacked = concat_rows(mats);
    SpectrumReport rep;
    rep.sigma = svd_thin(stacked).sigma;
    double mean = 0.0;
    for (double s : rep.sigma) mean += s;
    mean /= static_cast<double>(rep.sigma.size());
    rep.threshold = threshold.value_or(mean);
    const auto above = std::count_if(rep.sigma.begin(), rep.sigma.end(),
                                     [&](double s) { return s > rep.threshold; });
    rep.fraction_above = static_cast<double>(above) / static_cast<double>(rep.sigma.size());
    return rep;
}

}  // namespace malk
