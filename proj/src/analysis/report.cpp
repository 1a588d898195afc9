// Copyright 2026 The malk Authors
// SPDX-License-Identifier: Apache-2.0
//

#include "malk/analysis/report.hpp"

#include <iomanip>
#include <ostream>

namespace malk {

void write_similarity_csv(std::ostream& os, const SimilarityReport& r) {
    os << "site,family,i,j,score\n" << std::setprecision(17);
    for (const PairScore& p : r.pairs)
        os << p.site << ',' << family_name(p.family) << ',' << p.i << ',' << p.j << ',' << p.score << '\n';
}

nlohmann::json similarity_json(const SimilarityReport& r) {
    return {{"pairs", r.pairs.size()},
            {"mean_a", r.mean_a},
            {"mean_b", r.mean_b},
            {"spread_a", r.spread_a},
            {"spread_b", r.spread_b},
            {"a_exceeds_b", r.mean_a > r.mean_b}};
}

void write_spectrum_csv(std::ostream& os, const std::vector<SiteSpectrum>& s) {
    os << "site,family,index,sigma,above_threshold\n" << std::setprecision(17);
    for (const SiteSpectrum& e : s) {
        for (std::size_t i = 0; i < e.report.sigma.size(); ++i) {
            os << e.site << ',' << family_name(e.family) << ',' << i << ',' << e.report.sigma[i] << ','
               << (e.report.sigma[i] > e.report.threshold ? 1 : 0) << '\n';
        }
    }
}

nlohmann::json spectrum_json(const std::vector<SiteSpectrum>& s) {
    nlohmann::json out = nlohmann::json::array();
    for (const SiteSpectrum& e : s) {
        out.push_back({{"site", e.site},
                       {"family", family_name(e.family)},
                       {"values", e.report.sigma.size()},
                       {"threshold", e.report.threshold},
                       {"fraction_above", e.report.fraction_above}});
    }
    return out;
}

void write_probe_csv(std::ostream& os, const std::vector<BetaProbeRow>& rows) {
    os << "beta,grad_p,grad_s_a\n" << std::setprecision(17);
    for (const BetaProbeRow& r : rows) os << r.beta << ',' << r.grad_p << ',' << r.grad_s_a << '\n';
}

nlohmann::json probe_json(const std::vector<BetaProbeRow>& rows) {
    nlohmann::json out = nlohmann::json::array();
    const double p1 = rows.empty() ? 0.0 : rows.front().grad_p;
    const double s1 = rows.empty() ? 0.0 : rows.front().grad_s_a;
    for (const BetaProbeRow& r : rows) {
        out.push_back({{"beta", r.beta},
                       {"grad_p", r.grad_p},
                       {"grad_s_a", r.grad_s_a},
                       {"grad_p_ratio", p1 > 0.0 ? r.grad_p / p1 : 0.0},
                       {"grad_s_a_ratio", s1 > 0.0 ? r.grad_s_a / s1 : 0.0}});
    }
    return out;
}

}  // namespace malk
