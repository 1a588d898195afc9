// Copyright 2026 The malk Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <iosfwd>
#include <vector>

#include <json.hpp>

#include "malk/analysis/probe.hpp"
#include "malk/analysis/similarity.hpp"

namespace malk {

struct SiteSpectrum {
    std::size_t site = 0;
    Family family = Family::A;
    SpectrumReport report;
};

/// site,family,i,j,score
void write_similarity_csv(std::ostream& os, const SimilarityReport& r);
nlohmann::json similarity_json(const SimilarityReport& r);

/// site,family,index,sigma,above_threshold
void write_spectrum_csv(std::ostream& os, const std::vector<SiteSpectrum>& s);
nlohmann::json spectrum_json(const std::vector<SiteSpectrum>& s);

/// beta,grad_p,grad_s_a
void write_probe_csv(std::ostream& os, const std::vector<BetaProbeRow>& rows);
nlohmann::json probe_json(const std::vector<BetaProbeRow>& rows);

}  // namespace malk
