// Copyright 2026 The malk Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "malk/harness/model.hpp"
#include "malk/harness/tasks.hpp"
#include "malk/harness/train.hpp"
#include "malk/moe/budget.hpp"

namespace malk {

struct TaskEntry {
    std::string id;
    TaskKind kind = TaskKind::Regression;
    std::size_t samples = 1000;
    std::size_t val_samples = 250;
    std::uint64_t seed = 0;
    double weight = 1.0;
};

struct BudgetSection {
    // Either the llama preset name or empty for explicit `sites`.
    std::string preset;
    std::vector<SiteDims> sites;
    std::uint64_t base_params = 0;
    bool include_router = true;
};

/// A parsed run configuration. Every section has defaults; unknown keys are
/// rejected at every level.
struct RunConfig {
    TrainConfig train;  // train.model carries method, backbone and geometry
    std::optional<double> lambda;
    FamilyOptions family;
    std::uint64_t family_seed = 0;
    std::vector<TaskEntry> tasks;
    std::size_t mix_length = 0;
    std::uint64_t mix_seed = 0;
    BenchConfig bench;
    BudgetSection budget;
    std::string checkpoint_path = "model.malk";
    std::string metrics_path = "metrics.csv";
};

/// Parses JSON text. Syntax errors report line and column; semantic errors
/// name the offending key. Throws ConfigError.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::string& path);

/// Full echo of the configuration with every key present. Parsing the echo
/// gives back the same configuration.
nlohmann::json to_json(const RunConfig& cfg);
RunConfig from_json(const nlohmann::json& j);

/// Applies the MALK_SEED environment override to every seed it governs
/// (training and bench). No-op when unset; ConfigError when malformed.
void apply_seed_override(RunConfig& cfg);

/// Task specs and validation sets as generated from the config.
std::vector<TaskSpec> task_specs(const RunConfig& cfg);
MultitaskDataset build_dataset(const RunConfig& cfg);
std::vector<TaskData> build_validation(const RunConfig& cfg);

}  // namespace malk
