// Copyright 2026 The malk Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "malk/linalg/matrix.hpp"
#include "malk/moe/budget.hpp"

namespace malk {

enum class TaskKind { Regression, Classification };

std::string task_kind_name(TaskKind k);
/// "regression" | "classification"; throws ConfigError otherwise.
TaskKind parse_task_kind(const std::string& s);

/// One synthetic task. Tasks that share `family` share the frozen backbone
/// and the input subspace their perturbations read from.
struct TaskSpec {
    std::string id;
    TaskKind kind = TaskKind::Regression;
    std::size_t in_dim = 0;
    std::size_t out_dim = 0;
    std::size_t samples = 0;
    std::uint64_t seed = 0;
    std::uint64_t family = 0;
};

/// Shape of the teacher and student networks: a chain of linear sites with
/// an optional ReLU between consecutive sites.
struct Backbone {
    std::vector<SiteDims> sites;
    bool relu = false;
};

struct FamilyOptions {
    // Rank of the shared input subspace every task perturbation reads from.
    std::size_t shared_rank = 4;
    // Rank of each task's perturbation (at most shared_rank).
    std::size_t task_rank = 4;
    // Spectral scale of each task's perturbation.
    double strength = 1.0;
    // Norm of the per-task input mean shift (makes tasks routable).
    double mean_shift = 2.0;
    // Noise added to regression targets.
    double noise = 0.0;
};

/// Frozen backbone weights for a family: W_i uniform with bound
/// 1 / sqrt(in_i), drawn from the family seed.
std::vector<Matrix> family_backbone(const Backbone& bb, std::uint64_t family);

struct TaskData {
    TaskSpec spec;
    Matrix x;                         // samples x in_dim
    Matrix y;                         // regression targets (samples x out_dim)
    std::vector<std::size_t> labels;  // classification targets
};

/// Teacher for a task: the backbone with W_i + V_i C_i U_i^T at each site,
/// where U_i (in x shared_rank, orthonormal) comes from the family seed and
/// V_i, C_i from the task seed. Inputs are unit-variance uniform noise plus a
/// task-specific mean. `split` selects an independent sample stream (0 for
/// training, 1 for validation) from the same task. Classification labels are
/// the argmax of the teacher output. Throws ConfigError if the spec does not
/// match the backbone.
TaskData generate_task(const TaskSpec& spec, const Backbone& bb, const FamilyOptions& fo,
                       std::uint64_t split = 0);

struct StreamEntry {
    std::size_t task = 0;
    std::size_t index = 0;
};

struct MultitaskDataset {
    std::vector<TaskData> tasks;
    std::vector<double> weights;  // normalised mix proportions
    std::vector<StreamEntry> stream;
};

/// Interleaves tasks by smooth weighted round robin: at every draw each task
/// earns its weight in credit and the task with the most credit (lowest index
/// on ties) is drawn and pays 1. Equal weights alternate; over T draws each
/// task appears within one of weight * T times. Each task walks through its
/// own seeded permutation, reshuffled per pass. `length` defaults to the total
/// sample count. Throws ConfigError on mismatched dimensions or weights.
MultitaskDataset make_multitask(std::vector<TaskData> tasks, const std::vector<double>& mix_weights,
                                std::size_t length = 0, std::uint64_t seed = 0);

}  // namespace malk
