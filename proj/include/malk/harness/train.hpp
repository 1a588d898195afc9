// Copyright 2026 The malk Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "malk/harness/model.hpp"
#include "malk/harness/optim.hpp"
#include "malk/harness/tasks.hpp"
#include "malk/moe/budget.hpp"

namespace malk {

struct TrainConfig {
    ModelSpec model;
    double lr = 2e-4;
    std::size_t batch_size = 16;
    std::size_t epochs = 1;
    // When nonzero, overrides epochs.
    std::size_t steps = 0;
    double warmup_ratio = 0.1;
    double weight_decay = 0.01;
    double balance_factor = 0.001;
    // Global gradient-norm bound; 0 disables clipping.
    double grad_clip = 0.0;
    // Seeds adapter initialisation and the dropout stream.
    std::uint64_t seed = 0;
    // A metrics row (with validation) every log_every steps and at the end.
    std::size_t log_every = 10;
    // Adds forward/backward/optimize thread CPU time columns to the metrics.
    bool record_timing = false;
};

/// Throws ConfigError on non-finite or out-of-range hyperparameters.
void validate(const TrainConfig& cfg);

/// Optimizer steps implied by the config for a stream of `stream_len` rows.
std::size_t total_steps(const TrainConfig& cfg, std::size_t stream_len);

struct MetricsRow {
    std::size_t step = 0;  // optimizer steps completed
    double lr = 0.0;
    double total_loss = 0.0;
    double task_loss = 0.0;
    double balance_loss = 0.0;
    std::vector<double> val_loss;     // per task, empty without validation data
    double router_entropy = 0.0;      // mean over mixture sites
    std::vector<double> expert_load;  // mean routed fraction per expert
    double forward_s = 0.0;
    double backward_s = 0.0;
    double optimize_s = 0.0;
};

struct MetricsHistory {
    std::vector<std::string> task_ids;
    std::size_t n_experts = 0;  // 0 for single-expert methods
    bool has_validation = false;
    bool timing = false;
    std::vector<MetricsRow> rows;

    /// Fixed header: step,lr,total_loss,task_loss,balance_loss,
    /// val_loss.<task>...,router_entropy,load.<e>...[,forward_s,backward_s,optimize_s]
    std::string csv_header() const;
    void write_csv(std::ostream& os) const;
};

struct TrainResult {
    std::unique_ptr<Model> model;
    MetricsHistory history;
};

/// Trains a fresh model over the dataset stream, consuming batch_size rows
/// per step and wrapping around. The batch loss is sum_t (rows_t / batch) *
/// loss_t with MSE for regression and cross-entropy for classification, plus
/// the balance penalty at every mixture site. Throws DivergedError on a
/// non-finite loss.
TrainResult train(const TrainConfig& cfg, std::vector<Matrix> base, const MultitaskDataset& data,
                  const std::vector<TaskData>* validation = nullptr);

/// Same, with base weights regenerated from the first task's family seed.
TrainResult train(const TrainConfig& cfg, const MultitaskDataset& data,
                  const std::vector<TaskData>* validation = nullptr);

struct TaskMetrics {
    std::string id;
    double loss = 0.0;
    std::optional<double> accuracy;  // classification only
};

/// Mean loss (and accuracy) per task in inference mode. Does not modify the
/// model. Throws ShapeError on dimension mismatch.
std::vector<TaskMetrics> evaluate(Model& model, const std::vector<TaskData>& tasks);

/// Loss of a task from a model output, on the tape.
ad::Var task_loss(ad::Var y, const TaskData& task, std::span<const std::size_t> rows);

struct BenchConfig {
    std::vector<Method> methods{Method::Lora, Method::Molora, Method::Malora};
    std::size_t in_dim = 1024;
    std::size_t out_dim = 1024;
    std::size_t batch = 64;
    // Geometry shared by the methods; lora uses `rank`.
    ModelSpec model;
    std::size_t reps = 20;
    std::size_t warmup = 3;
    std::uint64_t seed = 0;
};

struct BenchRow {
    Method method = Method::Lora;
    double forward_s = 0.0;
    double backward_s = 0.0;
    double optimize_s = 0.0;
    double total_s = 0.0;  // median of per-repetition totals
    FlopCount flops;
    std::size_t trainable = 0;
};

/// Times one single-site training step per method, stepping the methods in
/// turn within each repetition: median thread CPU time of
/// each phase over `reps` repetitions after `warmup` discarded ones. Throws
/// ConfigError if reps < 10.
std::vector<BenchRow> bench_step(const BenchConfig& cfg);

/// Four-phase table as CSV: method,forward_s,backward_s,optimize_s,total_s,
/// adapter_flops,router_flops,base_flops,trainable.
void write_bench_csv(std::ostream& os, const std::vector<BenchRow>& rows);

}  // namespace malk
