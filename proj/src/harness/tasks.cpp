// Copyright 2026 The malk Authors
// SPDX-License-Identifier: Apache-2.0
//

#include "malk/harness/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "malk/errors.hpp"
#include "malk/linalg/decomposition.hpp"
#include "malk/linalg/random.hpp"

namespace malk {
namespace {

constexpr std::uint64_t kBackboneStream = 1;
constexpr std::uint64_t kSubspaceStream = 2;
constexpr std::uint64_t kTaskStream = 3;
constexpr std::uint64_t kSampleStream = 4;

// k x dim with orthonormal rows.
Matrix random_orthonormal_rows(std::size_t k, std::size_t dim, Rng& rng) {
    return orthonormal_basis(uniform_matrix(k, dim, -1.0, 1.0, rng));
}

void check_backbone(const Backbone& bb) {
    if (bb.sites.empty()) throw ConfigError("backbone needs at least one site");
    for (std::size_t i = 0; i < bb.sites.size(); ++i) {
        if (bb.sites[i].in == 0 || bb.sites[i].out == 0) throw ConfigError("site dimensions must be positive");
        if (i > 0 && bb.sites[i - 1].out != bb.sites[i].in) {
            throw ConfigError("site " + std::to_string(i) + " input " + std::to_string(bb.sites[i].in) +
                              " does not match previous output " + std::to_string(bb.sites[i - 1].out));
        }
    }
}

Matrix relu(Matrix m) {
    for (double& v : m.values()) v = v > 0.0 ? v : 0.0;
    return m;
}

}  // namespace

std::string task_kind_name(TaskKind k) {
    return k == TaskKind::Regression ? "regression" : "classification";
}

TaskKind parse_task_kind(const std::string& s) {
    if (s == "regression") return TaskKind::Regression;
    if (s == "classification") return TaskKind::Classification;
    throw ConfigError("unknown task kind '" + s + "' (expected regression or classification)");
}

std::vector<Matrix> family_backbone(const Backbone& bb, std::uint64_t family) {
    check_backbone(bb);
    Rng rng(Rng::derive(family, kBackboneStream));
    std::vector<Matrix> out;
    for (const SiteDims& s : bb.sites) {
        const double b = 1.0 / std::sqrt(static_cast<double>(s.in));
        out.push_back(uniform_matrix(s.out, s.in, -b, b, rng));
    }
    return out;
}

TaskData generate_task(const TaskSpec& spec, const Backbone& bb, const FamilyOptions& fo,
                       std::uint64_t split) {
    check_backbone(bb);
    if (spec.in_dim != bb.sites.front().in || spec.out_dim != bb.sites.back().out) {
        throw ConfigError("task '" + spec.id + "' dims " + std::to_string(spec.in_dim) + " -> " +
                          std::to_string(spec.out_dim) + " do not match the model");
    }
    if (spec.samples == 0) throw ConfigError("task '" + spec.id + "' needs at least one sample");
    if (fo.task_rank == 0 || fo.task_rank > fo.shared_rank) {
        throw ConfigError("family: task_rank must be in [1, shared_rank]");
    }

    std::vector<Matrix> weights = family_backbone(bb, spec.family);
    Rng shared(Rng::derive(spec.family, kSubspaceStream));
    Rng task(Rng::derive(spec.seed, kTaskStream));
    for (std::size_t i = 0; i < bb.sites.size(); ++i) {
        const SiteDims& s = bb.sites[i];
        if (fo.shared_rank > std::min(s.in, s.out)) {
            throw ConfigError("family: shared_rank exceeds a site dimension");
        }
        const Matrix u = slice_rows(random_orthonormal_rows(fo.shared_rank, s.in, shared), 0, fo.task_rank);
        Matrix v = random_orthonormal_rows(fo.task_rank, s.out, task);
        for (std::size_t r = 0; r < fo.task_rank; ++r) {
            const double c = fo.strength * task.uniform(0.5, 1.0);
            for (double& e : v.row(r)) e *= c;
        }
        weights[i] = add(weights[i], matmul_tn(v, u));
    }
    std::vector<double> mean(spec.in_dim);
    double norm = 0.0;
    for (double& m : mean) {
        m = task.uniform(-1.0, 1.0);
        norm += m * m;
    }
    norm = std::sqrt(norm);
    for (double& m : mean) m *= fo.mean_shift / norm;

    TaskData data;
    data.spec = spec;
    Rng rng(Rng::derive(spec.seed, kSampleStream + split));
    const double half = std::sqrt(3.0);
    data.x = uniform_matrix(spec.samples, spec.in_dim, -half, half, rng);
    for (std::size_t r = 0; r < spec.samples; ++r)
        for (std::size_t c = 0; c < spec.in_dim; ++c) data.x(r, c) += mean[c];

    Matrix h = data.x;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        h = matmul_nt(h, weights[i]);
        if (bb.relu && i + 1 < weights.size()) h = relu(std::move(h));
    }
    if (spec.kind == TaskKind::Regression) {
        if (fo.noise > 0.0) {
            for (double& v : h.values()) v += fo.noise * rng.uniform(-half, half);
        }
        data.y = std::move(h);
    } else {
        for (std::size_t r = 0; r < h.rows(); ++r) {
            const auto row = h.row(r);
            data.labels.push_back(static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin()));
        }
    }
    return data;
}

MultitaskDataset make_multitask(std::vector<TaskData> tasks, const std::vector<double>& mix_weights,
                                std::size_t length, std::uint64_t seed) {
    if (tasks.empty()) throw ConfigError("make_multitask: no tasks");
    if (mix_weights.size() != tasks.size()) {
        throw ConfigError("make_multitask: " + std::to_string(mix_weights.size()) + " mix weights for " +
                          std::to_string(tasks.size()) + " tasks");
    }
    double total = 0.0;
    for (double w : mix_weights) {
        if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("make_multitask: weights must be non-negative");
        total += w;
    }
    if (!(total > 0.0)) throw ConfigError("make_multitask: weights sum to zero");
    for (const TaskData& t : tasks) {
        if (t.spec.in_dim != tasks[0].spec.in_dim || t.spec.out_dim != tasks[0].spec.out_dim) {
            throw ConfigError("make_multitask: task '" + t.spec.id + "' dims differ from '" +
                              tasks[0].spec.id + "'");
        }
    }

    MultitaskDataset ds;
    for (double w : mix_weights) ds.weights.push_back(w / total);
    if (length == 0)
        for (const TaskData& t : tasks) length += t.spec.samples;

    const std::size_t n = tasks.size();
    std::vector<std::vector<std::size_t>> order(n);
    std::vector<std::size_t> cursor(n, 0);
    std::vector<Rng> shuffles;
    for (std::size_t t = 0; t < n; ++t) shuffles.emplace_back(Rng::derive(seed, 100 + t));
    auto reshuffle = [&](std::size_t t) {
        auto& o = order[t];
        o.resize(tasks[t].spec.samples);
        std::iota(o.begin(), o.end(), std::size_t{0});
        for (std::size_t i = o.size(); i > 1; --i) std::swap(o[i - 1], o[shuffles[t].below(i)]);
        cursor[t] = 0;
    };
    for (std::size_t t = 0; t < n; ++t) reshuffle(t);

    std::vector<double> credit(n, 0.0);
    ds.stream.reserve(length);
    for (std::size_t k = 0; k < length; ++k) {
        std::size_t best = 0;
        for (std::size_t t = 0; t < n; ++t) {
            credit[t] += ds.weights[t];
            if (credit[t] > credit[best]) best = t;
        }
        credit[best] -= 1.0;
        if (cursor[best] == order[best].size()) reshuffle(best);
        ds.stream.push_back({best, order[best][cursor[best]++]});
    }
    ds.tasks = std::move(tasks);
    return ds;
}

}  // namespace malk
