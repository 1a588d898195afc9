// Copyright 2026 The malk Authors
// SPDX-License-Identifier: Apache-2.0
//

#include "malk/harness/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <iomanip>
#include <memory>
#include <ostream>

#include "malk/errors.hpp"
#include "malk/linalg/random.hpp"

namespace malk {
namespace {

// CPU time of the calling thread. Steps are single-threaded, so this is the
// step latency without the time the thread spent descheduled, which on a
// shared host dominates the run-to-run spread of wall-clock medians.
struct Clock {
    using time_point = std::chrono::duration<double>;
    static time_point now() {
        timespec ts{};
        clock_gettime(CLOCK_THREAD_CPUTIME_ID, &ts);
        return time_point(static_cast<double>(ts.tv_sec) + static_cast<double>(ts.tv_nsec) * 1e-9);
    }
};

double seconds_since(Clock::time_point t0) {
    return (Clock::now() - t0).count();
}

void require(bool ok, const std::string& what) {
    if (!ok) throw ConfigError("train config: " + what);
}

Matrix select_rows(const Matrix& m, std::span<const std::size_t> rows) {
    Matrix out(rows.size(), m.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto src = m.row(rows[i]);
        std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    return out;
}

std::size_t argmax(std::span<const double> v) {
    return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

void check_dims(const Model& model, const TaskData& t) {
    const std::size_t in = model.site(0).in_dim();
    const std::size_t out = model.site(model.sites() - 1).out_dim();
    if (t.x.cols() != in || t.spec.out_dim != out) {
        throw ShapeError("task '" + t.spec.id + "' is " + std::to_string(t.x.cols()) + " -> " +
                         std::to_string(t.spec.out_dim) + ", model is " + std::to_string(in) + " -> " +
                         std::to_string(out));
    }
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

void validate(const TrainConfig& cfg) {
    require(std::isfinite(cfg.lr) && cfg.lr >= 0.0, "lr must be finite and >= 0");
    require(cfg.batch_size >= 1, "batch_size must be >= 1");
    require(cfg.steps > 0 || cfg.epochs > 0, "need epochs >= 1 or steps >= 1");
    require(cfg.warmup_ratio >= 0.0 && cfg.warmup_ratio <= 1.0, "warmup_ratio must be in [0, 1]");
    require(std::isfinite(cfg.weight_decay) && cfg.weight_decay >= 0.0, "weight_decay must be >= 0");
    require(std::isfinite(cfg.balance_factor) && cfg.balance_factor >= 0.0, "balance_factor must be >= 0");
    require(std::isfinite(cfg.grad_clip) && cfg.grad_clip >= 0.0, "grad_clip must be >= 0");
    require(cfg.log_every >= 1, "log_every must be >= 1");
    require(cfg.model.dropout >= 0.0 && cfg.model.dropout < 1.0, "dropout must be in [0, 1)");
    require(std::isfinite(cfg.model.beta) && cfg.model.beta > 0.0, "beta must be > 0");
    require(std::isfinite(cfg.model.alpha) && cfg.model.alpha >= 0.0, "alpha must be >= 0");
    require(!cfg.model.backbone.sites.empty(), "backbone needs at least one site");
}

std::size_t total_steps(const TrainConfig& cfg, std::size_t stream_len) {
    if (cfg.steps > 0) return cfg.steps;
    return cfg.epochs * ((stream_len + cfg.batch_size - 1) / cfg.batch_size);
}

std::string MetricsHistory::csv_header() const {
    std::string h = "step,lr,total_loss,task_loss,balance_loss";
    if (has_validation)
        for (const auto& id : task_ids) h += ",val_loss." + id;
    h += ",router_entropy";
    for (std::size_t e = 0; e < n_experts; ++e) h += ",load." + std::to_string(e);
    if (timing) h += ",forward_s,backward_s,optimize_s";
    return h;
}

void MetricsHistory::write_csv(std::ostream& os) const {
    os << csv_header() << '\n';
    os << std::setprecision(17);
    for (const MetricsRow& r : rows) {
        os << r.step << ',' << r.lr << ',' << r.total_loss << ',' << r.task_loss << ',' << r.balance_loss;
        for (double v : r.val_loss) os << ',' << v;
        os << ',' << r.router_entropy;
        for (double v : r.expert_load) os << ',' << v;
        if (timing) os << ',' << r.forward_s << ',' << r.backward_s << ',' << r.optimize_s;
        os << '\n';
    }
}

ad::Var task_loss(ad::Var y, const TaskData& task, std::span<const std::size_t> rows) {
    if (task.spec.kind == TaskKind::Regression) return ad::mse_loss(y, select_rows(task.y, rows));
    std::vector<std::size_t> labels;
    labels.reserve(rows.size());
    for (std::size_t k : rows) labels.push_back(task.labels.at(k));
    return ad::softmax_cross_entropy(y, labels);
}

TrainResult train(const TrainConfig& cfg, std::vector<Matrix> base, const MultitaskDataset& data,
                  const std::vector<TaskData>* validation) {
    validate(cfg);
    if (data.stream.empty()) throw ConfigError("train: empty dataset stream");

    TrainResult res;
    res.model = std::make_unique<Model>(cfg.model, std::move(base), cfg.seed);
    Model& model = *res.model;
    for (const TaskData& t : data.tasks) check_dims(model, t);
    if (validation) {
        if (validation->size() != data.tasks.size())
            throw ConfigError("train: validation set must have one entry per task");
        for (const TaskData& t : *validation) check_dims(model, t);
    }

    MetricsHistory& hist = res.history;
    for (const TaskData& t : data.tasks) hist.task_ids.push_back(t.spec.id);
    hist.n_experts = is_moe(cfg.model.method) ? cfg.model.n_experts : 0;
    hist.has_validation = validation != nullptr;
    hist.timing = cfg.record_timing;

    const std::size_t total = total_steps(cfg, data.stream.size());
    const auto warmup = static_cast<std::size_t>(std::ceil(cfg.warmup_ratio * static_cast<double>(total)));
    const std::size_t in_dim = model.site(0).in_dim();
    const std::size_t batch = cfg.batch_size;

    AdamW opt(AdamwConfig{0.9, 0.999, 1e-8, cfg.weight_decay});
    Rng dropout_rng(Rng::derive(cfg.seed, 0x64726f70));
    const std::vector<ad::ParamRef> params = model.params();

    for (std::size_t step = 0; step < total; ++step) {
        const double lr = scheduled_lr(cfg.lr, step, warmup, total);

        Matrix x(batch, in_dim);
        std::vector<std::vector<std::size_t>> pos(data.tasks.size());   // batch rows per task
        std::vector<std::vector<std::size_t>> src(data.tasks.size());   // sample index per task
        for (std::size_t i = 0; i < batch; ++i) {
            const StreamEntry& e = data.stream[(step * batch + i) % data.stream.size()];
            const auto row = data.tasks[e.task].x.row(e.index);
            std::copy(row.begin(), row.end(), x.row(i).begin());
            pos[e.task].push_back(i);
            src[e.task].push_back(e.index);
        }

        const auto t0 = Clock::now();
        ad::Tape tape;
        ForwardContext ctx{tape, true, &dropout_rng};
        ModelOutput out = model.forward(ctx, x);

        std::optional<ad::Var> loss_task;
        for (std::size_t t = 0; t < data.tasks.size(); ++t) {
            if (pos[t].empty()) continue;
            const TaskData& td = data.tasks[t];
            const ad::Var sel = ad::gather_rows(out.y, pos[t]);
            const double share = static_cast<double>(pos[t].size()) / static_cast<double>(batch);
            const ad::Var l = ad::scale(task_loss(sel, td, src[t]), share);
            loss_task = loss_task ? ad::add(*loss_task, l) : l;
        }
        ad::Var loss = *loss_task;
        double balance_value = 0.0;
        if (!out.routes.empty() && cfg.balance_factor > 0.0) {
            for (const RouteResult& r : out.routes) loss = ad::add(loss, balance_loss(r, cfg.balance_factor));
        }
        for (const RouteResult& r : out.routes) balance_value += balance_loss_value(r.stats, cfg.balance_factor);
        const double total_value = loss.value()(0, 0);
        const double task_value = loss_task->value()(0, 0);
        if (!std::isfinite(total_value)) throw DivergedError("non-finite training loss", step);
        const double fwd = seconds_since(t0);

        const auto t1 = Clock::now();
        ad::GradientMap grads = tape.backward(loss);
        const double bwd = seconds_since(t1);

        const auto t2 = Clock::now();
        if (cfg.grad_clip > 0.0) clip_grad_norm(grads, cfg.grad_clip);
        opt.step(params, grads, lr);
        const double optim = seconds_since(t2);

        if ((step + 1) % cfg.log_every == 0 || step + 1 == total) {
            MetricsRow row;
            row.step = step + 1;
            row.lr = lr;
            row.total_loss = total_value;
            row.task_loss = task_value;
            row.balance_loss = balance_value;
            if (validation) {
                for (const TaskMetrics& m : evaluate(model, *validation)) row.val_loss.push_back(m.loss);
            }
            if (hist.n_experts > 0) {
                row.expert_load.assign(hist.n_experts, 0.0);
                for (const RouteResult& r : out.routes) {
                    row.router_entropy += r.stats.entropy;
                    for (std::size_t e = 0; e < hist.n_experts; ++e) row.expert_load[e] += r.stats.fraction[e];
                }
                const double s = static_cast<double>(out.routes.size());
                row.router_entropy /= s;
                for (double& v : row.expert_load) v /= s;
            }
            row.forward_s = fwd;
            row.backward_s = bwd;
            row.optimize_s = optim;
            hist.rows.push_back(std::move(row));
        }
    }
    return res;
}

TrainResult train(const TrainConfig& cfg, const MultitaskDataset& data, const std::vector<TaskData>* validation) {
    if (data.tasks.empty()) throw ConfigError("train: dataset has no tasks");
    return train(cfg, family_backbone(cfg.model.backbone, data.tasks.front().spec.family), data, validation);
}

std::vector<TaskMetrics> evaluate(Model& model, const std::vector<TaskData>& tasks) {
    constexpr std::size_t kChunk = 256;
    std::vector<TaskMetrics> out;
    for (const TaskData& t : tasks) {
        check_dims(model, t);
        const std::size_t n = t.x.rows();
        if (t.spec.kind == TaskKind::Regression && (t.y.rows() != n || t.y.cols() != t.spec.out_dim))
            throw ShapeError("task '" + t.spec.id + "': target shape " + t.y.shape());
        TaskMetrics m;
        m.id = t.spec.id;
        double loss_sum = 0.0;
        std::size_t correct = 0;
        for (std::size_t begin = 0; begin < n; begin += kChunk) {
            const std::size_t end = std::min(n, begin + kChunk);
            std::vector<std::size_t> rows(end - begin);
            for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = begin + i;
            ad::Tape tape;
            ForwardContext ctx{tape, false, nullptr};
            const ModelOutput o = model.forward(ctx, select_rows(t.x, rows));
            const double l = task_loss(o.y, t, rows).value()(0, 0);
            if (t.spec.kind == TaskKind::Classification) {
                for (std::size_t i = 0; i < rows.size(); ++i)
                    if (argmax(o.y.value().row(i)) == t.labels[rows[i]]) ++correct;
            }
            loss_sum += l * static_cast<double>(rows.size());
        }
        m.loss = n > 0 ? loss_sum / static_cast<double>(n) : 0.0;
        if (t.spec.kind == TaskKind::Classification)
            m.accuracy = n > 0 ? static_cast<double>(correct) / static_cast<double>(n) : 0.0;
        out.push_back(std::move(m));
    }
    return out;
}

std::vector<BenchRow> bench_step(const BenchConfig& cfg) {
    if (cfg.reps < 10) throw ConfigError("bench: reps must be >= 10, got " + std::to_string(cfg.reps));
    if (cfg.in_dim == 0 || cfg.out_dim == 0 || cfg.batch == 0) throw ConfigError("bench: dims must be positive");

    Rng data_rng(Rng::derive(cfg.seed, 0x62656e6368));
    const double bound = 1.0 / std::sqrt(static_cast<double>(cfg.in_dim));
    const Matrix base = uniform_matrix(cfg.out_dim, cfg.in_dim, -bound, bound, data_rng);
    const Matrix x = uniform_matrix(cfg.batch, cfg.in_dim, -std::sqrt(3.0), std::sqrt(3.0), data_rng);
    const Matrix target = normal_matrix(cfg.batch, cfg.out_dim, 1.0, data_rng);
    const std::vector<SiteDims> sites{{cfg.out_dim, cfg.in_dim}};

    // Methods are stepped round-robin within each repetition so that drift in
    // host speed lands on every method alike.
    struct Runner {
        ModelSpec spec;
        std::unique_ptr<Model> model;
        std::vector<ad::ParamRef> params;
        AdamW opt;
        std::vector<double> fwd, bwd, optim, tot;
    };
    std::vector<Runner> runners;
    for (Method method : cfg.methods) {
        Runner r;
        r.spec = cfg.model;
        r.spec.method = method;
        r.spec.backbone = Backbone{sites, false};
        r.spec.dropout = 0.0;
        r.model = std::make_unique<Model>(r.spec, std::vector<Matrix>{base}, cfg.seed);
        r.params = r.model->params();
        runners.push_back(std::move(r));
    }

    for (std::size_t rep = 0; rep < cfg.warmup + cfg.reps; ++rep) {
        for (Runner& r : runners) {
            // The untimed step brings this method's weights back into cache
            // after the other methods ran.
            for (int pass = 0; pass < 2; ++pass) {
                const auto t0 = Clock::now();
                ad::Tape tape;
                ForwardContext ctx{tape, true, nullptr};
                ModelOutput out = r.model->forward(ctx, x);
                ad::Var loss = ad::mse_loss(out.y, target);
                for (const RouteResult& route : out.routes) loss = ad::add(loss, balance_loss(route, 0.001));
                const auto t1 = Clock::now();
                ad::GradientMap grads = tape.backward(loss);
                const auto t2 = Clock::now();
                r.opt.step(r.params, grads, 1e-5);
                const auto t3 = Clock::now();
                if (pass == 0 || rep < cfg.warmup) continue;
                r.fwd.push_back((t1 - t0).count());
                r.bwd.push_back((t2 - t1).count());
                r.optim.push_back((t3 - t2).count());
                r.tot.push_back((t3 - t0).count());
            }
        }
    }

    std::vector<BenchRow> rows;
    for (Runner& r : runners) {
        BenchRow row;
        row.method = r.spec.method;
        row.forward_s = median(r.fwd);
        row.backward_s = median(r.bwd);
        row.optimize_s = median(r.optim);
        row.total_s = median(r.tot);
        BudgetConfig bc;
        bc.rank = r.spec.rank;
        bc.n_experts = r.spec.n_experts;
        bc.top_k = r.spec.top_k;
        bc.d = r.spec.d;
        bc.r_bar = r.spec.r_bar;
        bc.flags = r.spec.flags;
        row.flops = flop_budget(r.spec.method, sites, bc, cfg.batch);
        row.trainable = trainable_count(*r.model);
        rows.push_back(row);
    }
    return rows;
}

void write_bench_csv(std::ostream& os, const std::vector<BenchRow>& rows) {
    os << "method,forward_s,backward_s,optimize_s,total_s,adapter_flops,router_flops,base_flops,trainable\n";
    os << std::setprecision(6);
    for (const BenchRow& r : rows) {
        os << method_name(r.method) << ',' << r.forward_s << ',' << r.backward_s << ',' << r.optimize_s << ','
           << r.total_s << ',' << r.flops.adapter << ',' << r.flops.router << ',' << r.flops.base << ','
           << r.trainable << '\n';
    }
}

}  // namespace malk
