// Copyright 2026 The malk Authors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line driver: budget, train, analyze, bench, eval.

#include <CLI11.hpp>

#include <cstdio>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "malk/analysis/probe.hpp"
#include "malk/analysis/report.hpp"
#include "malk/analysis/similarity.hpp"
#include "malk/cli/checkpoint.hpp"
#include "malk/cli/config.hpp"
#include "malk/errors.hpp"
#include "malk/harness/train.hpp"
#include "malk/linalg/kernels.hpp"
#include "malk/linalg/random.hpp"
#include "malk/moe/budget.hpp"

namespace {

using namespace malk;

std::vector<SiteDims> budget_sites(const RunConfig& cfg) {
    return cfg.budget.preset.empty() ? cfg.budget.sites : llama2_7b_linear_sites();
}

BudgetConfig budget_config(const RunConfig& cfg, std::size_t rank) {
    const ModelSpec& m = cfg.train.model;
    BudgetConfig bc;
    bc.rank = rank;
    bc.n_experts = m.n_experts;
    bc.top_k = m.top_k;
    bc.d = m.d;
    bc.r_bar = m.r_bar;
    bc.flags = m.flags;
    bc.include_router = cfg.budget.include_router;
    bc.base_params = cfg.budget.base_params;
    if (bc.base_params == 0 && !cfg.budget.preset.empty()) bc.base_params = kLlama2BaseParams;
    return bc;
}

int cmd_budget(const std::string& path, const std::string& preset, std::size_t baseline_rank) {
    RunConfig cfg = load_run_config(path);
    if (!preset.empty()) {
        if (preset != kLlama2Preset) throw ConfigError("unknown dims preset '" + preset + "'");
        cfg.budget.preset = preset;
    }
    const std::vector<SiteDims> sites = budget_sites(cfg);
    const Method method = cfg.train.model.method;
    const Budget b = param_budget(method, sites, budget_config(cfg, cfg.train.model.rank));
    const std::size_t base_rank = baseline_rank ? baseline_rank : cfg.train.model.rank;
    const Budget mo = param_budget(Method::Molora, sites, budget_config(cfg, base_rank));

    std::cout << "sites " << sites.size() << "\n";
    std::cout << std::left << std::setw(16) << "method" << std::right << std::setw(16) << "trainable"
              << std::setw(14) << "frozen" << std::setw(12) << "router" << std::setw(12) << "% of base"
              << std::setw(14) << "vs molora" << "\n";
    auto row = [&](const std::string& name, const Budget& x) {
        const double ratio = mo.trainable ? static_cast<double>(x.trainable) / static_cast<double>(mo.trainable) : 0.0;
        std::cout << std::left << std::setw(16) << name << std::right << std::setw(16) << x.trainable << std::setw(14)
                  << x.frozen << std::setw(12) << x.router << std::setw(11) << std::fixed << std::setprecision(3)
                  << x.percent_of_base << "%" << std::setw(14) << std::setprecision(4) << ratio << "\n"
                  << std::defaultfloat;
    };
    row(std::string(method_name(method)), b);
    row("molora(r=" + std::to_string(base_rank) + ")", mo);
    const double reduction =
        mo.trainable ? 100.0 * (1.0 - static_cast<double>(b.trainable) / static_cast<double>(mo.trainable)) : 0.0;
    std::cout << "reduction vs molora: " << std::fixed << std::setprecision(2) << reduction << "%\n";
    return 0;
}

void write_text(const std::string& path, const std::string& text) { write_file_atomic(path, text); }

int cmd_train(const std::string& path) {
    RunConfig cfg = load_run_config(path);
    apply_seed_override(cfg);
    const MultitaskDataset data = build_dataset(cfg);
    const std::vector<TaskData> val = build_validation(cfg);
    TrainResult res = train(cfg.train, data, &val);

    std::ostringstream csv;
    res.history.write_csv(csv);
    const std::string ck = encode_checkpoint(snapshot(cfg, *res.model));
    write_text(cfg.metrics_path, csv.str());
    write_text(cfg.checkpoint_path, ck);

    const MetricsRow& last = res.history.rows.back();
    std::cout << "method " << method_name(cfg.train.model.method) << ", " << last.step << " steps, trainable "
              << trainable_count(*res.model) << "\n";
    std::cout << "final loss " << std::setprecision(6) << last.total_loss << "\n";
    for (std::size_t i = 0; i < last.val_loss.size(); ++i)
        std::cout << "val " << res.history.task_ids[i] << " " << last.val_loss[i] << "\n";
    std::cout << "wrote " << cfg.checkpoint_path << " and " << cfg.metrics_path << "\n";
    return 0;
}

std::vector<const MoeLayer*> moe_sites(Model& model) {
    if (!is_moe(model.spec().method)) {
        throw UnsupportedMethod("analysis needs a mixture checkpoint, got " +
                                std::string(method_name(model.spec().method)));
    }
    std::vector<const MoeLayer*> out;
    for (std::size_t i = 0; i < model.sites(); ++i) out.push_back(dynamic_cast<const MoeLayer*>(&model.site(i)));
    return out;
}

std::string join(const std::string& dir, const std::string& name) { return dir.empty() ? name : dir + "/" + name; }

std::vector<double> parse_betas(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(item, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != item.size() || !(v > 0.0)) throw ConfigError("--betas: bad value '" + item + "'");
        out.push_back(v);
    }
    if (out.empty()) throw ConfigError("--betas: empty list");
    return out;
}

int cmd_analyze(const std::string& what, const std::string& ck_path, const std::string& out_dir,
                const std::string& betas_arg, std::size_t site, double threshold) {
    auto [cfg, model] = restore(load_checkpoint(ck_path));
    const std::vector<const MoeLayer*> sites = moe_sites(*model);
    std::ostringstream csv;
    nlohmann::json js;

    if (what == "cca") {
        const SimilarityReport r = expert_similarity(sites);
        write_similarity_csv(csv, r);
        js = similarity_json(r);
        std::cout << "mean cca A " << r.mean_a << " (spread " << r.spread_a << "), B " << r.mean_b << " (spread "
                  << r.spread_b << ")\n";
    } else if (what == "spectrum") {
        std::vector<SiteSpectrum> specs;
        const std::optional<double> th = threshold > 0.0 ? std::optional<double>(threshold) : std::nullopt;
        for (std::size_t i = 0; i < sites.size(); ++i) {
            for (Family f : {Family::A, Family::B}) {
                const std::vector<Matrix> h = homologous(*sites[i], f);
                specs.push_back({i, f, concat_spectrum(h, th)});
                std::cout << "site" << i << " " << family_name(f) << ": " << specs.back().report.sigma.size()
                          << " values, fraction above threshold " << specs.back().report.fraction_above << "\n";
            }
        }
        write_spectrum_csv(csv, specs);
        js = spectrum_json(specs);
    } else if (what == "beta-probe") {
        if (site >= model->sites()) throw ConfigError("--site out of range");
        const ModelSpec& m = cfg.train.model;
        BetaProbeInput in;
        in.geometry.n_experts = m.n_experts;
        in.geometry.r = m.rank;
        in.geometry.d = m.d;
        in.geometry.r_bar = m.r_bar;
        in.geometry.top_k = m.top_k;
        in.geometry.lambda = lambda_from_d(m.d, m.rank, m.n_experts);
        in.base_w = model->site(site).base_weight();
        in.seed = cfg.train.seed;
        Rng rng(Rng::derive(cfg.train.seed, 0x626174636820));
        const std::size_t batch = cfg.train.batch_size;
        in.x = uniform_matrix(batch, in.base_w.cols(), -1.0, 1.0, rng);
        in.target = uniform_matrix(batch, in.base_w.rows(), -1.0, 1.0, rng);
        const std::vector<BetaProbeRow> rows = beta_grad_probe(in, parse_betas(betas_arg));
        write_probe_csv(csv, rows);
        js = probe_json(rows);
        for (const auto& r : rows)
            std::cout << "beta " << r.beta << "  |dP| " << r.grad_p << "  |dS_A| " << r.grad_s_a << "\n";
    } else {
        throw ConfigError("unknown analysis '" + what + "'");
    }

    const std::string stem = what == "beta-probe" ? "beta_probe" : what;
    write_text(join(out_dir, stem + ".csv"), csv.str());
    write_text(join(out_dir, stem + ".json"), js.dump(2) + "\n");
    std::cout << "wrote " << join(out_dir, stem + ".csv") << " and " << join(out_dir, stem + ".json") << "\n";
    return 0;
}

int cmd_bench(const std::string& path, std::size_t reps, const std::string& out) {
    RunConfig cfg = load_run_config(path);
    apply_seed_override(cfg);
    BenchConfig bc = cfg.bench;
    if (reps) bc.reps = reps;
    const std::vector<BenchRow> rows = bench_step(bc);

    std::cout << "kernels " << kernels::active().name << ", " << bc.out_dim << "x" << bc.in_dim << ", batch "
              << bc.batch << ", reps " << bc.reps << "\n";
    std::cout << std::left << std::setw(12) << "method" << std::right << std::setw(12) << "forward" << std::setw(12)
              << "backward" << std::setw(12) << "optimize" << std::setw(12) << "total" << std::setw(16)
              << "adapter flops" << "\n";
    const BenchRow* mo = nullptr;
    const BenchRow* ma = nullptr;
    for (const BenchRow& r : rows) {
        std::cout << std::left << std::setw(12) << method_name(r.method) << std::right << std::fixed
                  << std::setprecision(3) << std::setw(10) << r.forward_s * 1e3 << "ms" << std::setw(10)
                  << r.backward_s * 1e3 << "ms" << std::setw(10) << r.optimize_s * 1e3 << "ms" << std::setw(10)
                  << r.total_s * 1e3 << "ms" << std::setw(16) << r.flops.adapter << "\n"
                  << std::defaultfloat;
        if (r.method == Method::Molora) mo = &r;
        if (r.method == Method::Malora) ma = &r;
    }
    if (mo && ma) std::cout << "malora/molora total ratio " << std::setprecision(4) << ma->total_s / mo->total_s << "\n";
    if (!out.empty()) {
        std::ostringstream csv;
        write_bench_csv(csv, rows);
        write_text(out, csv.str());
    }
    return 0;
}

int cmd_eval(const std::string& ck_path, const std::string& out) {
    auto [cfg, model] = restore(load_checkpoint(ck_path));
    const std::vector<TaskData> val = build_validation(cfg);
    const std::vector<TaskMetrics> m = evaluate(*model, val);
    std::ostringstream csv;
    csv << "task,loss,accuracy\n" << std::setprecision(17);
    for (const TaskMetrics& t : m) {
        csv << t.id << ',' << t.loss << ',';
        if (t.accuracy) csv << *t.accuracy;
        csv << '\n';
    }
    std::cout << csv.str();
    if (!out.empty()) write_text(out, csv.str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"malk: shared-subspace mixture-of-LoRA experiments"};
    app.require_subcommand(1);

    std::string config, checkpoint, out, out_dir = ".", preset, betas = "0.5,1.25,2,5";
    std::size_t reps = 0, baseline_rank = 0, site = 0;
    double threshold = 0.0;

    auto* budget = app.add_subcommand("budget", "Trainable parameter counts for a config");
    budget->add_option("config", config, "Run config (JSON)")->required();
    budget->add_option("--preset", preset, "Site dims preset, e.g. llama2-7b-linear-sites");
    budget->add_option("--baseline-rank", baseline_rank, "Per-expert rank of the molora baseline");

    auto* trn = app.add_subcommand("train", "Train on the synthetic task mix, write checkpoint and metrics");
    trn->add_option("config", config, "Run config (JSON)")->required();

    auto* analyze = app.add_subcommand("analyze", "Expert similarity, spectra and the beta probe");
    analyze->require_subcommand(1);
    std::string analysis;
    const std::pair<const char*, const char*> analyses[] = {
        {"cca", "Pairwise CCA similarity of expert A and B sides"},
        {"spectrum", "Singular values of the concatenated expert matrices"},
        {"beta-probe", "Gradient norms of P and S_A across init scales"},
    };
    for (const auto& [name, about] : analyses) {
        auto* sub = analyze->add_subcommand(name, about);
        sub->add_option("checkpoint", checkpoint, "Checkpoint file")->required();
        sub->add_option("--out-dir", out_dir, "Directory for the CSV and JSON reports");
        if (std::string(name) == "spectrum") sub->add_option("--threshold", threshold, "Fixed threshold (default: mean)");
        if (std::string(name) == "beta-probe") {
            sub->add_option("--betas", betas, "Comma-separated beta values");
            sub->add_option("--site", site, "Adapter site index");
        }
        sub->callback([&analysis, name] { analysis = name; });
    }

    auto* bench = app.add_subcommand("bench", "Median step time per phase and method");
    bench->add_option("config", config, "Run config (JSON)")->required();
    bench->add_option("--reps", reps, "Timed repetitions (>= 10)");
    bench->add_option("--out", out, "CSV output");

    auto* ev = app.add_subcommand("eval", "Per-task validation metrics of a checkpoint");
    ev->add_option("checkpoint", checkpoint, "Checkpoint file")->required();
    ev->add_option("--out", out, "CSV output");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (*budget) return cmd_budget(config, preset, baseline_rank);
        if (*trn) return cmd_train(config);
        if (*analyze) return cmd_analyze(analysis, checkpoint, out_dir, betas, site, threshold);
        if (*bench) return cmd_bench(config, reps, out);
        if (*ev) return cmd_eval(checkpoint, out);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
