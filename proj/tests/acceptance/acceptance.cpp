// Copyright 2026 The malk Authors
// SPDX-License-Identifier: Apache-2.0
//
// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "malk/analysis/probe.hpp"
#include "malk/analysis/similarity.hpp"
#include "malk/cli/checkpoint.hpp"
#include "malk/cli/config.hpp"
#include "malk/errors.hpp"
#include "malk/harness/train.hpp"
#include "malk/linalg/random.hpp"
#include "malk/moe/budget.hpp"
#include "malk/moe/geometry.hpp"
#include "malk/moe/malora.hpp"
#include "malk/moe/molora.hpp"
#include "support/dense_oracle.hpp"
#include "support/grad_cases.hpp"

namespace {

using namespace malk;
namespace fs = std::filesystem;

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(double v, int prec = 6) {
    std::ostringstream os;
    os.precision(prec);
    os << v;
    return os.str();
}

// Runs the CLI and returns its stdout; status goes to *rc.
std::string run_cli(const std::string& args, int* rc) {
    const std::string cmd = std::string(MALK_CLI) + " " + args + " 2>&1";
    std::string out;
    FILE* p = popen(cmd.c_str(), "r");
    if (!p) {
        *rc = -1;
        return out;
    }
    std::array<char, 512> buf{};
    while (fgets(buf.data(), buf.size(), p)) out += buf.data();
    const int status = pclose(p);
    *rc = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return out;
}

// Last field of the first output line starting with `prefix`.
double last_field(const std::string& text, const std::string& prefix) {
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        if (line.rfind(prefix, 0) != 0) continue;
        const auto pos = line.find_last_of(' ');
        return std::stod(line.substr(pos + 1));
    }
    throw std::runtime_error("no line starting with '" + prefix + "'");
}

class ScratchDir {
public:
    ScratchDir() {
        char tmpl[] = "/tmp/malk_accept_XXXXXX";
        path_ = mkdtemp(tmpl);
    }
    ~ScratchDir() { fs::remove_all(path_); }
    std::string operator/(const std::string& n) const { return (path_ / n).string(); }

private:
    fs::path path_;
};

// ---- 1 ------------------------------------------------------------------

Outcome parameter_budget() {
    ScratchDir dir;
    write_file_atomic(dir / "small.json", R"({"method": "malora", "geometry": {"r": 8, "n_experts": 8, "d": 22, "r_bar": 8}})");
    write_file_atomic(dir / "main.json", R"({"method": "malora", "geometry": {"r": 8, "n_experts": 8, "lambda": 0.5}})");
    int rc1 = 0, rc2 = 0;
    const std::string small = run_cli("budget " + (dir / "small.json") + " --preset llama2-7b-linear-sites", &rc1);
    const std::string main =
        run_cli("budget " + (dir / "main.json") + " --preset llama2-7b-linear-sites --baseline-rank 16", &rc2);
    if (rc1 != 0 || rc2 != 0) return {false, "budget command failed: " + small + main};
    const double r_small = last_field(small, "malora ");
    const double r_main = last_field(main, "malora ");

    // Cross-check the printed ratios against the library.
    const auto sites = llama2_7b_linear_sites();
    BudgetConfig mo;
    mo.base_params = kLlama2BaseParams;
    BudgetConfig sm = mo;
    sm.d = 22;
    sm.r_bar = 8;
    BudgetConfig mo16 = mo;
    mo16.rank = 16;
    const Budget b_mo = param_budget(Method::Molora, sites, mo);
    const Budget b_sm = param_budget(Method::Malora, sites, sm);
    const Budget b_ma = param_budget(Method::Malora, sites, mo);
    const Budget b_mo16 = param_budget(Method::Molora, sites, mo16);
    const double lib_small = static_cast<double>(b_sm.trainable) / static_cast<double>(b_mo.trainable);
    const double lib_main = static_cast<double>(b_ma.trainable) / static_cast<double>(b_mo16.trainable);
    const bool agree = std::fabs(lib_small - r_small) < 1e-4 && std::fabs(lib_main - r_main) < 1e-4;
    const bool pass = agree && r_small >= 0.66 && r_small <= 0.74 && r_main >= 0.50 && r_main <= 0.54;
    return {pass, "small/molora " + fmt(r_small, 4) + " (" + fmt(b_sm.percent_of_base, 3) + "% vs " +
                      fmt(b_mo.percent_of_base, 3) + "%), r_bar=12/molora(r=16) " + fmt(r_main, 4) +
                      ", malora r_bar=12 at " + fmt(b_ma.percent_of_base, 3) + "% of base"};
}

// ---- 2 ------------------------------------------------------------------

Outcome geometry_identity() {
    const MaloraGeometry g = derive_geometry(8, 8, 0.5);
    const double br = bound_ratio(12, 8);
    const bool pass = g.d == 32 && g.r_bar == 12 && std::fabs(br - std::sqrt(1.5)) <= 1e-12;
    return {pass, "d=" + std::to_string(g.d) + " r_bar=" + std::to_string(g.r_bar) +
                      " bound_ratio error " + fmt(std::fabs(br - std::sqrt(1.5)), 3)};
}

// ---- 3 ------------------------------------------------------------------

Outcome init_invariants() {
    double worst_recon = 0.0, worst_beta = 0.0, worst_delta = 0.0;
    std::size_t geometries = 0;
    Rng pick(2024);
    while (geometries < 100) {
        MaloraGeometry g;
        try {
            g = derive_geometry(1 + pick.below(6), 1 + pick.below(8), pick.uniform(0.05, 1.0));
            g.top_k = 1 + pick.below(g.n_experts);
            g.in_dim = g.d + pick.below(20);
            g.out_dim = 1 + pick.below(24);
            g.beta = std::exp(pick.uniform(-2.0, 2.0));
            validate_geometry(g);
        } catch (const ConfigError&) {
            continue;
        }
        ++geometries;
        const std::uint64_t seed = pick.next_u64();

        Rng r1(seed), ref(seed);
        const MaloraInit init = malora_init(g, r1);
        const Matrix k0 = kaiming_uniform(g.d, g.in_dim, ref);
        worst_recon = std::max(worst_recon, max_abs_diff(matmul(init.coeffs[0], init.shared), slice_rows(k0, 0, g.r_bar)));

        MaloraGeometry g1 = g;
        g1.beta = 1.0;
        Rng r2(seed);
        const MaloraInit unit = malora_init(g1, r2);
        for (std::size_t t = 0; t < g.n_experts; ++t) {
            worst_beta = std::max(worst_beta, max_abs_diff(matmul(init.coeffs[t], init.shared),
                                                           matmul(unit.coeffs[t], unit.shared)));
        }

        Rng wr(seed + 1);
        const Matrix base = uniform_matrix(g.out_dim, g.in_dim, -1, 1, wr);
        for (Method m : {Method::Lora, Method::AsyLora, Method::Molora, Method::MoAsyLora, Method::Malora}) {
            ModelSpec spec;
            spec.method = m;
            spec.rank = g.r;
            spec.n_experts = g.n_experts;
            spec.top_k = g.top_k;
            spec.d = g.d;
            spec.r_bar = g.r_bar;
            spec.beta = g.beta;
            Rng lr(seed + 2);
            const auto layer = make_adapter(spec, base, lr);
            for (std::size_t t = 0; t < layer->experts(); ++t)
                worst_delta = std::max(worst_delta, max_abs(layer->merged_delta(t)));
        }
        // Every ablation variant starts neutral too.
        for (int v = 0; v < 5; ++v) {
            ModelSpec spec;
            spec.method = Method::Malora;
            spec.rank = g.r;
            spec.n_experts = g.n_experts;
            spec.top_k = g.top_k;
            spec.d = g.d;
            spec.r_bar = g.r_bar;
            spec.beta = g.beta;
            spec.flags.freeze_s_a = v == 0;
            spec.flags.symmetric = v == 1;
            spec.flags.shared_subspace = v != 2;
            spec.flags.freeze_p_t = v == 3;
            spec.flags.decompose_b_side = v == 4;
            if (v == 2 && (g.d / g.n_experts == 0 || g.d / g.n_experts > g.r_bar)) continue;
            if (v == 4 && g.d > g.out_dim) continue;
            Rng lr(seed + 3);
            const auto layer = make_adapter(spec, base, lr);
            for (std::size_t t = 0; t < layer->experts(); ++t)
                worst_delta = std::max(worst_delta, max_abs(layer->merged_delta(t)));
        }
    }
    const bool pass = worst_recon <= 1e-10 && worst_beta <= 1e-12 && worst_delta == 0.0;
    return {pass, std::to_string(geometries) + " geometries: reconstruction " + fmt(worst_recon, 3) +
                      ", beta invariance " + fmt(worst_beta, 3) + ", max |delta W| " + fmt(worst_delta, 3)};
}

// ---- 4 ------------------------------------------------------------------

Outcome gradient_correctness() {
    double worst_op = 0.0, worst_layer = 0.0;
    std::string where;
    std::size_t checks = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        for (const auto& c : testing::op_cases(seed)) {
            const double e = ad::grad_check(c.params, c.recipe, 1e-4);
            ++checks;
            if (e > worst_op) {
                worst_op = e;
                if (e >= 1e-6) where = c.name;
            }
        }
        for (testing::LayerKind kind : testing::all_layer_kinds()) {
            const auto c = testing::layer_case(kind, seed);
            const double e = ad::grad_check(c.grad.params, c.grad.recipe, 1e-4);
            ++checks;
            if (e > worst_layer) {
                worst_layer = e;
                if (e >= 1e-6) where = c.grad.name;
            }
        }
    }
    const bool pass = worst_op < 1e-6 && worst_layer < 1e-6;
    return {pass, std::to_string(checks) + " checks over 20 seeds: ops " + fmt(worst_op, 3) + ", layers " +
                      fmt(worst_layer, 3) + (where.empty() ? "" : " (worst " + where + ")")};
}

// ---- 5 ------------------------------------------------------------------

Outcome probe_exactness() {
    Rng rng(55);
    BetaProbeInput in;
    in.geometry = derive_geometry(8, 8, 0.5);
    in.base_w = uniform_matrix(48, 64, -0.125, 0.125, rng);
    in.x = uniform_matrix(32, 64, -1, 1, rng);
    in.target = uniform_matrix(32, 48, -1, 1, rng);
    in.seed = 5;
    const std::vector<double> betas{1.0, 0.5, 1.25, 2.0, 5.0};
    const auto rows = beta_grad_probe(in, betas);
    double worst = 0.0;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const double b = rows[i].beta;
        worst = std::max(worst, std::fabs(rows[i].grad_p / rows[0].grad_p / b - 1.0));
        worst = std::max(worst, std::fabs(rows[i].grad_s_a / rows[0].grad_s_a * b - 1.0));
    }
    return {worst <= 1e-8, "worst relative ratio error " + fmt(worst, 3) + " over beta 0.5, 1.25, 2, 5"};
}

// ---- 6 ------------------------------------------------------------------

Outcome routing_contract() {
    double worst = 0.0;
    bool exact_k = true;
    bool ties = true;
    Rng pick(66);
    for (int cfg = 0; cfg < 50; ++cfg) {
        const std::size_t n_experts = 2 + pick.below(7);
        const std::size_t k = 1 + pick.below(n_experts);
        const std::size_t n = 4 + pick.below(12);
        const std::size_t m = 3 + pick.below(10);
        const std::size_t batch = 1 + pick.below(20);
        const bool renorm = pick.below(2) == 1;
        Rng rng(pick.next_u64());
        const Matrix base = uniform_matrix(m, n, -1, 1, rng);
        std::unique_ptr<MoeLayer> layer;
        if (cfg % 2 == 0) {
            layer = std::make_unique<MoloraLayer>(base, MoloraOptions{n_experts, 2, k, 0.0, cfg % 4 == 2, 0.0, renorm}, rng);
        } else {
            MaloraOptions o;
            o.geometry.n_experts = n_experts;
            o.geometry.r = 2;
            o.geometry.r_bar = 3;
            o.geometry.d = std::min<std::size_t>(n, 3 + pick.below(4));
            o.geometry.top_k = k;
            o.renormalize = renorm;
            layer = std::make_unique<MaloraLayer>(base, o, rng);
        }
        for (auto& p : layer->params("s")) *p.value = uniform_matrix(p.value->rows(), p.value->cols(), -1, 1, rng);
        const Matrix x = uniform_matrix(batch, n, -1, 1, rng);

        ad::Tape tape;
        ForwardContext ctx{tape};
        const ForwardOutput out = layer->forward(ctx, tape.constant(x), "s");
        for (std::size_t r = 0; r < batch; ++r) {
            std::size_t active = 0, selected = 0;
            for (std::size_t e = 0; e < n_experts; ++e) {
                active += out.route->gates.value()(r, e) != 0.0;
                selected += out.route->mask(r, e) == 1.0;
            }
            exact_k = exact_k && active == k && selected == k;
        }
        worst = std::max(worst, max_abs_diff(out.y.value(), testing::dense_forward(*layer, x)));

        // Fully tied logits select experts 0..k-1; a two-way tie at the k-th
        // slot keeps the lower index.
        ad::Tape tt;
        const ad::Var w = tt.parameter("w", Matrix::identity(n_experts), true);
        const RouteResult tied = route(w, tt.constant(Matrix(3, n_experts)), k);
        for (std::size_t r = 0; r < 3; ++r)
            for (std::size_t e = 0; e < n_experts; ++e) ties = ties && (tied.mask(r, e) == 1.0) == (e < k);
        if (k < n_experts) {
            Matrix logits(1, n_experts);
            for (std::size_t e = 0; e < n_experts; ++e) logits(0, e) = -static_cast<double>(e);
            logits(0, n_experts - 1) = logits(0, k - 1);
            const RouteResult partial = route(w, tt.constant(logits), k);
            ties = ties && partial.mask(0, k - 1) == 1.0 && partial.mask(0, n_experts - 1) == (k - 1 == n_experts - 1);
        }
    }
    const bool pass = exact_k && ties && worst <= 1e-11;
    return {pass, std::string("exactly-K ") + (exact_k ? "ok" : "violated") + ", tie-break " + (ties ? "ok" : "violated") +
                      ", sparse vs dense max error " + fmt(worst, 3) + " over 50 configs"};
}

// ---- 7 ------------------------------------------------------------------

Outcome latency_ordering() {
    BenchConfig c;
    c.in_dim = 1024;
    c.out_dim = 1024;
    c.batch = 64;
    c.reps = 100;
    c.warmup = 5;
    c.model.rank = 8;
    c.model.n_experts = 8;
    c.model.top_k = 2;
    c.model.d = 32;
    c.model.r_bar = 12;
    const auto rows = bench_step(c);
    const BenchRow& lora = rows[0];
    const BenchRow& mo = rows[1];
    const BenchRow& ma = rows[2];
    const double speedup = mo.total_s / ma.total_s;

    auto order = [&](auto key) {
        std::vector<std::size_t> idx{0, 1, 2};
        std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return key(rows[a]) < key(rows[b]); });
        return idx;
    };
    const auto analytic = order([](const BenchRow& r) { return static_cast<double>(r.flops.adapter + r.flops.router); });
    const auto measured = order([](const BenchRow& r) { return r.total_s; });
    const bool orders_agree = analytic == measured;
    auto names = [&](const std::vector<std::size_t>& idx) {
        std::string s;
        for (std::size_t i : idx) s += (s.empty() ? "" : " < ") + std::string(method_name(rows[i].method));
        return s;
    };
    const bool pass = ma.total_s < mo.total_s && speedup >= 1.1 && orders_agree;
    return {pass, "median step lora " + fmt(lora.total_s * 1e3, 4) + " ms, molora " + fmt(mo.total_s * 1e3, 4) +
                      " ms, malora " + fmt(ma.total_s * 1e3, 4) + " ms; molora/malora " + fmt(speedup, 4) +
                      " (need >= 1.1); analytic " + names(analytic) + ", measured " + names(measured)};
}

// ---- 8, 9 ----------------------------------------------------------------

struct MixSetup {
    Backbone backbone{{{64, 64}}, false};
    FamilyOptions family;
    std::vector<TaskData> train, val;
};

MixSetup four_task_mix(std::uint64_t seed) {
    MixSetup s;
    s.family.shared_rank = 4;
    s.family.task_rank = 4;
    s.family.mean_shift = 2.0;
    for (std::uint64_t t = 0; t < 4; ++t) {
        TaskSpec spec{"t" + std::to_string(t), TaskKind::Regression, 64, 64, 2000, seed * 100 + t + 1, seed};
        s.train.push_back(generate_task(spec, s.backbone, s.family, 0));
        spec.samples = 500;
        s.val.push_back(generate_task(spec, s.backbone, s.family, 1));
    }
    return s;
}

TrainConfig mix_config(Method method, const MixSetup& s, std::uint64_t seed, std::size_t steps) {
    TrainConfig c;
    c.model.method = method;
    c.model.backbone = s.backbone;
    c.model.rank = 4;
    c.model.n_experts = 8;
    c.model.top_k = 2;
    const MaloraGeometry g = derive_geometry(4, 8, 0.5);
    c.model.d = g.d;
    c.model.r_bar = g.r_bar;
    c.lr = 1e-2;
    c.batch_size = 32;
    c.steps = steps;
    c.log_every = steps;
    c.seed = seed;
    return c;
}

Outcome asymmetry() {
    int wins = 0;
    std::string detail;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const MixSetup s = four_task_mix(seed);
        const MultitaskDataset ds = make_multitask(s.train, {0.25, 0.25, 0.25, 0.25}, 0, seed);
        const TrainResult res = train(mix_config(Method::Molora, s, seed, 1000), ds, &s.val);
        const MoeLayer* site = dynamic_cast<const MoeLayer*>(&res.model->site(0));
        const SimilarityReport r = expert_similarity(std::span<const MoeLayer* const>(&site, 1));
        wins += r.mean_a > r.mean_b;
        detail += (detail.empty() ? "" : "; ") + fmt(r.mean_a, 3) + " vs " + fmt(r.mean_b, 3);
    }
    return {wins >= 4, "A-side > B-side mean CCA in " + std::to_string(wins) + "/5 seeds (" + detail + ")"};
}

Outcome seesaw() {
    int wins = 0;
    std::string detail;
    std::size_t matched = 0, lora_tp = 0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const MixSetup s = four_task_mix(seed);
        const MultitaskDataset ds = make_multitask(s.train, {0.7, 0.1, 0.1, 0.1}, 0, seed);
        const TrainConfig ma_cfg = mix_config(Method::Malora, s, seed, 2000);
        TrainConfig lo_cfg = mix_config(Method::Lora, s, seed, 2000);
        // Match budgets: pick the LoRA rank whose r (m + n) is closest.
        {
            Model probe(ma_cfg.model, family_backbone(s.backbone, seed), seed);
            matched = trainable_count(probe);
            const double per_rank = 128.0;
            lo_cfg.model.rank = static_cast<std::size_t>(std::lround(static_cast<double>(matched) / per_rank));
        }
        auto worst = [&](const TrainConfig& c) {
            const TrainResult res = train(c, ds, &s.val);
            if (c.model.method == Method::Lora) lora_tp = trainable_count(*res.model);
            const auto& v = res.history.rows.back().val_loss;
            return *std::max_element(v.begin(), v.end());
        };
        const double w_ma = worst(ma_cfg);
        const double w_lo = worst(lo_cfg);
        wins += w_ma <= w_lo;
        detail += (detail.empty() ? "" : "; ") + fmt(w_ma, 3) + " vs " + fmt(w_lo, 3);
    }
    return {wins >= 4, "malora worst-task val loss <= lora in " + std::to_string(wins) + "/5 seeds at " +
                           std::to_string(matched) + " vs " + std::to_string(lora_tp) + " trainable (" + detail + ")"};
}

// ---- 10 -----------------------------------------------------------------

Outcome determinism_and_format() {
    ScratchDir dir;
    const std::string smoke = R"({
      "method": "malora", "seed": 1,
      "geometry": {"n_experts": 4, "r": 4, "lambda": 0.5, "top_k": 2},
      "model": {"sites": [[32, 32]]},
      "training": {"lr": 0.01, "batch_size": 16, "steps": 200, "log_every": 20, "dropout": 0.05},
      "family": {"seed": 3, "shared_rank": 4, "task_rank": 4},
      "tasks": [{"id": "a", "samples": 400, "val_samples": 100, "seed": 1},
                {"id": "b", "samples": 400, "val_samples": 100, "seed": 2}],
      "output": {"checkpoint": ")" + (dir / "run.malk") + R"(", "metrics": ")" + (dir / "run.csv") + R"("}
    })";
    write_file_atomic(dir / "smoke.json", smoke);
    int rc1 = 0, rc2 = 0;
    run_cli("train " + (dir / "smoke.json"), &rc1);
    const std::string ck1 = read_file(dir / "run.malk");
    const std::string csv1 = read_file(dir / "run.csv");
    run_cli("train " + (dir / "smoke.json"), &rc2);
    const std::string ck2 = read_file(dir / "run.malk");
    const std::string csv2 = read_file(dir / "run.csv");
    const bool rerun = rc1 == 0 && rc2 == 0 && ck1 == ck2 && csv1 == csv2;

    auto [cfg, model] = restore(decode_checkpoint(ck1));
    const bool round_trip = encode_checkpoint(snapshot(cfg, *model)) == ck1;

    Checkpoint tiny;
    tiny.metadata = nlohmann::json::object();
    tiny.tensors.emplace_back("w", Matrix(2, 2, {1.0, 2.0, 3.0, 4.0}));
    const std::string bytes = encode_checkpoint(tiny);
    std::string payload;
    for (double v : {1.0, 2.0, 3.0, 4.0}) {
        const auto bits = std::bit_cast<std::uint64_t>(v);
        for (int b = 0; b < 8; ++b) payload.push_back(static_cast<char>((bits >> (8 * b)) & 0xff));
    }
    const bool layout = bytes.size() >= 32 && bytes.substr(bytes.size() - 32) == payload;

    return {rerun && round_trip && layout, std::string("rerun ") + (rerun ? "byte-identical" : "differs") +
                                               ", round trip " + (round_trip ? "bitwise" : "differs") +
                                               ", 2x2 payload " + (layout ? "ok" : "wrong") + " (" +
                                               std::to_string(ck1.size()) + " checkpoint bytes)"};
}

}  // namespace

int main() {
    struct Criterion {
        int id;
        const char* name;
        double limit_s;
        std::function<Outcome()> run;
    };
    const std::vector<Criterion> all{
        {1, "parameter budget", 1.0, parameter_budget},
        {2, "geometry identity", 1.0, geometry_identity},
        {3, "initialization invariants", 30.0, init_invariants},
        {4, "gradient correctness", 300.0, gradient_correctness},
        {5, "beta probe exactness", 60.0, probe_exactness},
        {6, "routing contract", 60.0, routing_contract},
        {7, "latency ordering", 300.0, latency_ordering},
        {8, "expert asymmetry", 900.0, asymmetry},
        {9, "seesaw mitigation", 1200.0, seesaw},
        {10, "determinism and format", 120.0, determinism_and_format},
    };
    int failures = 0;
    for (const Criterion& c : all) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool in_time = secs < c.limit_s;
        const bool pass = o.pass && in_time;
        failures += !pass;
        std::cout << (pass ? "PASS" : "FAIL") << "  " << c.id << ". " << c.name << ": " << o.detail << " ["
                  << fmt(secs, 3) << " s" << (in_time ? "" : ", over the " + fmt(c.limit_s, 4) + " s limit") << "]"
                  << std::endl;
    }
    std::cout << (all.size() - failures) << "/" << all.size() << " criteria passed" << std::endl;
    return failures == 0 ? 0 : 1;
}
