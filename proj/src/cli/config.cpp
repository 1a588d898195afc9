// Copyright 2026 The malk Authors
// SPDX-License-Identifier: Apache-2.0
//

#include "malk/cli/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "malk/errors.hpp"
#include "malk/moe/geometry.hpp"

namespace malk {
namespace {

using nlohmann::json;

// Reads one JSON object, remembering which keys were consumed so the rest
// can be reported as unknown.
class Section {
public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) fail("", "expected an object");
    }

    bool has(const std::string& key) {
        seen_.insert(key);
        return j_.contains(key);
    }

    const json& at(const std::string& key) {
        seen_.insert(key);
        return j_.at(key);
    }

    std::string key_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    [[noreturn]] void fail(const std::string& key, const std::string& what) const {
        const std::string where = key.empty() ? (path_.empty() ? "<root>" : path_) : key_path(key);
        throw ConfigError("config key '" + where + "': " + what);
    }

    std::uint64_t uint(const std::string& key, std::uint64_t def) {
        if (!has(key)) return def;
        const json& v = j_.at(key);
        if (!v.is_number_unsigned()) fail(key, "expected a non-negative integer");
        return v.get<std::uint64_t>();
    }

    std::size_t size(const std::string& key, std::size_t def) {
        return static_cast<std::size_t>(uint(key, def));
    }

    double number(const std::string& key, double def) {
        if (!has(key)) return def;
        const json& v = j_.at(key);
        if (!v.is_number()) fail(key, "expected a number");
        return v.get<double>();
    }

    bool boolean(const std::string& key, bool def) {
        if (!has(key)) return def;
        const json& v = j_.at(key);
        if (!v.is_boolean()) fail(key, "expected true or false");
        return v.get<bool>();
    }

    std::string string(const std::string& key, const std::string& def) {
        if (!has(key)) return def;
        const json& v = j_.at(key);
        if (!v.is_string()) fail(key, "expected a string");
        return v.get<std::string>();
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (!seen_.count(it.key())) fail(it.key(), "unknown key");
        }
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

std::vector<SiteDims> parse_sites(const json& v, const std::string& path) {
    if (!v.is_array()) throw ConfigError("config key '" + path + "': expected a list of [out, in] pairs");
    std::vector<SiteDims> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const json& p = v[i];
        if (!p.is_array() || p.size() != 2 || !p[0].is_number_unsigned() || !p[1].is_number_unsigned()) {
            throw ConfigError("config key '" + path + "[" + std::to_string(i) +
                              "]': expected [out, in] with positive integers");
        }
        out.push_back({p[0].get<std::size_t>(), p[1].get<std::size_t>()});
    }
    return out;
}

json sites_json(const std::vector<SiteDims>& sites) {
    json a = json::array();
    for (const SiteDims& s : sites) a.push_back({s.out, s.in});
    return a;
}

template <typename F>
auto wrap(const std::string& key, F&& f) {
    try {
        return f();
    } catch (const ConfigError& e) {
        throw ConfigError("config key '" + key + "': " + e.what());
    }
}

}  // namespace

RunConfig from_json(const json& j) {
    RunConfig cfg;
    Section root(j, "");
    ModelSpec& m = cfg.train.model;

    m.method = wrap("method", [&] { return parse_method(root.string("method", "malora")); });
    cfg.train.seed = root.uint("seed", 0);

    if (root.has("geometry")) {
        Section g(root.at("geometry"), "geometry");
        m.n_experts = g.size("n_experts", m.n_experts);
        m.rank = g.size("r", m.rank);
        m.top_k = g.size("top_k", m.top_k);
        m.beta = g.number("beta", m.beta);
        m.alpha = g.number("alpha", m.alpha);
        m.renormalize = g.boolean("renormalize", m.renormalize);
        if (g.has("lambda")) cfg.lambda = g.number("lambda", 0.5);
        const bool has_d = g.has("d");
        const bool has_rbar = g.has("r_bar");
        if (has_d != has_rbar) g.fail(has_d ? "r_bar" : "d", "d and r_bar must be given together");
        if (has_d) {
            m.d = g.size("d", m.d);
            m.r_bar = g.size("r_bar", m.r_bar);
        }
        if (m.rank == 0) g.fail("r", "must be >= 1");
        if (m.n_experts == 0) g.fail("n_experts", "must be >= 1");
        if (m.top_k == 0 || m.top_k > m.n_experts) g.fail("top_k", "must be in [1, n_experts]");
        if (!(m.beta > 0.0)) g.fail("beta", "must be > 0");
        if (!(m.alpha >= 0.0)) g.fail("alpha", "must be >= 0");
        if (cfg.lambda || !has_d) {
            const MaloraGeometry dg =
                wrap("geometry.lambda", [&] { return derive_geometry(m.rank, m.n_experts, cfg.lambda.value_or(0.5)); });
            if (has_d && (dg.d != m.d || dg.r_bar != m.r_bar)) {
                g.fail("lambda", "lambda " + std::to_string(*cfg.lambda) + " derives d=" + std::to_string(dg.d) +
                                     ", r_bar=" + std::to_string(dg.r_bar) + " but the config gives d=" +
                                     std::to_string(m.d) + ", r_bar=" + std::to_string(m.r_bar));
            }
            m.d = dg.d;
            m.r_bar = dg.r_bar;
        }
        g.finish();
    }

    if (root.has("ablation")) {
        Section a(root.at("ablation"), "ablation");
        m.flags.freeze_s_a = a.boolean("freeze_s_a", m.flags.freeze_s_a);
        m.flags.freeze_p_t = a.boolean("freeze_p_t", m.flags.freeze_p_t);
        m.flags.decompose_b_side = a.boolean("decompose_b_side", m.flags.decompose_b_side);
        m.flags.shared_subspace = a.boolean("shared_subspace", m.flags.shared_subspace);
        m.flags.symmetric = a.boolean("symmetric", m.flags.symmetric);
        if (m.flags.decompose_b_side && !m.flags.shared_subspace)
            a.fail("decompose_b_side", "cannot be combined with shared_subspace = false");
        a.finish();
    }

    m.backbone.sites = {{64, 64}};
    if (root.has("model")) {
        Section s(root.at("model"), "model");
        if (s.has("sites")) m.backbone.sites = parse_sites(s.at("sites"), "model.sites");
        m.backbone.relu = s.boolean("relu", m.backbone.relu);
        if (m.backbone.sites.empty()) s.fail("sites", "needs at least one site");
        for (std::size_t i = 0; i < m.backbone.sites.size(); ++i) {
            const SiteDims& d = m.backbone.sites[i];
            if (d.out == 0 || d.in == 0) s.fail("sites", "dimensions must be positive");
            if (i > 0 && m.backbone.sites[i - 1].out != d.in)
                s.fail("sites", "site " + std::to_string(i) + " input does not match the previous output");
        }
        s.finish();
    }

    TrainConfig& t = cfg.train;
    if (root.has("training")) {
        Section s(root.at("training"), "training");
        t.lr = s.number("lr", t.lr);
        t.batch_size = s.size("batch_size", t.batch_size);
        t.epochs = s.size("epochs", t.epochs);
        t.steps = s.size("steps", t.steps);
        t.warmup_ratio = s.number("warmup_ratio", t.warmup_ratio);
        t.weight_decay = s.number("weight_decay", t.weight_decay);
        m.dropout = s.number("dropout", m.dropout);
        t.balance_factor = s.number("balance_factor", t.balance_factor);
        t.grad_clip = s.number("grad_clip", t.grad_clip);
        t.log_every = s.size("log_every", t.log_every);
        t.record_timing = s.boolean("record_timing", t.record_timing);
        s.finish();
    }
    wrap("training", [&] {
        validate(t);
        return 0;
    });

    if (root.has("family")) {
        Section s(root.at("family"), "family");
        cfg.family_seed = s.uint("seed", cfg.family_seed);
        cfg.family.shared_rank = s.size("shared_rank", cfg.family.shared_rank);
        cfg.family.task_rank = s.size("task_rank", cfg.family.task_rank);
        cfg.family.strength = s.number("strength", cfg.family.strength);
        cfg.family.mean_shift = s.number("mean_shift", cfg.family.mean_shift);
        cfg.family.noise = s.number("noise", cfg.family.noise);
        if (cfg.family.task_rank == 0 || cfg.family.task_rank > cfg.family.shared_rank)
            s.fail("task_rank", "must be in [1, shared_rank]");
        if (!(cfg.family.noise >= 0.0)) s.fail("noise", "must be >= 0");
        s.finish();
    }

    if (root.has("tasks")) {
        const json& arr = root.at("tasks");
        if (!arr.is_array()) root.fail("tasks", "expected a list of task objects");
        std::set<std::string> ids;
        for (std::size_t i = 0; i < arr.size(); ++i) {
            Section s(arr[i], "tasks[" + std::to_string(i) + "]");
            TaskEntry e;
            e.id = s.string("id", "task" + std::to_string(i));
            e.kind = wrap(s.key_path("kind"), [&] { return parse_task_kind(s.string("kind", "regression")); });
            e.samples = s.size("samples", e.samples);
            e.val_samples = s.size("val_samples", e.val_samples);
            e.seed = s.uint("seed", i + 1);
            e.weight = s.number("weight", e.weight);
            if (e.samples == 0) s.fail("samples", "must be >= 1");
            if (e.val_samples == 0) s.fail("val_samples", "must be >= 1");
            if (!(e.weight >= 0.0)) s.fail("weight", "must be >= 0");
            if (!ids.insert(e.id).second) s.fail("id", "duplicate task id '" + e.id + "'");
            s.finish();
            cfg.tasks.push_back(e);
        }
    } else {
        cfg.tasks = {TaskEntry{"task0", TaskKind::Regression, 1000, 250, 1, 1.0},
                     TaskEntry{"task1", TaskKind::Regression, 1000, 250, 2, 1.0}};
    }

    if (root.has("mix")) {
        Section s(root.at("mix"), "mix");
        cfg.mix_length = s.size("length", cfg.mix_length);
        cfg.mix_seed = s.uint("seed", cfg.mix_seed);
        s.finish();
    }

    BenchConfig& b = cfg.bench;
    if (root.has("bench")) {
        Section s(root.at("bench"), "bench");
        if (s.has("methods")) {
            const json& arr = s.at("methods");
            if (!arr.is_array() || arr.empty()) s.fail("methods", "expected a non-empty list of method names");
            b.methods.clear();
            for (const json& v : arr) {
                if (!v.is_string()) s.fail("methods", "expected method names");
                b.methods.push_back(wrap("bench.methods", [&] { return parse_method(v.get<std::string>()); }));
            }
        }
        b.in_dim = s.size("in_dim", b.in_dim);
        b.out_dim = s.size("out_dim", b.out_dim);
        b.batch = s.size("batch", b.batch);
        b.reps = s.size("reps", b.reps);
        b.warmup = s.size("warmup", b.warmup);
        if (b.reps < 10) s.fail("reps", "must be >= 10");
        if (b.in_dim == 0 || b.out_dim == 0 || b.batch == 0) s.fail("", "dimensions must be positive");
        s.finish();
    }

    BudgetSection& bs = cfg.budget;
    if (root.has("budget")) {
        Section s(root.at("budget"), "budget");
        if (s.has("sites")) {
            const json& v = s.at("sites");
            if (v.is_string()) {
                if (v.get<std::string>() != kLlama2Preset)
                    s.fail("sites", "unknown preset '" + v.get<std::string>() + "'");
                bs.preset = v.get<std::string>();
            } else {
                bs.sites = parse_sites(v, "budget.sites");
            }
        } else {
            bs.sites = m.backbone.sites;
        }
        bs.base_params = s.uint("base_params", bs.base_params);
        bs.include_router = s.boolean("include_router", bs.include_router);
        s.finish();
    } else {
        bs.sites = m.backbone.sites;
    }

    if (root.has("output")) {
        Section s(root.at("output"), "output");
        cfg.checkpoint_path = s.string("checkpoint", cfg.checkpoint_path);
        cfg.metrics_path = s.string("metrics", cfg.metrics_path);
        s.finish();
    }

    root.finish();
    b.model = m;
    b.seed = cfg.train.seed;
    return cfg;
}

RunConfig parse_run_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        // Translate the byte offset into a line and column.
        std::size_t line = 1;
        std::size_t col = 1;
        for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
            if (text[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        throw ConfigError("config parse error at line " + std::to_string(line) + ", column " +
                          std::to_string(col) + ": " + e.what());
    }
    return from_json(j);
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_run_config(ss.str());
}

json to_json(const RunConfig& cfg) {
    const ModelSpec& m = cfg.train.model;
    const TrainConfig& t = cfg.train;
    json j;
    j["method"] = std::string(method_name(m.method));
    j["seed"] = t.seed;
    json g = {{"n_experts", m.n_experts}, {"r", m.rank},         {"top_k", m.top_k},
              {"beta", m.beta},           {"alpha", m.alpha},    {"renormalize", m.renormalize},
              {"d", m.d},                 {"r_bar", m.r_bar}};
    if (cfg.lambda) g["lambda"] = *cfg.lambda;
    j["geometry"] = g;
    j["ablation"] = {{"freeze_s_a", m.flags.freeze_s_a},
                     {"freeze_p_t", m.flags.freeze_p_t},
                     {"decompose_b_side", m.flags.decompose_b_side},
                     {"shared_subspace", m.flags.shared_subspace},
                     {"symmetric", m.flags.symmetric}};
    j["model"] = {{"sites", sites_json(m.backbone.sites)}, {"relu", m.backbone.relu}};
    j["training"] = {{"lr", t.lr},
                     {"batch_size", t.batch_size},
                     {"epochs", t.epochs},
                     {"steps", t.steps},
                     {"warmup_ratio", t.warmup_ratio},
                     {"weight_decay", t.weight_decay},
                     {"dropout", m.dropout},
                     {"balance_factor", t.balance_factor},
                     {"grad_clip", t.grad_clip},
                     {"log_every", t.log_every},
                     {"record_timing", t.record_timing}};
    j["family"] = {{"seed", cfg.family_seed},
                   {"shared_rank", cfg.family.shared_rank},
                   {"task_rank", cfg.family.task_rank},
                   {"strength", cfg.family.strength},
                   {"mean_shift", cfg.family.mean_shift},
                   {"noise", cfg.family.noise}};
    json tasks = json::array();
    for (const TaskEntry& e : cfg.tasks) {
        tasks.push_back({{"id", e.id},
                         {"kind", task_kind_name(e.kind)},
                         {"samples", e.samples},
                         {"val_samples", e.val_samples},
                         {"seed", e.seed},
                         {"weight", e.weight}});
    }
    j["tasks"] = tasks;
    j["mix"] = {{"length", cfg.mix_length}, {"seed", cfg.mix_seed}};
    json methods = json::array();
    for (Method mm : cfg.bench.methods) methods.push_back(std::string(method_name(mm)));
    j["bench"] = {{"methods", methods},         {"in_dim", cfg.bench.in_dim}, {"out_dim", cfg.bench.out_dim},
                  {"batch", cfg.bench.batch},   {"reps", cfg.bench.reps},     {"warmup", cfg.bench.warmup}};
    j["budget"] = {{"sites", cfg.budget.preset.empty() ? sites_json(cfg.budget.sites) : json(cfg.budget.preset)},
                   {"base_params", cfg.budget.base_params},
                   {"include_router", cfg.budget.include_router}};
    j["output"] = {{"checkpoint", cfg.checkpoint_path}, {"metrics", cfg.metrics_path}};
    return j;
}

void apply_seed_override(RunConfig& cfg) {
    const char* env = std::getenv("MALK_SEED");
    if (!env || !*env) return;
    const std::string s(env);
    if (!std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; }) || s.size() > 19) {
        throw ConfigError("MALK_SEED must be a non-negative integer, got '" + s + "'");
    }
    cfg.train.seed = std::stoull(s);
    cfg.bench.seed = cfg.train.seed;
}

std::vector<TaskSpec> task_specs(const RunConfig& cfg) {
    const Backbone& bb = cfg.train.model.backbone;
    std::vector<TaskSpec> out;
    for (const TaskEntry& e : cfg.tasks) {
        out.push_back(TaskSpec{e.id, e.kind, bb.sites.front().in, bb.sites.back().out, e.samples, e.seed,
                               cfg.family_seed});
    }
    return out;
}

MultitaskDataset build_dataset(const RunConfig& cfg) {
    std::vector<TaskData> data;
    std::vector<double> weights;
    for (const TaskSpec& s : task_specs(cfg)) data.push_back(generate_task(s, cfg.train.model.backbone, cfg.family, 0));
    for (const TaskEntry& e : cfg.tasks) weights.push_back(e.weight);
    return make_multitask(std::move(data), weights, cfg.mix_length, cfg.mix_seed);
}

std::vector<TaskData> build_validation(const RunConfig& cfg) {
    std::vector<TaskData> out;
    const std::vector<TaskSpec> specs = task_specs(cfg);
    for (std::size_t i = 0; i < specs.size(); ++i) {
        TaskSpec s = specs[i];
        s.samples = cfg.tasks[i].val_samples;
        out.push_back(generate_task(s, cfg.train.model.backbone, cfg.family, 1));
    }
    return out;
}

}  // namespace malk
