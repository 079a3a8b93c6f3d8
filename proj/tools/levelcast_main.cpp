#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "levelcast/analysis.hpp"
#include "levelcast/baselines.hpp"
#include "levelcast/dataset.hpp"
#include "levelcast/errors.hpp"
#include "levelcast/eval.hpp"
#include "levelcast/features.hpp"
#include "levelcast/fm.hpp"
#include "levelcast/manifest.hpp"
#include "levelcast/synth.hpp"
#include "levelcast/trainer.hpp"

namespace lc = levelcast;
using nlohmann::json;

namespace {

std::string out_root() {
    const char* env = std::getenv("LEVELCAST_OUT");
    return env && *env ? env : "out";
}

std::string default_out(const char* cmd) { return out_root() + "/" + cmd; }

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw lc::IoError("cannot create directory " + dir + ": " + ec.message());
}

class Stopwatch {
public:
    double ms() const {
        return std::chrono::duration<double, std::milli>(
                   std::chrono::steady_clock::now() - start_)
            .count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

// Binds --config JSON keys to options; a key applies only when the flag was
// not given on the command line.
class OverrideSet {
public:
    template <typename T>
    void bind(CLI::Option* opt, T& var, std::string key) {
        appliers_.push_back([opt, &var, key = std::move(key)](const json& j) {
            if (opt->count() == 0 && j.contains(key)) var = j.at(key).get<T>();
        });
    }

    void apply(const std::string& config_path) const {
        if (config_path.empty()) return;
        std::ifstream in(config_path);
        if (!in) throw lc::IoError("cannot read config file " + config_path);
        json j;
        try {
            j = json::parse(in);
        } catch (const json::parse_error& e) {
            throw lc::ParseError("config file " + config_path + ": " + e.what(), 0);
        }
        if (!j.is_object()) throw lc::ConfigError("config file must hold a JSON object");
        for (const auto& f : appliers_) f(j);
    }

private:
    std::vector<std::function<void(const json&)>> appliers_;
};

void write_text_file(const std::string& path, const char* text) {
    std::ofstream out(path);
    if (!out) throw lc::IoError("cannot open " + path + " for writing");
    out << text;
}

constexpr const char* kSweepPlotScript = R"PY(#!/usr/bin/env python3
"""Plot the sweep metrics and per-level error curves emitted by `levelcast evaluate`.

Usage: python3 plot_sweep.py [result_dir] [output_dir]
"""
import csv
import os
import sys
from collections import defaultdict

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

result_dir = sys.argv[1] if len(sys.argv) > 1 else "."
out_dir = sys.argv[2] if len(sys.argv) > 2 else result_dir


def read_csv(name):
    with open(os.path.join(result_dir, name), newline="") as fh:
        return list(csv.DictReader(fh))


def run_label(row):
    return row["method"] if row["k"] == "0" else "%s k=%s" % (row["method"], row["k"])


metrics = read_csv("sweep_metrics.csv")
for metric in ("mae", "rmse"):
    fig, ax = plt.subplots(figsize=(7, 4.5))
    runs = defaultdict(list)
    for row in metrics:
        runs[run_label(row)].append(row)
    for label, rows in sorted(runs.items()):
        rows.sort(key=lambda r: int(r["checkpoint"]))
        x = [int(r["checkpoint"]) for r in rows]
        ax.plot(x, [float(r[metric]) for r in rows], marker="o", label=label)
        ax.fill_between(x, [float(r[metric + "_ci_lo"]) for r in rows],
                        [float(r[metric + "_ci_hi"]) for r in rows], alpha=0.2)
    ax.set_xlabel("observed levels")
    ax.set_ylabel(metric.upper())
    ax.set_title("%s on unseen levels vs observation horizon" % metric.upper())
    ax.legend()
    fig.tight_layout()
    fig.savefig(os.path.join(out_dir, "sweep_%s.png" % metric), dpi=150)
    plt.close(fig)

curves = read_csv("level_curve.csv")
if curves:
    groups = defaultdict(list)
    for row in curves:
        groups[(run_label(row), row["checkpoint"])].append(row)
    fig, ax = plt.subplots(figsize=(8, 4.5))
    for (label, ckpt), rows in sorted(groups.items()):
        rows.sort(key=lambda r: int(r["level"]))
        ax.plot([int(r["level"]) for r in rows],
                [float(r["smoothed_diff"]) for r in rows],
                label="%s @ %s" % (label, ckpt))
    ax.axhline(0.0, color="black", linewidth=0.8)
    ax.set_xlabel("level")
    ax.set_ylabel("MAE difference vs naive (smoothed)")
    ax.set_title("Per-level error difference (negative = better than naive)")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(os.path.join(out_dir, "level_curves.png"), dpi=150)
    plt.close(fig)

print("wrote plots to " + out_dir)
)PY";

constexpr const char* kFactorPlotScript = R"PY(#!/usr/bin/env python3
"""Plot factor tables and parameter histograms emitted by `levelcast analyze`.

Usage: python3 plot_factors.py [result_dir] [output_dir]
"""
import csv
import os
import sys
from collections import defaultdict

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

result_dir = sys.argv[1] if len(sys.argv) > 1 else "."
out_dir = sys.argv[2] if len(sys.argv) > 2 else result_dir


def read_csv(name):
    path = os.path.join(result_dir, name)
    if not os.path.exists(path):
        return []
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


hist = read_csv("param_histograms.csv")
series = defaultdict(list)
for row in hist:
    series[row["series"]].append(row)
if series:
    names = sorted(series)
    cols = 2
    rows_n = (len(names) + cols - 1) // cols
    fig, axes = plt.subplots(rows_n, cols, figsize=(9, 2.6 * rows_n), squeeze=False)
    for ax, name in zip(axes.flat, names):
        bins = series[name]
        lo = [float(b["bin_lo"]) for b in bins]
        width = [max(float(b["bin_hi"]) - float(b["bin_lo"]), 1e-9) for b in bins]
        ax.bar(lo, [int(b["count"]) for b in bins], width=width, align="edge")
        ax.set_title(name, fontsize=9)
    for ax in axes.flat[len(names):]:
        ax.axis("off")
    fig.tight_layout()
    fig.savefig(os.path.join(out_dir, "param_histograms.png"), dpi=150)
    plt.close(fig)


def scatter(ax, xs, ys, xlabel, ylabel):
    ax.scatter(xs, ys, s=8, alpha=0.6)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)


levels = [r for r in read_csv("factors_levels.csv") if r["has_stats"] == "1"]
players = [r for r in read_csv("factors_players.csv") if r["has_stats"] == "1"]

if levels:
    fig, axes = plt.subplots(1, 3, figsize=(12, 3.8))
    scatter(axes[0], [float(r["w"]) for r in levels],
            [float(r["avg_attempts"]) for r in levels], "level w", "avg attempts")
    if "v1" in levels[0]:
        scatter(axes[1], [float(r["v1"]) for r in levels],
                [float(r["norm_variance"]) for r in levels], "level v1", "normalized variance")
    if "v2" in levels[0]:
        scatter(axes[2], [int(r["level_number"]) for r in levels],
                [float(r["v2"]) for r in levels], "level number", "level v2")
    fig.tight_layout()
    fig.savefig(os.path.join(out_dir, "level_factors.png"), dpi=150)
    plt.close(fig)

if players and "v1" in players[0]:
    fig, ax = plt.subplots(figsize=(5, 4))
    scatter(ax, [float(r["v1"]) for r in players],
            [float(r["mean_attempts"]) for r in players], "player v1", "mean attempts")
    fig.tight_layout()
    fig.savefig(os.path.join(out_dir, "player_factors.png"), dpi=150)
    plt.close(fig)

print("wrote plots to " + out_dir)
)PY";

// ---------------------------------------------------------------------------
// generate

struct GenerateArgs {
    lc::SynthConfig synth;
    std::string out_dir = default_out("generate");
    std::string config_path;
};

void run_generate(const GenerateArgs& a) {
    Stopwatch clock;
    lc::SynthResult result = lc::generate(a.synth);
    ensure_dir(a.out_dir);
    const std::vector<std::string> outputs = {"interactions.csv", "level_attributes.csv",
                                              "telemetry.csv", "truth.csv"};
    lc::save_interactions(result.data, a.out_dir + "/interactions.csv");
    lc::save_level_attributes(result.attributes, a.out_dir + "/level_attributes.csv");
    lc::save_telemetry(result.telemetry, a.out_dir + "/telemetry.csv");
    lc::save_truth(result.truth, a.out_dir + "/truth.csv");

    lc::RunManifest manifest;
    manifest.command = "generate";
    manifest.config_json = json{{"players", a.synth.n_players},
                                {"levels", a.synth.n_levels},
                                {"seed", a.synth.seed},
                                {"skill_stdev", a.synth.skill_stdev},
                                {"consistency_stdev", a.synth.consistency_stdev},
                                {"gamma", a.synth.interaction_strength},
                                {"base_logit", a.synth.base_logit},
                                {"p_min", a.synth.p_min}}
                               .dump();
    manifest.seeds = {a.synth.seed};
    manifest.outputs = outputs;
    manifest.wall_ms = clock.ms();
    lc::write_manifest(manifest, a.out_dir);
    std::cout << "generated " << result.data.records.size() << " interactions for "
              << a.synth.n_players << " players x " << a.synth.n_levels << " levels in "
              << a.out_dir << "\n";
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
    std::string method;
    std::string data;
    std::string features;
    std::string telemetry;
    std::string out_dir = default_out("train");
    std::string config_path;
    lc::SplitSpec split{.observed_levels = 150};
    lc::McmcConfig mcmc;
    double init_stdev = 1.0;
    double fixed_alpha = 0.0;
    lc::RfConfig rf;

    CLI::Option* opt_factors = nullptr;
    CLI::Option* opt_iterations = nullptr;
    CLI::Option* opt_burn_in = nullptr;
    CLI::Option* opt_init_stdev = nullptr;
    CLI::Option* opt_fixed_alpha = nullptr;
    CLI::Option* opt_per_block = nullptr;
    CLI::Option* opt_trees = nullptr;
};

void check_method_flags(lc::Method m, const TrainArgs& a) {
    const auto forbid = [&](const CLI::Option* opt, const char* flag) {
        if (opt && opt->count() > 0)
            throw CLI::ValidationError(std::string(flag) + " cannot be combined with --method " +
                                       lc::method_name(m));
    };
    if (m == lc::Method::naive || m == lc::Method::rf) {
        forbid(a.opt_factors, "--factors");
        forbid(a.opt_iterations, "--iterations");
        forbid(a.opt_burn_in, "--burn-in");
        forbid(a.opt_init_stdev, "--init-stdev");
        forbid(a.opt_fixed_alpha, "--fixed-alpha");
        forbid(a.opt_per_block, "--per-block-groups");
    }
    if (m != lc::Method::rf) forbid(a.opt_trees, "--trees");
}

void run_train(const TrainArgs& a) {
    Stopwatch clock;
    const lc::Method method = lc::parse_method(a.method);
    check_method_flags(method, a);

    lc::Dataset data = lc::load_interactions(a.data);
    std::vector<lc::LevelAttributes> attrs;
    lc::TelemetryTable telemetry;
    const bool have_attrs = !a.features.empty();
    const bool have_telemetry = !a.telemetry.empty();
    if (have_attrs) attrs = lc::load_level_attributes(a.features);
    if (have_telemetry) telemetry = lc::load_telemetry(a.telemetry);
    if ((method == lc::Method::rf || method == lc::Method::fm_feat) && !have_attrs)
        throw lc::ConfigError("method " + lc::method_name(method) +
                              " requires level attributes (--features)");

    lc::Split split = lc::split_players(data, a.split);
    ensure_dir(a.out_dir);

    json config = {{"method", lc::method_name(method)},
                   {"data", a.data},
                   {"split",
                    {{"observed", a.split.observed_levels},
                     {"seed", a.split.seed},
                     {"test_fraction", a.split.test_fraction},
                     {"floor", a.split.eval_level_floor},
                     {"eligibility_floor", a.split.effective_eligibility_floor()}}}};
    std::vector<std::string> outputs = {"model.json", "split.json"};
    lc::write_split_manifest(split, a.split, a.out_dir + "/split.json");

    switch (method) {
    case lc::Method::naive: {
        lc::NaiveBaselineModel model =
            lc::fit_naive(lc::without_players(split.train, split.test_players));
        lc::save_naive(model, a.out_dir + "/model.json");
        break;
    }
    case lc::Method::rf: {
        lc::FeatureContext ctx =
            lc::FeatureContext::build(split, true, &attrs, have_telemetry ? &telemetry : nullptr,
                                      a.split.observed_levels);
        lc::RfConfig rf_cfg = a.rf;
        rf_cfg.seed = a.split.seed;
        lc::RfMatrices matrices = lc::build_rf_matrix(split, ctx);
        lc::RandomForestModel model = lc::fit_forest(matrices.train, rf_cfg);
        lc::save_forest(model, a.out_dir + "/model.json");
        lc::write_importances(model, ctx.rf_feature_names(), a.out_dir + "/importances.csv");
        outputs.push_back("importances.csv");
        config["rf"] = {{"trees", rf_cfg.n_estimators}, {"seed", rf_cfg.seed}};
        break;
    }
    case lc::Method::fm:
    case lc::Method::fm_feat: {
        const bool augment = method == lc::Method::fm_feat;
        lc::FeatureContext ctx = lc::FeatureContext::build(
            split, augment, have_attrs ? &attrs : nullptr,
            have_telemetry ? &telemetry : nullptr, a.split.observed_levels);
        lc::McmcConfig mcmc = a.mcmc;
        mcmc.seed = a.split.seed;
        mcmc.init_stdev = a.opt_init_stdev->count() > 0 ? a.init_stdev : (augment ? 0.1 : 1.0);
        if (a.opt_fixed_alpha->count() > 0) mcmc.fixed_alpha = a.fixed_alpha;
        std::vector<int> groups;
        const std::vector<int>* groups_ptr = nullptr;
        if (mcmc.per_block_groups) {
            groups = ctx.schema().block_groups();
            groups_ptr = &groups;
        }
        lc::RowBlock train_rows = ctx.encode_rows(split.train);
        lc::TrainResult result =
            lc::train_predict(train_rows, lc::RowBlock{}, ctx.schema().width(), mcmc, groups_ptr);
        result.posterior_mean.schema_fingerprint = ctx.schema().fingerprint();

        json mcmc_json = {{"iterations", mcmc.iterations},
                          {"burn_in", mcmc.burn_in},
                          {"factors", mcmc.factor_count},
                          {"init_stdev", mcmc.init_stdev},
                          {"seed", mcmc.seed},
                          {"per_block_groups", mcmc.per_block_groups}};
        if (mcmc.fixed_alpha) mcmc_json["fixed_alpha"] = *mcmc.fixed_alpha;
        config["mcmc"] = mcmc_json;
        config["augment"] = augment;
        lc::save_fm_model(result.posterior_mean, a.out_dir + "/model.json", config.dump());
        ctx.schema().save(a.out_dir + "/schema.json");
        lc::write_training_log(result.log, a.out_dir + "/training_log.csv");
        outputs.push_back("schema.json");
        outputs.push_back("training_log.csv");
        break;
    }
    }

    lc::RunManifest manifest;
    manifest.command = "train";
    manifest.config_json = config.dump();
    manifest.input_hashes.emplace_back(a.data, lc::hash_file(a.data));
    if (have_attrs) manifest.input_hashes.emplace_back(a.features, lc::hash_file(a.features));
    if (have_telemetry)
        manifest.input_hashes.emplace_back(a.telemetry, lc::hash_file(a.telemetry));
    manifest.seeds = {a.split.seed};
    manifest.outputs = outputs;
    manifest.wall_ms = clock.ms();
    lc::write_manifest(manifest, a.out_dir);
    std::cout << "trained " << lc::method_name(method) << " model in " << a.out_dir << "\n";
}

// ---------------------------------------------------------------------------
// evaluate

struct EvaluateArgs {
    std::string data;
    std::string features;
    std::string telemetry;
    std::string out_dir = default_out("evaluate");
    std::string config_path;
    std::vector<std::int32_t> checkpoints = {10, 20, 30, 50, 100, 150};
    std::vector<std::string> methods = {"naive", "fm"};
    std::vector<std::uint32_t> factors = {8};
    std::vector<std::uint64_t> seeds = {1};
    lc::SplitSpec split;
    lc::SweepSpec sweep;
    bool plot_script = false;
};

void run_evaluate(const EvaluateArgs& a) {
    Stopwatch clock;
    lc::Dataset data = lc::load_interactions(a.data);
    std::vector<lc::LevelAttributes> attrs;
    lc::TelemetryTable telemetry;
    const bool have_attrs = !a.features.empty();
    const bool have_telemetry = !a.telemetry.empty();
    if (have_attrs) attrs = lc::load_level_attributes(a.features);
    if (have_telemetry) telemetry = lc::load_telemetry(a.telemetry);

    lc::SweepSpec spec = a.sweep;
    spec.checkpoints = a.checkpoints;
    spec.factor_counts = a.factors;
    spec.seeds = a.seeds;
    spec.methods.clear();
    for (const std::string& m : a.methods) spec.methods.push_back(lc::parse_method(m));

    lc::SweepInputs inputs;
    inputs.data = &data;
    inputs.attributes = have_attrs ? &attrs : nullptr;
    inputs.telemetry = have_telemetry ? &telemetry : nullptr;

    lc::EvaluationReport report = lc::run_sweep(inputs, spec, a.split);

    ensure_dir(a.out_dir);
    lc::write_report_json(report, a.out_dir + "/report.json");
    lc::write_sweep_csv(report, a.out_dir + "/sweep_metrics.csv");
    lc::write_curve_csv(report, a.out_dir + "/level_curve.csv");
    lc::write_prediction_dumps(report, a.out_dir);
    std::vector<std::string> outputs = {"report.json", "sweep_metrics.csv", "level_curve.csv"};
    for (const auto& d : report.dumps) {
        std::string token = lc::method_name(d.method);
        if (d.k > 0) token += "_k" + std::to_string(d.k);
        outputs.push_back("predictions_" + token + "_" + std::to_string(d.checkpoint) + "_seed" +
                          std::to_string(d.seed) + ".csv");
    }
    if (a.plot_script) {
        write_text_file(a.out_dir + "/plot_sweep.py", kSweepPlotScript);
        outputs.push_back("plot_sweep.py");
    }

    json config = {{"data", a.data},
                   {"checkpoints", spec.checkpoints},
                   {"methods", a.methods},
                   {"factors", spec.factor_counts},
                   {"seeds", spec.seeds},
                   {"floor", a.split.eval_level_floor},
                   {"test_fraction", a.split.test_fraction},
                   {"iterations", spec.mcmc.iterations},
                   {"burn_in", spec.mcmc.burn_in},
                   {"init_stdev", spec.init_stdev_fm},
                   {"init_stdev_feat", spec.init_stdev_fm_feat},
                   {"trees", spec.rf.n_estimators},
                   {"curve_window", spec.curve_window}};

    lc::RunManifest manifest;
    manifest.command = "evaluate";
    manifest.config_json = config.dump();
    manifest.input_hashes.emplace_back(a.data, lc::hash_file(a.data));
    if (have_attrs) manifest.input_hashes.emplace_back(a.features, lc::hash_file(a.features));
    if (have_telemetry)
        manifest.input_hashes.emplace_back(a.telemetry, lc::hash_file(a.telemetry));
    manifest.seeds = spec.seeds;
    manifest.outputs = outputs;
    manifest.wall_ms = clock.ms();
    lc::write_manifest(manifest, a.out_dir);
    std::cout << "evaluated " << report.cells.size() << " (method, checkpoint) cells over "
              << spec.seeds.size() << " seed(s) in " << a.out_dir << "\n";
}

// ---------------------------------------------------------------------------
// analyze

struct AnalyzeArgs {
    std::string model;
    std::string schema;
    std::string data;
    std::string truth;
    std::string out_dir = default_out("analyze");
    std::string config_path;
    lc::SplitSpec split{.observed_levels = 150};
    bool norm_variance_squared = false;
    bool plot_script = false;

    CLI::Option* opt_observed = nullptr;
    CLI::Option* opt_seed = nullptr;
    CLI::Option* opt_test_fraction = nullptr;
    CLI::Option* opt_floor = nullptr;
};

void run_analyze(const AnalyzeArgs& a) {
    Stopwatch clock;
    std::string meta_json;
    lc::FmModel model = lc::load_fm_model(a.model, &meta_json);

    std::string schema_path = a.schema;
    if (schema_path.empty()) {
        std::filesystem::path parent = std::filesystem::path(a.model).parent_path();
        schema_path = (parent.empty() ? std::filesystem::path(".") : parent) / "schema.json";
    }
    lc::FeatureSchema schema = lc::FeatureSchema::load(schema_path);
    lc::Dataset data = lc::load_interactions(a.data);

    // The model's own training split is rebuilt from its embedded metadata;
    // explicit flags override it.
    lc::SplitSpec split_spec = a.split;
    if (!meta_json.empty()) {
        const json meta = json::parse(meta_json);
        if (meta.contains("split")) {
            const json& s = meta.at("split");
            if (a.opt_observed->count() == 0 && s.contains("observed"))
                split_spec.observed_levels = s.at("observed").get<std::int32_t>();
            if (a.opt_seed->count() == 0 && s.contains("seed"))
                split_spec.seed = s.at("seed").get<std::uint64_t>();
            if (a.opt_test_fraction->count() == 0 && s.contains("test_fraction"))
                split_spec.test_fraction = s.at("test_fraction").get<double>();
            if (a.opt_floor->count() == 0 && s.contains("floor"))
                split_spec.eval_level_floor = s.at("floor").get<std::int32_t>();
        }
    }
    lc::Split split = lc::split_players(data, split_spec);

    lc::FactorTables tables = lc::build_factor_tables(model, schema, split.train);
    lc::canonicalize_factors(tables);

    lc::TruthColumns truth_cols;
    const bool have_truth = !a.truth.empty();
    if (have_truth) truth_cols = lc::truth_columns(lc::load_truth(a.truth));
    lc::CorrelationReport correlations = lc::interpretation_report(
        tables, have_truth ? &truth_cols : nullptr, a.norm_variance_squared);

    ensure_dir(a.out_dir);
    lc::write_factor_table_csv(tables.players, a.out_dir + "/factors_players.csv");
    lc::write_factor_table_csv(tables.levels, a.out_dir + "/factors_levels.csv");
    lc::write_histograms_csv(lc::parameter_histograms(tables),
                             a.out_dir + "/param_histograms.csv");
    lc::write_correlations_csv(correlations, a.out_dir + "/correlations.csv");
    std::vector<std::string> outputs = {"factors_players.csv", "factors_levels.csv",
                                        "param_histograms.csv", "correlations.csv"};
    if (a.plot_script) {
        write_text_file(a.out_dir + "/plot_factors.py", kFactorPlotScript);
        outputs.push_back("plot_factors.py");
    }

    json config = {{"model", a.model},
                   {"schema", schema_path},
                   {"data", a.data},
                   {"norm_variance_squared", a.norm_variance_squared},
                   {"split",
                    {{"observed", split_spec.observed_levels},
                     {"seed", split_spec.seed},
                     {"test_fraction", split_spec.test_fraction},
                     {"floor", split_spec.eval_level_floor}}}};
    if (have_truth) config["truth"] = a.truth;

    lc::RunManifest manifest;
    manifest.command = "analyze";
    manifest.config_json = config.dump();
    manifest.input_hashes.emplace_back(a.model, lc::hash_file(a.model));
    manifest.input_hashes.emplace_back(schema_path, lc::hash_file(schema_path));
    manifest.input_hashes.emplace_back(a.data, lc::hash_file(a.data));
    if (have_truth) manifest.input_hashes.emplace_back(a.truth, lc::hash_file(a.truth));
    manifest.seeds = {split_spec.seed};
    manifest.outputs = outputs;
    manifest.wall_ms = clock.ms();
    lc::write_manifest(manifest, a.out_dir);
    std::cout << "analyzed " << tables.players.rows.size() << " players and "
              << tables.levels.rows.size() << " levels into " << a.out_dir << "\n";
}

// ---------------------------------------------------------------------------

void add_generate(CLI::App& app) {
    auto args = std::make_shared<GenerateArgs>();
    auto ov = std::make_shared<OverrideSet>();
    CLI::App* cmd = app.add_subcommand(
        "generate", "Generate a synthetic telemetry dataset with known latent structure");
    ov->bind(cmd->add_option("--players", args->synth.n_players, "Number of players")
                 ->check(CLI::PositiveNumber),
             args->synth.n_players, "players");
    ov->bind(cmd->add_option("--levels", args->synth.n_levels, "Number of levels")
                 ->check(CLI::PositiveNumber),
             args->synth.n_levels, "levels");
    ov->bind(cmd->add_option("--seed", args->synth.seed, "Generator seed"), args->synth.seed,
             "seed");
    ov->bind(cmd->add_option("--skill-stdev", args->synth.skill_stdev, "Player skill spread"),
             args->synth.skill_stdev, "skill_stdev");
    ov->bind(cmd->add_option("--consistency-stdev", args->synth.consistency_stdev,
                             "Player consistency spread"),
             args->synth.consistency_stdev, "consistency_stdev");
    ov->bind(cmd->add_option("--gamma", args->synth.interaction_strength,
                             "Consistency x variance interaction strength"),
             args->synth.interaction_strength, "gamma");
    ov->bind(cmd->add_option("--base-logit", args->synth.base_logit,
                             "Base success logit before difficulty/skill"),
             args->synth.base_logit, "base_logit");
    ov->bind(cmd->add_option("--p-min", args->synth.p_min, "Success probability floor"),
             args->synth.p_min, "p_min");
    ov->bind(cmd->add_option("--out-dir", args->out_dir, "Output directory")
                 ->capture_default_str(),
             args->out_dir, "out_dir");
    cmd->add_option("--config", args->config_path, "JSON file supplying unset flags");
    cmd->callback([args, ov] {
        ov->apply(args->config_path);
        run_generate(*args);
    });
}

void add_train(CLI::App& app) {
    auto args = std::make_shared<TrainArgs>();
    auto ov = std::make_shared<OverrideSet>();
    CLI::App* cmd = app.add_subcommand("train", "Train a model on an interaction dataset");
    cmd->add_option("--method", args->method, "Model to fit")
        ->required()
        ->check(CLI::IsMember({"naive", "rf", "fm", "fm-feat"}));
    ov->bind(cmd->add_option("--data", args->data, "Interactions CSV")->required(), args->data,
             "data");
    ov->bind(cmd->add_option("--features", args->features, "Level attributes CSV"),
             args->features, "features");
    ov->bind(cmd->add_option("--telemetry", args->telemetry, "Per-interaction behavior CSV"),
             args->telemetry, "telemetry");
    ov->bind(cmd->add_option("--observed", args->split.observed_levels,
                             "Observation horizon for test players")
                 ->check(CLI::PositiveNumber)
                 ->capture_default_str(),
             args->split.observed_levels, "observed");
    ov->bind(cmd->add_option("--test-fraction", args->split.test_fraction,
                             "Held-out player fraction")
                 ->capture_default_str(),
             args->split.test_fraction, "test_fraction");
    ov->bind(cmd->add_option("--floor", args->split.eval_level_floor,
                             "Evaluate only levels above this")
                 ->capture_default_str(),
             args->split.eval_level_floor, "floor");
    ov->bind(cmd->add_option("--seed", args->split.seed, "Split and chain seed"),
             args->split.seed, "seed");
    args->opt_factors =
        cmd->add_option("--factors", args->mcmc.factor_count, "FM factor count (1,2,4,8,16,32)");
    ov->bind(args->opt_factors, args->mcmc.factor_count, "factors");
    args->opt_iterations =
        cmd->add_option("--iterations", args->mcmc.iterations, "MCMC sweeps")
            ->capture_default_str();
    ov->bind(args->opt_iterations, args->mcmc.iterations, "iterations");
    args->opt_burn_in = cmd->add_option("--burn-in", args->mcmc.burn_in, "Discarded sweeps")
                            ->capture_default_str();
    ov->bind(args->opt_burn_in, args->mcmc.burn_in, "burn_in");
    args->opt_init_stdev = cmd->add_option("--init-stdev", args->init_stdev,
                                           "Factor init spread (default 1.0; 0.1 for fm-feat)");
    args->opt_fixed_alpha =
        cmd->add_option("--fixed-alpha", args->fixed_alpha, "Hold noise precision fixed");
    args->opt_per_block = cmd->add_flag("--per-block-groups", args->mcmc.per_block_groups,
                                        "One hyperprior group per schema block");
    args->opt_trees =
        cmd->add_option("--trees", args->rf.n_estimators, "Forest size")->capture_default_str();
    ov->bind(args->opt_trees, args->rf.n_estimators, "trees");
    ov->bind(cmd->add_option("--out-dir", args->out_dir, "Output directory")
                 ->capture_default_str(),
             args->out_dir, "out_dir");
    cmd->add_option("--config", args->config_path, "JSON file supplying unset flags");
    cmd->callback([args, ov] {
        ov->apply(args->config_path);
        run_train(*args);
    });
}

void add_evaluate(CLI::App& app) {
    auto args = std::make_shared<EvaluateArgs>();
    auto ov = std::make_shared<OverrideSet>();
    CLI::App* cmd = app.add_subcommand(
        "evaluate", "Run the observed-level sweep and emit metric and curve CSVs");
    ov->bind(cmd->add_option("--data", args->data, "Interactions CSV")->required(), args->data,
             "data");
    ov->bind(cmd->add_option("--features", args->features, "Level attributes CSV"),
             args->features, "features");
    ov->bind(cmd->add_option("--telemetry", args->telemetry, "Per-interaction behavior CSV"),
             args->telemetry, "telemetry");
    ov->bind(cmd->add_option("--checkpoints", args->checkpoints,
                             "Observation horizons (default 10,20,30,50,100,150)")
                 ->delimiter(','),
             args->checkpoints, "checkpoints");
    ov->bind(cmd->add_option("--methods", args->methods, "Methods to run (default naive,fm)")
                 ->delimiter(',')
                 ->check(CLI::IsMember({"naive", "rf", "fm", "fm-feat"})),
             args->methods, "methods");
    ov->bind(cmd->add_option("--factors", args->factors, "FM factor counts (default 8)")
                 ->delimiter(','),
             args->factors, "factors");
    ov->bind(cmd->add_option("--seeds", args->seeds, "Split/chain seeds (default 1)")
                 ->delimiter(','),
             args->seeds, "seeds");
    ov->bind(cmd->add_option("--floor", args->split.eval_level_floor,
                             "Score only levels above this")
                 ->capture_default_str(),
             args->split.eval_level_floor, "floor");
    ov->bind(cmd->add_option("--test-fraction", args->split.test_fraction,
                             "Held-out player fraction")
                 ->capture_default_str(),
             args->split.test_fraction, "test_fraction");
    ov->bind(cmd->add_option("--iterations", args->sweep.mcmc.iterations, "MCMC sweeps")
                 ->capture_default_str(),
             args->sweep.mcmc.iterations, "iterations");
    ov->bind(cmd->add_option("--burn-in", args->sweep.mcmc.burn_in, "Discarded sweeps")
                 ->capture_default_str(),
             args->sweep.mcmc.burn_in, "burn_in");
    ov->bind(cmd->add_option("--init-stdev", args->sweep.init_stdev_fm, "FM factor init spread")
                 ->capture_default_str(),
             args->sweep.init_stdev_fm, "init_stdev");
    ov->bind(cmd->add_option("--init-stdev-feat", args->sweep.init_stdev_fm_feat,
                             "fm-feat factor init spread")
                 ->capture_default_str(),
             args->sweep.init_stdev_fm_feat, "init_stdev_feat");
    ov->bind(cmd->add_option("--trees", args->sweep.rf.n_estimators, "Forest size")
                 ->capture_default_str(),
             args->sweep.rf.n_estimators, "trees");
    ov->bind(cmd->add_option("--curve-window", args->sweep.curve_window,
                             "Rolling-mean window for level curves")
                 ->capture_default_str(),
             args->sweep.curve_window, "curve_window");
    cmd->add_flag("--per-block-groups", args->sweep.mcmc.per_block_groups,
                  "One hyperprior group per schema block");
    ov->bind(cmd->add_option("--out-dir", args->out_dir, "Output directory")
                 ->capture_default_str(),
             args->out_dir, "out_dir");
    cmd->add_flag("--plot-script", args->plot_script, "Also emit a matplotlib recipe");
    cmd->add_option("--config", args->config_path, "JSON file supplying unset flags");
    cmd->callback([args, ov] {
        ov->apply(args->config_path);
        run_evaluate(*args);
    });
}

void add_analyze(CLI::App& app) {
    auto args = std::make_shared<AnalyzeArgs>();
    auto ov = std::make_shared<OverrideSet>();
    CLI::App* cmd = app.add_subcommand(
        "analyze",
        "Export factor tables, parameter histograms and rank correlations for a trained model");
    ov->bind(cmd->add_option("--model", args->model, "Serialized FM model")->required(),
             args->model, "model");
    ov->bind(cmd->add_option("--schema", args->schema,
                             "Feature schema (default: schema.json next to the model)"),
             args->schema, "schema");
    ov->bind(cmd->add_option("--data", args->data, "Interactions CSV")->required(), args->data,
             "data");
    ov->bind(cmd->add_option("--truth", args->truth, "Synthetic truth CSV"), args->truth,
             "truth");
    args->opt_observed = cmd->add_option("--observed", args->split.observed_levels,
                                         "Override the model's observation horizon");
    args->opt_seed = cmd->add_option("--seed", args->split.seed, "Override the split seed");
    args->opt_test_fraction = cmd->add_option("--test-fraction", args->split.test_fraction,
                                              "Override the held-out fraction");
    args->opt_floor =
        cmd->add_option("--floor", args->split.eval_level_floor, "Override the eval floor");
    cmd->add_flag("--norm-variance-sq", args->norm_variance_squared,
                  "Correlate v1 against variance/mean^2 instead of variance/mean");
    ov->bind(cmd->add_option("--out-dir", args->out_dir, "Output directory")
                 ->capture_default_str(),
             args->out_dir, "out_dir");
    cmd->add_flag("--plot-script", args->plot_script, "Also emit a matplotlib recipe");
    cmd->add_option("--config", args->config_path, "JSON file supplying unset flags");
    cmd->callback([args, ov] {
        ov->apply(args->config_path);
        run_analyze(*args);
    });
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Attempt-count prediction toolkit for puzzle-game telemetry"};
    app.set_version_flag("--version", lc::kToolVersion);
    app.require_subcommand(1);
    add_generate(app);
    add_train(app);
    add_evaluate(app);
    add_analyze(app);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const lc::DivergenceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const lc::IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 5;
    } catch (const lc::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const lc::ContractError& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
