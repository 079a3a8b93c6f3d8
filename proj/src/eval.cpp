#include "levelcast/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "levelcast/errors.hpp"
#include "levelcast/rng.hpp"

namespace levelcast {

std::string method_name(Method m) {
    switch (m) {
    case Method::naive: return "naive";
    case Method::rf: return "rf";
    case Method::fm: return "fm";
    case Method::fm_feat: return "fm_feat";
    }
    throw ContractError("method_name: bad enum value");
}

Method parse_method(const std::string& name) {
    if (name == "naive") return Method::naive;
    if (name == "rf") return Method::rf;
    if (name == "fm") return Method::fm;
    if (name == "fm_feat" || name == "fm-feat") return Method::fm_feat;
    throw ConfigError("unknown method '" + name + "' (expected naive, rf, fm or fm-feat)");
}

namespace {

void check_pair(std::span<const double> pred, std::span<const double> truth, const char* who) {
    if (pred.size() != truth.size())
        throw ContractError(std::string(who) + ": length mismatch (" +
                            std::to_string(pred.size()) + " vs " + std::to_string(truth.size()) +
                            ")");
    if (pred.empty()) throw ContractError(std::string(who) + ": empty input");
}

Ci95 normal_ci(std::span<const double> values) {
    const double n = static_cast<double>(values.size());
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    var /= n;
    const double half = 1.96 * std::sqrt(var / n);
    return {mean - half, mean + half};
}

} // namespace

double mae(std::span<const double> pred, std::span<const double> truth) {
    check_pair(pred, truth, "mae");
    double sum = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) sum += std::abs(pred[i] - truth[i]);
    return sum / static_cast<double>(pred.size());
}

double rmse(std::span<const double> pred, std::span<const double> truth) {
    check_pair(pred, truth, "rmse");
    double sum = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - truth[i];
        sum += d * d;
    }
    return std::sqrt(sum / static_cast<double>(pred.size()));
}

Ci95 mae_ci(std::span<const double> pred, std::span<const double> truth) {
    check_pair(pred, truth, "mae_ci");
    std::vector<double> abs_err(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) abs_err[i] = std::abs(pred[i] - truth[i]);
    return normal_ci(abs_err);
}

Ci95 rmse_ci(std::span<const double> pred, std::span<const double> truth) {
    check_pair(pred, truth, "rmse_ci");
    std::vector<double> sq_err(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - truth[i];
        sq_err[i] = d * d;
    }
    Ci95 ci = normal_ci(sq_err);
    return {std::sqrt(std::max(0.0, ci.lo)), std::sqrt(std::max(0.0, ci.hi))};
}

Ci95 seed_ci(std::span<const double> per_seed_values) {
    if (per_seed_values.size() < 2) throw ContractError("seed_ci: need at least 2 values");
    const double n = static_cast<double>(per_seed_values.size());
    double mean = 0.0;
    for (double v : per_seed_values) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : per_seed_values) var += (v - mean) * (v - mean);
    var /= (n - 1.0);
    const double half = 1.96 * std::sqrt(var / n);
    return {mean - half, mean + half};
}

std::vector<double> rolling_mean(std::span<const double> values, int window) {
    if (window < 1) throw ContractError("rolling_mean: window must be positive");
    if (values.empty()) throw ContractError("rolling_mean: empty series");
    const int n = static_cast<int>(values.size());
    const int before = (window - 1) / 2;
    const int after = window / 2;
    std::vector<double> out(values.size());
    for (int i = 0; i < n; ++i) {
        const int lo = std::max(0, i - before);
        const int hi = std::min(n - 1, i + after);
        double sum = 0.0;
        for (int j = lo; j <= hi; ++j) sum += values[static_cast<std::size_t>(j)];
        out[static_cast<std::size_t>(i)] = sum / static_cast<double>(hi - lo + 1);
    }
    return out;
}

LevelCurve per_level_error_curve(std::span<const CurveInputRow> rows, int window) {
    if (rows.empty()) throw ContractError("per_level_error_curve: empty level range");
    struct Acc {
        double method_err = 0.0;
        double baseline_err = 0.0;
        std::size_t n = 0;
    };
    std::map<std::int32_t, Acc> per_level;
    for (const auto& r : rows) {
        Acc& a = per_level[r.level];
        a.method_err += std::abs(r.method_pred - r.truth);
        a.baseline_err += std::abs(r.baseline_pred - r.truth);
        ++a.n;
    }
    LevelCurve curve;
    for (const auto& [level, a] : per_level) {
        curve.levels.push_back(level);
        curve.raw_diff.push_back((a.method_err - a.baseline_err) / static_cast<double>(a.n));
    }
    curve.smoothed_diff = rolling_mean(curve.raw_diff, window);
    return curve;
}

// ---------------------------------------------------------------------------
// Sweep runner

namespace {

bool needs_features(Method m) { return m == Method::rf || m == Method::fm_feat; }

void validate_sweep(const SweepInputs& in, const SweepSpec& spec, const SplitSpec& split_template) {
    if (!in.data) throw ContractError("run_sweep: no dataset");
    if (spec.checkpoints.empty()) throw ConfigError("sweep needs at least one checkpoint");
    for (std::size_t i = 1; i < spec.checkpoints.size(); ++i)
        if (spec.checkpoints[i] <= spec.checkpoints[i - 1])
            throw ConfigError("checkpoints must be strictly increasing");
    if (spec.checkpoints.front() < 1) throw ConfigError("checkpoints must be positive");
    if (spec.checkpoints.back() > split_template.eval_level_floor)
        throw ConfigError("checkpoint " + std::to_string(spec.checkpoints.back()) +
                          " exceeds the eval level floor " +
                          std::to_string(split_template.eval_level_floor));
    if (spec.methods.empty()) throw ConfigError("sweep needs at least one method");
    if (spec.seeds.empty()) throw ConfigError("sweep needs at least one seed");
    const bool any_fm = std::any_of(spec.methods.begin(), spec.methods.end(), [](Method m) {
        return m == Method::fm || m == Method::fm_feat;
    });
    if (any_fm) {
        if (spec.factor_counts.empty())
            throw ConfigError("FM methods need at least one factor count");
        for (std::uint32_t k : spec.factor_counts) {
            McmcConfig probe = spec.mcmc;
            probe.factor_count = k;
            validate(probe);
        }
    }
    for (Method m : spec.methods)
        if (needs_features(m) && !in.attributes)
            throw ConfigError("method " + method_name(m) +
                              " requires level attributes (--features)");
    if (spec.curve_window < 1) throw ConfigError("curve window must be positive");
}

std::vector<double> clamp_all(std::vector<double> preds) {
    for (double& p : preds) p = std::clamp(p, 1.0, static_cast<double>(kAttemptCap));
    return preds;
}

RfMatrix rf_matrix_for(const FeatureContext& ctx, const Dataset& d) {
    RfMatrix m;
    m.feature_names = ctx.rf_feature_names();
    m.cols = m.feature_names.size();
    m.rows = d.records.size();
    m.data.reserve(m.rows * m.cols);
    std::vector<double> row;
    for (const auto& r : d.records) {
        ctx.rf_features(r, row);
        m.data.insert(m.data.end(), row.begin(), row.end());
        m.targets.push_back(r.attempts);
    }
    return m;
}

struct RunKey {
    Method method;
    std::uint32_t k;
    std::int32_t checkpoint;
    auto operator<=>(const RunKey&) const = default;
};

} // namespace

EvaluationReport run_sweep(const SweepInputs& in, const SweepSpec& spec,
                           const SplitSpec& split_template) {
    validate_sweep(in, spec, split_template);

    EvaluationReport report;
    report.split_template = split_template;
    report.seeds = spec.seeds;

    // Per (seed, checkpoint): the shared forward rows and the naive
    // predictions every curve is measured against.
    struct SharedRows {
        Dataset forward;
        std::vector<double> naive_pred;
    };
    std::map<std::pair<std::uint64_t, std::int32_t>, SharedRows> shared;

    for (std::uint64_t seed : spec.seeds) {
        for (std::int32_t ckpt : spec.checkpoints) {
            SplitSpec ss = split_template;
            ss.seed = seed;
            ss.observed_levels = ckpt;
            Split split = split_players(*in.data, ss);

            std::vector<InteractionRecord> fwd;
            for (const auto& r : in.data->records)
                if (split.test_players.count(r.player_id) && r.level_id > ckpt)
                    fwd.push_back(r);
            SharedRows& sh = shared[{seed, ckpt}];
            sh.forward = make_dataset(std::move(fwd));

            NaiveBaselineModel naive = fit_naive(without_players(split.train, split.test_players));
            sh.naive_pred.reserve(sh.forward.records.size());
            for (const auto& r : sh.forward.records)
                sh.naive_pred.push_back(std::clamp(predict_naive(naive, r.level_id), 1.0,
                                                   static_cast<double>(kAttemptCap)));

            std::optional<FeatureContext> ctx_plain, ctx_aug;
            auto plain = [&]() -> const FeatureContext& {
                if (!ctx_plain)
                    ctx_plain = FeatureContext::build(split, false, nullptr, nullptr, ckpt);
                return *ctx_plain;
            };
            auto augmented = [&]() -> const FeatureContext& {
                if (!ctx_aug)
                    ctx_aug = FeatureContext::build(split, true, in.attributes, in.telemetry,
                                                    ckpt);
                return *ctx_aug;
            };

            auto push_dump = [&](Method method, std::uint32_t k, std::vector<double> preds) {
                PredictionDump dump;
                dump.method = method;
                dump.k = k;
                dump.checkpoint = ckpt;
                dump.seed = seed;
                for (const auto& r : sh.forward.records) {
                    dump.player_ids.push_back(r.player_id);
                    dump.level_ids.push_back(r.level_id);
                    dump.truth.push_back(r.attempts);
                }
                dump.pred = std::move(preds);
                report.dumps.push_back(std::move(dump));
            };

            for (Method method : spec.methods) {
                switch (method) {
                case Method::naive:
                    push_dump(method, 0, sh.naive_pred);
                    break;
                case Method::rf: {
                    const FeatureContext& ctx = augmented();
                    RfMatrix train_m = rf_matrix_for(ctx, split.train);
                    RfConfig rf_cfg = spec.rf;
                    rf_cfg.seed = derive_seed(seed, 0x52460000u + static_cast<std::uint64_t>(ckpt));
                    RandomForestModel forest = fit_forest(train_m, rf_cfg);
                    RfMatrix fwd_m = rf_matrix_for(ctx, sh.forward);
                    push_dump(method, 0, clamp_all(predict_forest_rows(forest, fwd_m)));
                    break;
                }
                case Method::fm:
                case Method::fm_feat: {
                    const FeatureContext& ctx =
                        method == Method::fm ? plain() : augmented();
                    RowBlock train_rows = ctx.encode_rows(split.train);
                    RowBlock fwd_rows = ctx.encode_rows(sh.forward);
                    for (std::uint32_t k : spec.factor_counts) {
                        McmcConfig mcmc = spec.mcmc;
                        mcmc.factor_count = k;
                        mcmc.init_stdev = method == Method::fm ? spec.init_stdev_fm
                                                               : spec.init_stdev_fm_feat;
                        mcmc.seed = derive_seed(
                            seed, (static_cast<std::uint64_t>(ckpt) << 8) | k |
                                      (method == Method::fm_feat ? 0x80u : 0u));
                        std::vector<int> groups;
                        const std::vector<int>* groups_ptr = nullptr;
                        if (mcmc.per_block_groups) {
                            groups = ctx.schema().block_groups();
                            groups_ptr = &groups;
                        }
                        TrainResult result = train_predict(train_rows, fwd_rows,
                                                           ctx.schema().width(), mcmc, groups_ptr);
                        push_dump(method, k, result.test_prediction.clamped());
                    }
                    break;
                }
                }
            }
        }
    }

    // Aggregate cells over levels above the floor, pooling seeds.
    const std::int32_t floor = split_template.eval_level_floor;
    std::vector<RunKey> keys;
    for (const auto& d : report.dumps) {
        RunKey key{d.method, d.k, d.checkpoint};
        if (std::find(keys.begin(), keys.end(), key) == keys.end()) keys.push_back(key);
    }
    for (const RunKey& key : keys) {
        std::vector<double> pooled_pred, pooled_truth;
        std::vector<double> seed_mae, seed_rmse;
        for (const auto& d : report.dumps) {
            if (RunKey{d.method, d.k, d.checkpoint} != key) continue;
            std::vector<double> pred, truth;
            for (std::size_t i = 0; i < d.level_ids.size(); ++i) {
                if (d.level_ids[i] <= floor) continue;
                pred.push_back(d.pred[i]);
                truth.push_back(d.truth[i]);
            }
            seed_mae.push_back(mae(pred, truth));
            seed_rmse.push_back(rmse(pred, truth));
            pooled_pred.insert(pooled_pred.end(), pred.begin(), pred.end());
            pooled_truth.insert(pooled_truth.end(), truth.begin(), truth.end());
        }
        MetricCell cell;
        cell.method = key.method;
        cell.k = key.k;
        cell.checkpoint = key.checkpoint;
        cell.mae = mae(pooled_pred, pooled_truth);
        cell.rmse = rmse(pooled_pred, pooled_truth);
        cell.mae_ci = mae_ci(pooled_pred, pooled_truth);
        cell.rmse_ci = rmse_ci(pooled_pred, pooled_truth);
        cell.n_test_rows = pooled_pred.size();
        if (seed_mae.size() >= 3) {
            cell.mae_seed_ci = seed_ci(seed_mae);
            cell.rmse_seed_ci = seed_ci(seed_rmse);
        }
        report.cells.push_back(cell);
    }

    // Per-level curves against the naive baseline, pooling seeds.
    for (const RunKey& key : keys) {
        if (key.method == Method::naive) continue;
        std::vector<CurveInputRow> rows;
        for (const auto& d : report.dumps) {
            if (RunKey{d.method, d.k, d.checkpoint} != key) continue;
            const SharedRows& sh = shared.at({d.seed, d.checkpoint});
            for (std::size_t i = 0; i < d.level_ids.size(); ++i)
                rows.push_back({d.level_ids[i], d.truth[i], d.pred[i], sh.naive_pred[i]});
        }
        LevelCurve curve = per_level_error_curve(rows, spec.curve_window);
        curve.method = key.method;
        curve.k = key.k;
        curve.checkpoint = key.checkpoint;
        report.curves.push_back(std::move(curve));
    }
    return report;
}

// ---------------------------------------------------------------------------
// Writers

namespace {

std::string run_token(Method method, std::uint32_t k) {
    std::string token = method_name(method);
    if (k > 0) token += "_k" + std::to_string(k);
    return token;
}

} // namespace

void write_report_json(const EvaluationReport& report, const std::string& path) {
    nlohmann::json j;
    j["split"] = {{"test_fraction", report.split_template.test_fraction},
                  {"eval_level_floor", report.split_template.eval_level_floor},
                  {"eligibility_floor", report.split_template.effective_eligibility_floor()}};
    j["seeds"] = report.seeds;
    nlohmann::json cells = nlohmann::json::array();
    for (const auto& c : report.cells) {
        nlohmann::json cell = {{"method", method_name(c.method)},
                               {"k", c.k},
                               {"checkpoint", c.checkpoint},
                               {"mae", c.mae},
                               {"rmse", c.rmse},
                               {"mae_ci", {c.mae_ci.lo, c.mae_ci.hi}},
                               {"rmse_ci", {c.rmse_ci.lo, c.rmse_ci.hi}},
                               {"n_test_rows", c.n_test_rows}};
        if (c.mae_seed_ci) cell["mae_seed_ci"] = {c.mae_seed_ci->lo, c.mae_seed_ci->hi};
        if (c.rmse_seed_ci) cell["rmse_seed_ci"] = {c.rmse_seed_ci->lo, c.rmse_seed_ci->hi};
        cells.push_back(std::move(cell));
    }
    j["cells"] = std::move(cells);
    nlohmann::json curves = nlohmann::json::array();
    for (const auto& c : report.curves)
        curves.push_back({{"method", method_name(c.method)},
                          {"k", c.k},
                          {"checkpoint", c.checkpoint},
                          {"levels", c.levels},
                          {"raw_diff", c.raw_diff},
                          {"smoothed_diff", c.smoothed_diff}});
    j["curves"] = std::move(curves);
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << j.dump(2) << '\n';
}

void write_sweep_csv(const EvaluationReport& report, const std::string& path) {
    CsvWriter w(path);
    w.write_row({"method", "k", "checkpoint", "mae", "rmse", "mae_ci_lo", "mae_ci_hi",
                 "rmse_ci_lo", "rmse_ci_hi", "mae_seed_ci_lo", "mae_seed_ci_hi",
                 "rmse_seed_ci_lo", "rmse_seed_ci_hi", "n_test_rows"});
    for (const auto& c : report.cells) {
        std::vector<std::string> row = {
            method_name(c.method),        std::to_string(c.k),
            std::to_string(c.checkpoint), fmt_double_exact(c.mae),
            fmt_double_exact(c.rmse),     fmt_double_exact(c.mae_ci.lo),
            fmt_double_exact(c.mae_ci.hi), fmt_double_exact(c.rmse_ci.lo),
            fmt_double_exact(c.rmse_ci.hi)};
        if (c.mae_seed_ci) {
            row.push_back(fmt_double_exact(c.mae_seed_ci->lo));
            row.push_back(fmt_double_exact(c.mae_seed_ci->hi));
            row.push_back(fmt_double_exact(c.rmse_seed_ci->lo));
            row.push_back(fmt_double_exact(c.rmse_seed_ci->hi));
        } else {
            row.insert(row.end(), {"", "", "", ""});
        }
        row.push_back(std::to_string(c.n_test_rows));
        w.write_row(row);
    }
    w.close();
}

void write_curve_csv(const EvaluationReport& report, const std::string& path) {
    CsvWriter w(path);
    w.write_row({"method", "k", "checkpoint", "level", "raw_diff", "smoothed_diff"});
    for (const auto& c : report.curves)
        for (std::size_t i = 0; i < c.levels.size(); ++i)
            w.write_row({method_name(c.method), std::to_string(c.k),
                         std::to_string(c.checkpoint), std::to_string(c.levels[i]),
                         fmt_double_exact(c.raw_diff[i]), fmt_double_exact(c.smoothed_diff[i])});
    w.close();
}

void write_prediction_dumps(const EvaluationReport& report, const std::string& dir) {
    for (const auto& d : report.dumps) {
        const std::string path = dir + "/predictions_" + run_token(d.method, d.k) + "_" +
                                 std::to_string(d.checkpoint) + "_seed" +
                                 std::to_string(d.seed) + ".csv";
        CsvWriter w(path);
        w.write_row({"player_id", "level_id", "truth", "pred"});
        for (std::size_t i = 0; i < d.pred.size(); ++i)
            w.write_row({d.player_ids[i], std::to_string(d.level_ids[i]),
                         fmt_double_exact(d.truth[i]), fmt_double_exact(d.pred[i])});
        w.close();
    }
}

} // namespace levelcast
