#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "levelcast/baselines.hpp"
#include "levelcast/dataset.hpp"
#include "levelcast/features.hpp"
#include "levelcast/trainer.hpp"

namespace levelcast {

enum class Method { naive, rf, fm, fm_feat };

std::string method_name(Method m);
Method parse_method(const std::string& name); // ConfigError on unknown name

double mae(std::span<const double> pred, std::span<const double> truth);
double rmse(std::span<const double> pred, std::span<const double> truth);

struct Ci95 {
    double lo = 0.0;
    double hi = 0.0;
};

// Normal-approximation interval around the mean absolute error:
// mae ± 1.96 · std(|err|) / √n.
Ci95 mae_ci(std::span<const double> pred, std::span<const double> truth);
// Same construction on the squared errors, then √ of both ends.
Ci95 rmse_ci(std::span<const double> pred, std::span<const double> truth);
// Interval over a handful of per-seed metric values.
Ci95 seed_ci(std::span<const double> per_seed_values);

// Centered moving mean; a window of size w covers [i−(w−1)/2, i+w/2],
// truncated at the series edges.
std::vector<double> rolling_mean(std::span<const double> values, int window);

struct SweepSpec {
    std::vector<std::int32_t> checkpoints = {10, 20, 30, 50, 100, 150};
    std::vector<Method> methods = {Method::naive, Method::fm};
    std::vector<std::uint32_t> factor_counts = {8};
    std::vector<std::uint64_t> seeds = {1};
    // Template for the FM runs; init_stdev is taken from init_stdev_fm /
    // init_stdev_fm_feat instead, and seed/factor_count are filled per run.
    McmcConfig mcmc;
    double init_stdev_fm = 1.0;
    double init_stdev_fm_feat = 0.1;
    RfConfig rf;
    int curve_window = 12;
};

struct MetricCell {
    Method method = Method::naive;
    std::uint32_t k = 0; // 0 for naive / rf
    std::int32_t checkpoint = 0;
    double mae = 0.0;
    double rmse = 0.0;
    Ci95 mae_ci, rmse_ci;                          // per-row, pooled over seeds
    std::optional<Ci95> mae_seed_ci, rmse_seed_ci; // present with >= 3 seeds
    std::size_t n_test_rows = 0;
};

// All predicted rows of one (method, k, checkpoint, seed) run: every record
// of a test player past the observation horizon. Rows at levels above the
// eval floor are the headline test set; the rest exist for the per-level
// curves.
struct PredictionDump {
    Method method = Method::naive;
    std::uint32_t k = 0;
    std::int32_t checkpoint = 0;
    std::uint64_t seed = 0;
    std::vector<std::string> player_ids;
    std::vector<std::int32_t> level_ids;
    std::vector<double> truth;
    std::vector<double> pred; // clamped to [1, kAttemptCap]
};

struct LevelCurve {
    Method method = Method::naive;
    std::uint32_t k = 0;
    std::int32_t checkpoint = 0;
    std::vector<std::int32_t> levels;
    std::vector<double> raw_diff;      // per-level MAE(method) − MAE(naive)
    std::vector<double> smoothed_diff; // rolling_mean of raw_diff
};

struct EvaluationReport {
    SplitSpec split_template;
    std::vector<std::uint64_t> seeds;
    std::vector<MetricCell> cells;
    std::vector<LevelCurve> curves;
    std::vector<PredictionDump> dumps;
};

// One row of the joined method/baseline prediction stream feeding a curve.
struct CurveInputRow {
    std::int32_t level = 0;
    double truth = 0.0;
    double method_pred = 0.0;
    double baseline_pred = 0.0;
};

// Per-level mean |error| difference, smoothed with the centered window.
LevelCurve per_level_error_curve(std::span<const CurveInputRow> rows, int window = 12);

struct SweepInputs {
    const Dataset* data = nullptr;
    const std::vector<LevelAttributes>* attributes = nullptr; // for rf / fm_feat
    const TelemetryTable* telemetry = nullptr;                // optional enrichment
};

// The full experimental protocol: per seed and checkpoint, re-split with
// the same test players, fit every requested method, predict all rows past
// the horizon, and aggregate metrics over levels above the eval floor.
EvaluationReport run_sweep(const SweepInputs& in, const SweepSpec& spec,
                           const SplitSpec& split_template);

void write_report_json(const EvaluationReport& report, const std::string& path);
void write_sweep_csv(const EvaluationReport& report, const std::string& path);
void write_curve_csv(const EvaluationReport& report, const std::string& path);
// One predictions_<method>[_k<k>]_<checkpoint>_seed<seed>.csv per dump.
void write_prediction_dumps(const EvaluationReport& report, const std::string& dir);

} // namespace levelcast
