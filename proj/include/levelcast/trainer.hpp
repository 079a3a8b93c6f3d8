#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "levelcast/features.hpp"
#include "levelcast/fm.hpp"
#include "levelcast/rng.hpp"

namespace levelcast {

inline constexpr std::uint32_t kAllowedFactorCounts[] = {1, 2, 4, 8, 16, 32};

struct McmcConfig {
    std::uint32_t iterations = 1000;
    std::uint32_t burn_in = 50;
    std::uint32_t factor_count = 8; // must be one of kAllowedFactorCounts
    double init_stdev = 1.0;        // 0.1 is the augmented-row setting
    std::uint64_t seed = 0;
    // Diagnostic: hold the noise precision at this value instead of
    // sampling it.
    std::optional<double> fixed_alpha;
    // Hyperprior grouping is one group for all w plus one per factor column
    // by default; this splits each of those by schema block instead.
    bool per_block_groups = false;
};

// Throws ConfigError on any violated constraint.
void validate(const McmcConfig& config);

// Noise precision plus per-group prior means and precisions. Group ids:
// with B base groups (B = 1, or the block count when per-block grouping is
// on), w parameters use groups [0, B) and factor column f uses groups
// [B + f·B, B + (f+1)·B).
struct HyperState {
    double alpha = 1.0;
    std::vector<double> mu;
    std::vector<double> lambda;
};

struct PosteriorPrediction {
    std::vector<double> mean; // per test row, raw posterior-mean prediction
    std::uint32_t draws = 0;

    // mean clamped to the valid attempt range, the reported form.
    std::vector<double> clamped() const;
};

struct TrainLogEntry {
    std::uint32_t iteration = 0;
    double train_rmse = 0.0;
    double alpha = 0.0;
    double wall_ms = 0.0;
};
using TrainLogSink = std::function<void(const TrainLogEntry&)>;

void write_training_log(const std::vector<TrainLogEntry>& log, const std::string& path);

// One MCMC chain over a fixed training block. The constructor converts the
// rows to column-compressed form, initializes the model (w = 0, V entries
// i.i.d. Normal(0, init_stdev²)) and the residual cache. Each sweep samples
// alpha, the group hyperpriors, every w in ascending column order, then
// every V entry column-major by factor, maintaining the caches
// incrementally so a sweep costs O(nonzeros × k).
class GibbsTrainer {
public:
    // column_groups: schema block id per column, consulted only when
    // config.per_block_groups is set.
    GibbsTrainer(const RowBlock& train, std::uint32_t schema_width, const McmcConfig& config,
                 const std::vector<int>* column_groups = nullptr);

    void sweep();

    const FmModel& model() const { return model_; }
    FmModel& model() { return model_; }
    const HyperState& hyper() const { return hyper_; }
    std::uint32_t iteration() const { return iteration_; }
    std::size_t row_count() const { return y_.size(); }

    // Cached per-row errors e = predict − y, and the from-scratch oracle
    // for them. After direct model edits call refresh_caches() first.
    const std::vector<double>& residuals() const { return e_; }
    std::vector<double> recompute_residuals() const;
    void refresh_caches();

    double train_rmse() const;

    std::vector<double> predict_rows(const RowBlock& rows) const;

private:
    enum class ColumnKind : std::uint8_t {
        one_hot, // every stored value is 1.0; only row ids kept
        dense,   // present in every row; row ids are implicit
        sparse,  // general case: row ids and values
    };
    struct Column {
        ColumnKind kind = ColumnKind::sparse;
        std::size_t row_offset = 0;
        std::size_t val_offset = 0;
        std::uint32_t nnz = 0;
        double sum_sq = 0.0; // Σ x², fixed for the whole run
    };

    void build_columns(const RowBlock& train);
    void sample_alpha();
    void sample_hyperpriors();
    void sample_linear_terms();
    void sample_factor_terms();
    void rebuild_q(std::uint32_t f);
    double draw_parameter(double theta_old, double sum_h2, double sum_he, double lambda,
                          double mu, const char* what);

    McmcConfig config_;
    FmModel model_;
    HyperState hyper_;
    Sampler sampler_;
    std::uint32_t iteration_ = 0;

    std::vector<double> y_;
    std::vector<Column> cols_;
    std::vector<std::uint32_t> rows_pool_;
    std::vector<double> vals_pool_;
    std::vector<int> col_group_; // base group id per column
    std::uint32_t base_groups_ = 1;

    std::vector<double> e_; // predict − y per training row
    std::vector<double> q_; // Σ v_{i,f} x_i per row, for the factor in flight
};

struct TrainResult {
    FmModel posterior_mean; // parameter means over post-burn-in draws
    FmModel final_draw;
    PosteriorPrediction test_prediction;
    HyperState hyper; // state after the last sweep
    std::vector<TrainLogEntry> log;
};

// Runs the full chain and accumulates test predictions after burn-in.
// Deterministic per config.seed.
TrainResult train_predict(const RowBlock& train_rows, const RowBlock& test_rows,
                          std::uint32_t schema_width, const McmcConfig& config,
                          const std::vector<int>* column_groups = nullptr,
                          const TrainLogSink& log_sink = nullptr);

} // namespace levelcast
