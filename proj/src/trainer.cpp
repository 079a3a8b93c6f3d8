#include "levelcast/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "levelcast/csv.hpp"
#include "levelcast/errors.hpp"

namespace levelcast {

namespace {
// Gamma(1, 1) hyperprior on alpha and on every group lambda; each group
// mean has a unit-precision Normal-Gamma base at 0.
constexpr double kPriorShape = 1.0;
constexpr double kPriorRate = 1.0;
constexpr double kPriorGamma0 = 1.0;
} // namespace

void validate(const McmcConfig& config) {
    if (config.iterations == 0) throw ConfigError("iterations must be positive");
    if (config.burn_in >= config.iterations)
        throw ConfigError("burn_in (" + std::to_string(config.burn_in) +
                          ") must be below iterations (" + std::to_string(config.iterations) +
                          ")");
    if (!std::isfinite(config.init_stdev) || config.init_stdev <= 0.0)
        throw ConfigError("init_stdev must be positive");
    bool k_ok = std::find(std::begin(kAllowedFactorCounts), std::end(kAllowedFactorCounts),
                          config.factor_count) != std::end(kAllowedFactorCounts);
    if (!k_ok)
        throw ConfigError("factor_count " + std::to_string(config.factor_count) +
                          " not in {1, 2, 4, 8, 16, 32}");
    if (config.fixed_alpha && (!std::isfinite(*config.fixed_alpha) || *config.fixed_alpha <= 0.0))
        throw ConfigError("fixed_alpha must be positive");
}

FmModel init_model(std::uint32_t schema_width, const McmcConfig& config) {
    validate(config);
    FmModel m = make_fm_model(schema_width, config.factor_count);
    Sampler sampler(config.seed);
    for (double& entry : m.v) entry = sampler.normal(0.0, config.init_stdev);
    return m;
}

std::vector<double> PosteriorPrediction::clamped() const {
    std::vector<double> out(mean.size());
    for (std::size_t i = 0; i < mean.size(); ++i)
        out[i] = std::clamp(mean[i], 1.0, static_cast<double>(kAttemptCap));
    return out;
}

void write_training_log(const std::vector<TrainLogEntry>& log, const std::string& path) {
    CsvWriter w(path);
    w.write_row({"iteration", "train_rmse", "alpha", "wall_ms"});
    for (const auto& entry : log)
        w.write_row({std::to_string(entry.iteration), fmt_double(entry.train_rmse),
                     fmt_double(entry.alpha), fmt_double(entry.wall_ms, 6)});
    w.close();
}

// ---------------------------------------------------------------------------
// GibbsTrainer

GibbsTrainer::GibbsTrainer(const RowBlock& train, std::uint32_t schema_width,
                           const McmcConfig& config, const std::vector<int>* column_groups)
    : config_(config), sampler_(config.seed) {
    validate(config);
    if (train.empty()) throw ProtocolError("training set is empty");

    y_ = train.targets();
    model_ = make_fm_model(schema_width, config.factor_count);
    for (double& entry : model_.v) entry = sampler_.normal(0.0, config.init_stdev);

    build_columns(train);

    if (config.per_block_groups) {
        if (!column_groups || column_groups->size() != schema_width)
            throw ConfigError("per_block_groups requires a block id per schema column");
        col_group_ = *column_groups;
        int max_group = 0;
        for (int g : col_group_) {
            if (g < 0) throw ConfigError("column group ids must be non-negative");
            max_group = std::max(max_group, g);
        }
        base_groups_ = static_cast<std::uint32_t>(max_group) + 1;
    } else {
        col_group_.assign(schema_width, 0);
        base_groups_ = 1;
    }
    const std::size_t groups = static_cast<std::size_t>(base_groups_) * (model_.k + 1);
    hyper_.alpha = config.fixed_alpha.value_or(1.0);
    hyper_.mu.assign(groups, 0.0);
    hyper_.lambda.assign(groups, 1.0);

    e_ = recompute_residuals();
    q_.assign(y_.size(), 0.0);
}

void GibbsTrainer::build_columns(const RowBlock& train) {
    const std::uint32_t width = model_.schema_width;
    const std::size_t n_rows = train.size();

    std::vector<std::uint32_t> nnz(width, 0);
    for (std::size_t r = 0; r < n_rows; ++r) {
        DesignRowView row = train.row(r);
        std::uint32_t prev = 0;
        for (std::size_t a = 0; a < row.size(); ++a) {
            std::uint32_t idx = row.indices[a];
            if (idx >= width)
                throw ContractError("design row index " + std::to_string(idx) +
                                    " out of range for schema width " + std::to_string(width));
            if (a > 0 && idx <= prev)
                throw ContractError("design row indices must be strictly increasing (row " +
                                    std::to_string(r) + ")");
            prev = idx;
            ++nnz[idx];
        }
    }

    cols_.resize(width);
    std::size_t total = 0;
    for (std::uint32_t i = 0; i < width; ++i) {
        cols_[i].row_offset = total;
        cols_[i].val_offset = total;
        cols_[i].nnz = nnz[i];
        total += nnz[i];
    }
    rows_pool_.resize(total);
    vals_pool_.resize(total);

    std::vector<std::size_t> cursor(width, 0);
    for (std::size_t r = 0; r < n_rows; ++r) {
        DesignRowView row = train.row(r);
        for (std::size_t a = 0; a < row.size(); ++a) {
            std::uint32_t i = row.indices[a];
            std::size_t at = cols_[i].row_offset + cursor[i]++;
            rows_pool_[at] = static_cast<std::uint32_t>(r);
            vals_pool_[at] = row.values[a];
        }
    }

    // Classify columns; the pools stay as filled, the kind just controls
    // which half a loop reads.
    for (std::uint32_t i = 0; i < width; ++i) {
        Column& c = cols_[i];
        const double* x = vals_pool_.data() + c.val_offset;
        bool all_ones = true;
        double sum_sq = 0.0;
        for (std::uint32_t j = 0; j < c.nnz; ++j) {
            all_ones = all_ones && x[j] == 1.0;
            sum_sq += x[j] * x[j];
        }
        c.sum_sq = sum_sq;
        if (all_ones)
            c.kind = ColumnKind::one_hot;
        else if (c.nnz == n_rows)
            c.kind = ColumnKind::dense;
        else
            c.kind = ColumnKind::sparse;
    }
}

std::vector<double> GibbsTrainer::recompute_residuals() const {
    const std::uint32_t width = model_.schema_width;
    const std::uint32_t k = model_.k;
    const std::size_t n = y_.size();

    std::vector<double> e(n);
    for (std::size_t r = 0; r < n; ++r) e[r] = model_.w0 - y_[r];

    for (std::uint32_t i = 0; i < width; ++i) {
        const Column& c = cols_[i];
        const double wi = model_.w[i];
        const std::uint32_t* rows = rows_pool_.data() + c.row_offset;
        const double* x = vals_pool_.data() + c.val_offset;
        switch (c.kind) {
        case ColumnKind::one_hot:
            for (std::uint32_t j = 0; j < c.nnz; ++j) e[rows[j]] += wi;
            break;
        case ColumnKind::dense:
            for (std::uint32_t j = 0; j < c.nnz; ++j) e[j] += wi * x[j];
            break;
        case ColumnKind::sparse:
            for (std::uint32_t j = 0; j < c.nnz; ++j) e[rows[j]] += wi * x[j];
            break;
        }
    }

    std::vector<double> q(n), s(n);
    for (std::uint32_t f = 0; f < k; ++f) {
        std::fill(q.begin(), q.end(), 0.0);
        std::fill(s.begin(), s.end(), 0.0);
        for (std::uint32_t i = 0; i < width; ++i) {
            const Column& c = cols_[i];
            const double vf = model_.v[static_cast<std::size_t>(i) * k + f];
            const std::uint32_t* rows = rows_pool_.data() + c.row_offset;
            const double* x = vals_pool_.data() + c.val_offset;
            switch (c.kind) {
            case ColumnKind::one_hot:
                for (std::uint32_t j = 0; j < c.nnz; ++j) {
                    q[rows[j]] += vf;
                    s[rows[j]] += vf * vf;
                }
                break;
            case ColumnKind::dense:
                for (std::uint32_t j = 0; j < c.nnz; ++j) {
                    double t = vf * x[j];
                    q[j] += t;
                    s[j] += t * t;
                }
                break;
            case ColumnKind::sparse:
                for (std::uint32_t j = 0; j < c.nnz; ++j) {
                    double t = vf * x[j];
                    q[rows[j]] += t;
                    s[rows[j]] += t * t;
                }
                break;
            }
        }
        for (std::size_t r = 0; r < n; ++r) e[r] += 0.5 * (q[r] * q[r] - s[r]);
    }
    return e;
}

void GibbsTrainer::refresh_caches() { e_ = recompute_residuals(); }

double GibbsTrainer::train_rmse() const {
    double rss = 0.0;
    for (double e : e_) rss += e * e;
    return std::sqrt(rss / static_cast<double>(e_.size()));
}

std::vector<double> GibbsTrainer::predict_rows(const RowBlock& rows) const {
    std::vector<double> out(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) out[r] = predict(model_, rows.row(r));
    return out;
}

void GibbsTrainer::sample_alpha() {
    if (config_.fixed_alpha) {
        hyper_.alpha = *config_.fixed_alpha;
        return;
    }
    double rss = 0.0;
    for (double e : e_) rss += e * e;
    if (!std::isfinite(rss))
        throw DivergenceError("residual sum of squares", iteration_ + 1);
    const double n = static_cast<double>(e_.size());
    hyper_.alpha = sampler_.gamma(kPriorShape + 0.5 * n, kPriorRate + 0.5 * rss);
}

void GibbsTrainer::sample_hyperpriors() {
    const std::uint32_t width = model_.schema_width;
    const std::uint32_t k = model_.k;
    const std::size_t groups = hyper_.mu.size();

    std::vector<double> sum(groups, 0.0), sumsq(groups, 0.0), cnt(groups, 0.0);
    for (std::uint32_t i = 0; i < width; ++i) {
        int g = col_group_[i];
        double w = model_.w[i];
        sum[g] += w;
        sumsq[g] += w * w;
        cnt[g] += 1.0;
    }
    for (std::uint32_t f = 0; f < k; ++f) {
        const std::size_t gbase = base_groups_ + static_cast<std::size_t>(f) * base_groups_;
        for (std::uint32_t i = 0; i < width; ++i) {
            std::size_t g = gbase + static_cast<std::size_t>(col_group_[i]);
            double v = model_.v[static_cast<std::size_t>(i) * k + f];
            sum[g] += v;
            sumsq[g] += v * v;
            cnt[g] += 1.0;
        }
    }

    for (std::size_t g = 0; g < groups; ++g) {
        const double n_g = cnt[g];
        const double mu_old = hyper_.mu[g];
        double dev = sumsq[g] - 2.0 * mu_old * sum[g] + n_g * mu_old * mu_old;
        dev = std::max(dev, 0.0);
        const double lambda_new =
            sampler_.gamma(kPriorShape + 0.5 * (n_g + kPriorGamma0),
                           kPriorRate + 0.5 * (dev + kPriorGamma0 * mu_old * mu_old));
        const double denom = n_g + kPriorGamma0;
        const double mu_new =
            sampler_.normal(sum[g] / denom, std::sqrt(1.0 / (denom * lambda_new)));
        if (!std::isfinite(lambda_new) || !std::isfinite(mu_new))
            throw DivergenceError("hyperprior group " + std::to_string(g), iteration_ + 1);
        hyper_.lambda[g] = lambda_new;
        hyper_.mu[g] = mu_new;
    }
}

double GibbsTrainer::draw_parameter(double theta_old, double sum_h2, double sum_he,
                                    double lambda, double mu, const char* what) {
    const double alpha = hyper_.alpha;
    const double var = 1.0 / (alpha * sum_h2 + lambda);
    const double mean = var * (alpha * (theta_old * sum_h2 - sum_he) + lambda * mu);
    const double theta_new = mean + std::sqrt(var) * sampler_.normal();
    if (!std::isfinite(theta_new)) throw DivergenceError(what, iteration_ + 1);
    return theta_new;
}

void GibbsTrainer::sample_linear_terms() {
    const std::uint32_t width = model_.schema_width;
    for (std::uint32_t i = 0; i < width; ++i) {
        const Column& c = cols_[i];
        const std::uint32_t* rows = rows_pool_.data() + c.row_offset;
        const double* x = vals_pool_.data() + c.val_offset;

        double sum_xe = 0.0;
        switch (c.kind) {
        case ColumnKind::one_hot:
            for (std::uint32_t j = 0; j < c.nnz; ++j) sum_xe += e_[rows[j]];
            break;
        case ColumnKind::dense:
            for (std::uint32_t j = 0; j < c.nnz; ++j) sum_xe += x[j] * e_[j];
            break;
        case ColumnKind::sparse:
            for (std::uint32_t j = 0; j < c.nnz; ++j) sum_xe += x[j] * e_[rows[j]];
            break;
        }

        const int g = col_group_[i];
        const double w_old = model_.w[i];
        const double w_new =
            draw_parameter(w_old, c.sum_sq, sum_xe, hyper_.lambda[g], hyper_.mu[g], "w");
        const double delta = w_new - w_old;
        switch (c.kind) {
        case ColumnKind::one_hot:
            for (std::uint32_t j = 0; j < c.nnz; ++j) e_[rows[j]] += delta;
            break;
        case ColumnKind::dense:
            for (std::uint32_t j = 0; j < c.nnz; ++j) e_[j] += delta * x[j];
            break;
        case ColumnKind::sparse:
            for (std::uint32_t j = 0; j < c.nnz; ++j) e_[rows[j]] += delta * x[j];
            break;
        }
        model_.w[i] = w_new;
    }
}

void GibbsTrainer::rebuild_q(std::uint32_t f) {
    const std::uint32_t width = model_.schema_width;
    const std::uint32_t k = model_.k;
    std::fill(q_.begin(), q_.end(), 0.0);
    for (std::uint32_t i = 0; i < width; ++i) {
        const Column& c = cols_[i];
        const double vf = model_.v[static_cast<std::size_t>(i) * k + f];
        if (vf == 0.0) continue;
        const std::uint32_t* rows = rows_pool_.data() + c.row_offset;
        const double* x = vals_pool_.data() + c.val_offset;
        switch (c.kind) {
        case ColumnKind::one_hot:
            for (std::uint32_t j = 0; j < c.nnz; ++j) q_[rows[j]] += vf;
            break;
        case ColumnKind::dense:
            for (std::uint32_t j = 0; j < c.nnz; ++j) q_[j] += vf * x[j];
            break;
        case ColumnKind::sparse:
            for (std::uint32_t j = 0; j < c.nnz; ++j) q_[rows[j]] += vf * x[j];
            break;
        }
    }
}

void GibbsTrainer::sample_factor_terms() {
    const std::uint32_t width = model_.schema_width;
    const std::uint32_t k = model_.k;
    for (std::uint32_t f = 0; f < k; ++f) {
        rebuild_q(f);
        const std::size_t gbase = base_groups_ + static_cast<std::size_t>(f) * base_groups_;
        for (std::uint32_t i = 0; i < width; ++i) {
            const Column& c = cols_[i];
            const std::uint32_t* rows = rows_pool_.data() + c.row_offset;
            const double* x = vals_pool_.data() + c.val_offset;
            const double v_old = model_.v[static_cast<std::size_t>(i) * k + f];

            double sum_h2 = 0.0, sum_he = 0.0;
            switch (c.kind) {
            case ColumnKind::one_hot:
                for (std::uint32_t j = 0; j < c.nnz; ++j) {
                    const double h = q_[rows[j]] - v_old;
                    sum_h2 += h * h;
                    sum_he += h * e_[rows[j]];
                }
                break;
            case ColumnKind::dense:
                for (std::uint32_t j = 0; j < c.nnz; ++j) {
                    const double h = x[j] * (q_[j] - v_old * x[j]);
                    sum_h2 += h * h;
                    sum_he += h * e_[j];
                }
                break;
            case ColumnKind::sparse:
                for (std::uint32_t j = 0; j < c.nnz; ++j) {
                    const std::uint32_t r = rows[j];
                    const double h = x[j] * (q_[r] - v_old * x[j]);
                    sum_h2 += h * h;
                    sum_he += h * e_[r];
                }
                break;
            }

            const std::size_t g = gbase + static_cast<std::size_t>(col_group_[i]);
            const double v_new =
                draw_parameter(v_old, sum_h2, sum_he, hyper_.lambda[g], hyper_.mu[g], "v");
            const double delta = v_new - v_old;
            switch (c.kind) {
            case ColumnKind::one_hot:
                for (std::uint32_t j = 0; j < c.nnz; ++j) {
                    const std::uint32_t r = rows[j];
                    e_[r] += delta * (q_[r] - v_old);
                    q_[r] += delta;
                }
                break;
            case ColumnKind::dense:
                for (std::uint32_t j = 0; j < c.nnz; ++j) {
                    const double h = x[j] * (q_[j] - v_old * x[j]);
                    e_[j] += delta * h;
                    q_[j] += delta * x[j];
                }
                break;
            case ColumnKind::sparse:
                for (std::uint32_t j = 0; j < c.nnz; ++j) {
                    const std::uint32_t r = rows[j];
                    const double h = x[j] * (q_[r] - v_old * x[j]);
                    e_[r] += delta * h;
                    q_[r] += delta * x[j];
                }
                break;
            }
            model_.v[static_cast<std::size_t>(i) * k + f] = v_new;
        }
    }
}

void GibbsTrainer::sweep() {
    sample_alpha();
    sample_hyperpriors();
    sample_linear_terms();
    sample_factor_terms();
    ++iteration_;
}

// ---------------------------------------------------------------------------

TrainResult train_predict(const RowBlock& train_rows, const RowBlock& test_rows,
                          std::uint32_t schema_width, const McmcConfig& config,
                          const std::vector<int>* column_groups, const TrainLogSink& log_sink) {
    validate(config);
    if (train_rows.empty()) throw ProtocolError("training set is empty");

    GibbsTrainer trainer(train_rows, schema_width, config, column_groups);

    TrainResult result;
    result.posterior_mean = make_fm_model(schema_width, config.factor_count);
    result.test_prediction.mean.assign(test_rows.size(), 0.0);
    result.log.reserve(config.iterations);

    std::vector<double>& w_sum = result.posterior_mean.w;
    std::vector<double>& v_sum = result.posterior_mean.v;
    std::vector<double>& pred_sum = result.test_prediction.mean;

    using clock = std::chrono::steady_clock;
    for (std::uint32_t it = 1; it <= config.iterations; ++it) {
        const auto t0 = clock::now();
        trainer.sweep();
        if (it > config.burn_in) {
            const FmModel& draw = trainer.model();
            for (std::size_t i = 0; i < w_sum.size(); ++i) w_sum[i] += draw.w[i];
            for (std::size_t i = 0; i < v_sum.size(); ++i) v_sum[i] += draw.v[i];
            if (!test_rows.empty()) {
                std::vector<double> preds = trainer.predict_rows(test_rows);
                for (std::size_t r = 0; r < preds.size(); ++r) pred_sum[r] += preds[r];
            }
            ++result.test_prediction.draws;
        }
        const double ms =
            std::chrono::duration<double, std::milli>(clock::now() - t0).count();
        TrainLogEntry entry{it, trainer.train_rmse(), trainer.hyper().alpha, ms};
        result.log.push_back(entry);
        if (log_sink) log_sink(entry);
    }

    const double draws = result.test_prediction.draws;
    for (double& w : w_sum) w /= draws;
    for (double& v : v_sum) v /= draws;
    for (double& p : pred_sum) p /= draws;

    result.final_draw = trainer.model();
    result.hyper = trainer.hyper();
    return result;
}

} // namespace levelcast
