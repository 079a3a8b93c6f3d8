#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "levelcast/dataset.hpp"
#include "levelcast/features.hpp"
#include "levelcast/fm.hpp"

namespace levelcast {

// Pearson correlation of fractional ranks; ties receive average ranks.
// Throws UndefinedCorrelationError when either side has zero rank variance.
double spearman(std::span<const double> a, std::span<const double> b);

// One entity's parameters joined with its training-data attempt statistics.
// level_number is meaningful for level rows only. Statistics are present
// only when the entity occurs in the training data (has_stats).
struct FactorRow {
    std::string id;
    std::int32_t level_number = 0;
    double w = 0.0;
    std::vector<double> v;
    bool has_stats = false;
    double mean_attempts = 0.0;
    double var_attempts = 0.0;    // population variance
    double norm_variance = 0.0;   // variance / mean
    double norm_variance_sq = 0.0; // variance / mean^2
};

struct FactorTable {
    enum class Kind { player, level };
    Kind kind = Kind::player;
    std::uint32_t k = 0;
    std::vector<FactorRow> rows;
};

struct FactorTables {
    FactorTable players;
    FactorTable levels;
};

// Splits the model's parameter vector along the schema's one-hot blocks and
// joins per-entity attempt statistics computed from the training data.
FactorTables build_factor_tables(const FmModel& model, const FeatureSchema& schema,
                                 const Dataset& train);

// Flips each factor column (in both tables) so its level-side rank
// correlation with average attempts is non-negative; the sign of the
// factors is otherwise arbitrary. Returns the sign applied per factor;
// factors whose correlation is undefined keep sign +1.
std::vector<double> canonicalize_factors(FactorTables& tables);

struct TruthColumns {
    std::map<std::string, double> player_skill;
    std::map<std::int32_t, double> level_difficulty;
};

struct CorrelationEntry {
    std::string name;
    double rho = 0.0;
    std::size_t n = 0;
};

struct CorrelationReport {
    std::vector<CorrelationEntry> entries;
    const CorrelationEntry* find(const std::string& name) const;
};

// Records the standard interpretation pairs (level w vs avg attempts,
// level v1 vs avg attempts and vs normalized variance, player terms vs mean
// attempts, level v2 vs level number) plus, when truth columns are given,
// correlations against the generator's latent difficulty and skill —
// including negated player parameters as skill proxies. The normalized
// variance pair uses variance/mean, or variance/mean^2 when
// norm_variance_squared is set.
CorrelationReport interpretation_report(const FactorTables& tables,
                                        const TruthColumns* truth = nullptr,
                                        bool norm_variance_squared = false);

struct HistogramBin {
    double lo = 0.0;
    double hi = 0.0;
    std::size_t count = 0;
};

struct Histogram {
    std::string series;
    std::vector<HistogramBin> bins;
};

// Freedman–Diaconis binning; constant input collapses to a single bin.
// Bins partition [min, max] and counts sum to the input size.
std::vector<HistogramBin> fd_histogram(std::span<const double> values);

// One series per parameter column, split by entity kind:
// player_w, level_w, player_v<f>, level_v<f>.
std::vector<Histogram> parameter_histograms(const FactorTables& tables);

void write_factor_table_csv(const FactorTable& table, const std::string& path);
void write_histograms_csv(const std::vector<Histogram>& histograms, const std::string& path);
void write_correlations_csv(const CorrelationReport& report, const std::string& path);

} // namespace levelcast
