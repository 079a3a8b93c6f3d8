#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "levelcast/analysis.hpp"
#include "levelcast/dataset.hpp"
#include "levelcast/features.hpp"

namespace levelcast {

// Generator for a population with known latent structure. Success
// probability per (player u, level l) is
//   p = clamp(logistic(base_logit - d_l + s_ul + gamma * c_u * a_l), p_min, 1)
// and attempts are 1 + Geometric(p), truncated at the attempt cap. The
// effective skill s_ul has unit-time marginal Normal(0, skill_stdev^2) but
// drifts slowly along the level axis, so a player's form during one stretch
// of levels is only partly informative about a distant stretch.
struct SynthConfig {
    std::int32_t n_players = 200;
    std::int32_t n_levels = 300;
    double skill_stdev = 0.7;        // marginal stdev of effective skill
    double consistency_stdev = 1.6;  // c_u ~ Normal(0, consistency_stdev^2)
    double interaction_strength = 0.5;
    double base_logit = 2.0;
    double p_min = 1.0 / 30.0;
    std::uint64_t seed = 1;
};

void validate(const SynthConfig& config);

struct SynthTruth {
    std::vector<std::string> player_ids;
    std::vector<double> skill; // per-player mean effective skill over the level range
    std::vector<double> consistency;
    std::vector<std::int32_t> level_ids;
    std::vector<double> difficulty;
    std::vector<double> variance_amp;
    std::vector<double> success_prob; // row-major player x level

    double success(std::size_t player, std::size_t level) const {
        return success_prob[player * level_ids.size() + level];
    }
};

struct SynthResult {
    Dataset data;
    SynthTruth truth;
    std::vector<LevelAttributes> attributes;
    TelemetryTable telemetry;
};

SynthResult generate(const SynthConfig& config);

// E[attempts] for 1 + Geometric(p) truncated at cap: (1 - (1-p)^cap) / p.
double truncated_geometric_mean(double p, int cap = kAttemptCap);

// Error of the Bayes-optimal predictor E[attempts | u, l] on the test
// records — the floor no model beats in expectation.
struct OracleReport {
    double mae = 0.0;
    double rmse = 0.0;
    std::size_t n = 0;
};

OracleReport oracle_metrics(const SynthTruth& truth, const Split& split);

// truth.csv is long-form: kind,player_id,level_id,value with kinds skill,
// consistency, difficulty, variance_amp and success_prob.
void save_truth(const SynthTruth& truth, const std::string& path);
SynthTruth load_truth(const std::string& path);

TruthColumns truth_columns(const SynthTruth& truth);

} // namespace levelcast
