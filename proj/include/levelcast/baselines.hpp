#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "levelcast/dataset.hpp"
#include "levelcast/features.hpp"

namespace levelcast {

// Non-personalized predictor: per-level mean attempts over the training
// players, global mean for levels never seen.
struct NaiveBaselineModel {
    double w0 = 0.0;
    std::map<std::int32_t, double> level_means;
    double fallback = 0.0;
};

NaiveBaselineModel fit_naive(const Dataset& train);
double predict_naive(const NaiveBaselineModel& m, std::int32_t level_id);

void save_naive(const NaiveBaselineModel& m, const std::string& path);
NaiveBaselineModel load_naive(const std::string& path);

struct RfConfig {
    std::uint32_t n_estimators = 150;
    std::uint32_t max_depth = 0; // 0 = grow until pure / min_samples_split
    std::uint32_t min_samples_split = 2;
    std::uint32_t min_samples_leaf = 1;
    bool bootstrap = true;
    std::uint64_t seed = 0;
};

void validate(const RfConfig& config);

// Flat node pool; node 0 is the root. feature = -1 marks a leaf. Internal
// nodes route row[feature] <= threshold to left, else right.
struct TreeNode {
    std::int32_t feature = -1;
    double threshold = 0.0;
    std::int32_t left = -1;
    std::int32_t right = -1;
    double value = 0.0; // mean target of the node's samples
    std::uint32_t samples = 0;
    double impurity_decrease = 0.0; // SSE(parent) − SSE(left) − SSE(right)
};

struct RegressionTree {
    std::vector<TreeNode> nodes;

    double predict(std::span<const double> row) const;
    // Per-feature impurity decrease, normalized to sum 1; all zeros for a
    // splitless tree.
    std::vector<double> normalized_importances(std::size_t n_features) const;
};

struct RandomForestModel {
    RfConfig config;
    std::size_t n_features = 0;
    std::vector<RegressionTree> trees;
    std::vector<double> importances;     // mean decrease in impurity, sums to 1
    std::vector<double> importances_std; // spread of the per-tree importances
};

// Variance-reduction trees over bootstrap samples; every feature is a split
// candidate (max_features = all), thresholds are midpoints of consecutive
// distinct sorted values. Deterministic per config.seed.
RandomForestModel fit_forest(const RfMatrix& train, const RfConfig& config);

double predict_forest(const RandomForestModel& m, std::span<const double> row);
std::vector<double> predict_forest_rows(const RandomForestModel& m, const RfMatrix& rows);

// The bootstrap rows tree t trained on, and their out-of-bag complement;
// reproducible from the forest seed alone.
std::vector<std::size_t> bootstrap_indices(std::uint64_t forest_seed, std::uint32_t tree_index,
                                           std::size_t n_rows);
std::vector<std::size_t> oob_indices(std::uint64_t forest_seed, std::uint32_t tree_index,
                                     std::size_t n_rows);

void save_forest(const RandomForestModel& m, const std::string& path);
RandomForestModel load_forest(const std::string& path);

// CSV `feature,mean_importance,std_importance`.
void write_importances(const RandomForestModel& m, const std::vector<std::string>& feature_names,
                       const std::string& path);

} // namespace levelcast
