#include "levelcast/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "levelcast/errors.hpp"
#include "levelcast/rng.hpp"

namespace levelcast {

NaiveBaselineModel fit_naive(const Dataset& train) {
    if (train.records.empty()) throw ProtocolError("fit_naive: training set is empty");
    NaiveBaselineModel m;
    std::map<std::int32_t, std::pair<double, std::size_t>> sums;
    double total = 0.0;
    for (const auto& r : train.records) {
        auto& [sum, n] = sums[r.level_id];
        sum += r.attempts;
        ++n;
        total += r.attempts;
    }
    for (const auto& [level, acc] : sums)
        m.level_means[level] = acc.first / static_cast<double>(acc.second);
    m.fallback = total / static_cast<double>(train.records.size());
    return m;
}

double predict_naive(const NaiveBaselineModel& m, std::int32_t level_id) {
    auto it = m.level_means.find(level_id);
    return it != m.level_means.end() ? it->second : m.fallback;
}

void save_naive(const NaiveBaselineModel& m, const std::string& path) {
    nlohmann::json j;
    j["format"] = "levelcast-naive";
    j["w0"] = m.w0;
    j["fallback"] = m.fallback;
    nlohmann::json means = nlohmann::json::object();
    for (const auto& [level, mean] : m.level_means) means[std::to_string(level)] = mean;
    j["level_means"] = std::move(means);
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << j.dump(2) << '\n';
}

NaiveBaselineModel load_naive(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded() || j.value("format", "") != "levelcast-naive")
        throw ValidationError(path + ": not a naive baseline file");
    NaiveBaselineModel m;
    m.w0 = j.at("w0").get<double>();
    m.fallback = j.at("fallback").get<double>();
    for (const auto& [key, mean] : j.at("level_means").items())
        m.level_means[static_cast<std::int32_t>(std::stol(key))] = mean.get<double>();
    return m;
}

// ---------------------------------------------------------------------------
// Random forest

void validate(const RfConfig& config) {
    if (config.n_estimators == 0) throw ConfigError("n_estimators must be positive");
    if (config.min_samples_split < 2) throw ConfigError("min_samples_split must be >= 2");
    if (config.min_samples_leaf == 0) throw ConfigError("min_samples_leaf must be positive");
}

double RegressionTree::predict(std::span<const double> row) const {
    const TreeNode* node = &nodes[0];
    while (node->feature >= 0)
        node = &nodes[row[static_cast<std::size_t>(node->feature)] <= node->threshold
                          ? static_cast<std::size_t>(node->left)
                          : static_cast<std::size_t>(node->right)];
    return node->value;
}

std::vector<double> RegressionTree::normalized_importances(std::size_t n_features) const {
    std::vector<double> imp(n_features, 0.0);
    double total = 0.0;
    for (const TreeNode& node : nodes) {
        if (node.feature < 0) continue;
        imp[static_cast<std::size_t>(node.feature)] += node.impurity_decrease;
        total += node.impurity_decrease;
    }
    if (total > 0.0)
        for (double& v : imp) v /= total;
    return imp;
}

std::vector<std::size_t> bootstrap_indices(std::uint64_t forest_seed, std::uint32_t tree_index,
                                           std::size_t n_rows) {
    std::mt19937_64 rng(derive_seed(forest_seed, tree_index));
    std::vector<std::size_t> idx(n_rows);
    for (std::size_t i = 0; i < n_rows; ++i) idx[i] = bounded(rng, n_rows);
    return idx;
}

std::vector<std::size_t> oob_indices(std::uint64_t forest_seed, std::uint32_t tree_index,
                                     std::size_t n_rows) {
    std::vector<char> seen(n_rows, 0);
    for (std::size_t i : bootstrap_indices(forest_seed, tree_index, n_rows)) seen[i] = 1;
    std::vector<std::size_t> oob;
    for (std::size_t i = 0; i < n_rows; ++i)
        if (!seen[i]) oob.push_back(i);
    return oob;
}

namespace {

struct TreeBuilder {
    const RfMatrix& X;
    const RfConfig& config;
    RegressionTree tree;
    std::vector<std::size_t> samples; // index buffer, partitioned in place

    struct Task {
        std::int32_t node;
        std::size_t begin, end;
        std::uint32_t depth;
    };

    void build(std::vector<std::size_t> initial) {
        samples = std::move(initial);
        tree.nodes.clear();
        tree.nodes.push_back({});
        std::vector<Task> stack{{0, 0, samples.size(), 0}};
        std::vector<std::size_t> order;
        while (!stack.empty()) {
            Task t = stack.back();
            stack.pop_back();
            grow(t, stack, order);
        }
    }

    void grow(const Task& t, std::vector<Task>& stack, std::vector<std::size_t>& order) {
        const std::size_t n = t.end - t.begin;
        double sum = 0.0, sumsq = 0.0;
        for (std::size_t p = t.begin; p < t.end; ++p) {
            double y = X.targets[samples[p]];
            sum += y;
            sumsq += y * y;
        }
        TreeNode& node = tree.nodes[static_cast<std::size_t>(t.node)];
        node.value = sum / static_cast<double>(n);
        node.samples = static_cast<std::uint32_t>(n);

        const double sse = std::max(0.0, sumsq - sum * sum / static_cast<double>(n));
        const bool depth_capped = config.max_depth > 0 && t.depth >= config.max_depth;
        if (n < config.min_samples_split || sse <= 1e-12 || depth_capped) return;

        // Exhaustive search: every feature, every midpoint between
        // consecutive distinct sorted values.
        std::int32_t best_feature = -1;
        double best_threshold = 0.0, best_decrease = 0.0;
        for (std::size_t feat = 0; feat < X.cols; ++feat) {
            order.assign(samples.begin() + static_cast<std::ptrdiff_t>(t.begin),
                         samples.begin() + static_cast<std::ptrdiff_t>(t.end));
            std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                double xa = X.data[a * X.cols + feat], xb = X.data[b * X.cols + feat];
                return xa != xb ? xa < xb : a < b;
            });
            double left_sum = 0.0, left_sumsq = 0.0;
            for (std::size_t p = 0; p + 1 < n; ++p) {
                const double y = X.targets[order[p]];
                left_sum += y;
                left_sumsq += y * y;
                const double xl = X.data[order[p] * X.cols + feat];
                const double xr = X.data[order[p + 1] * X.cols + feat];
                if (xl == xr) continue;
                const std::size_t nl = p + 1, nr = n - nl;
                if (nl < config.min_samples_leaf || nr < config.min_samples_leaf) continue;
                const double right_sum = sum - left_sum;
                const double right_sumsq = sumsq - left_sumsq;
                const double sse_l = left_sumsq - left_sum * left_sum / static_cast<double>(nl);
                const double sse_r = right_sumsq - right_sum * right_sum / static_cast<double>(nr);
                const double decrease = sse - sse_l - sse_r;
                if (decrease > best_decrease) {
                    best_decrease = decrease;
                    best_feature = static_cast<std::int32_t>(feat);
                    best_threshold = xl + (xr - xl) / 2.0;
                }
            }
        }
        if (best_feature < 0) return;

        auto mid = std::partition(samples.begin() + static_cast<std::ptrdiff_t>(t.begin),
                                  samples.begin() + static_cast<std::ptrdiff_t>(t.end),
                                  [&](std::size_t s) {
                                      return X.data[s * X.cols +
                                                    static_cast<std::size_t>(best_feature)] <=
                                             best_threshold;
                                  });
        const std::size_t split_at =
            static_cast<std::size_t>(mid - samples.begin());

        const std::int32_t left = static_cast<std::int32_t>(tree.nodes.size());
        const std::int32_t right = left + 1;
        tree.nodes.push_back({});
        tree.nodes.push_back({});
        TreeNode& parent = tree.nodes[static_cast<std::size_t>(t.node)];
        parent.feature = best_feature;
        parent.threshold = best_threshold;
        parent.impurity_decrease = best_decrease;
        parent.left = left;
        parent.right = right;
        stack.push_back({right, split_at, t.end, t.depth + 1});
        stack.push_back({left, t.begin, split_at, t.depth + 1});
    }
};

} // namespace

RandomForestModel fit_forest(const RfMatrix& train, const RfConfig& config) {
    validate(config);
    if (train.rows < 2) throw ContractError("fit_forest: need at least 2 training rows");
    if (train.targets.size() != train.rows)
        throw ContractError("fit_forest: target length does not match row count");
    for (double x : train.data)
        if (!std::isfinite(x)) throw ValidationError("fit_forest: non-finite feature value");
    for (double y : train.targets)
        if (!std::isfinite(y)) throw ValidationError("fit_forest: non-finite target value");

    RandomForestModel model;
    model.config = config;
    model.n_features = train.cols;
    model.trees.reserve(config.n_estimators);

    for (std::uint32_t t = 0; t < config.n_estimators; ++t) {
        std::vector<std::size_t> rows;
        if (config.bootstrap) {
            rows = bootstrap_indices(config.seed, t, train.rows);
        } else {
            rows.resize(train.rows);
            std::iota(rows.begin(), rows.end(), std::size_t{0});
        }
        TreeBuilder builder{train, config, {}, {}};
        builder.build(std::move(rows));
        model.trees.push_back(std::move(builder.tree));
    }

    // Mean decrease in impurity: per-tree totals normalized to sum 1, then
    // averaged over the trees that split at all; the spread over those
    // trees is kept for error bands.
    std::vector<std::vector<double>> per_tree;
    for (const auto& tree : model.trees) {
        std::vector<double> imp = tree.normalized_importances(model.n_features);
        if (std::accumulate(imp.begin(), imp.end(), 0.0) > 0.0) per_tree.push_back(std::move(imp));
    }
    model.importances.assign(model.n_features, 0.0);
    model.importances_std.assign(model.n_features, 0.0);
    if (!per_tree.empty()) {
        const double m = static_cast<double>(per_tree.size());
        for (const auto& imp : per_tree)
            for (std::size_t f = 0; f < model.n_features; ++f) model.importances[f] += imp[f];
        for (double& v : model.importances) v /= m;
        for (const auto& imp : per_tree)
            for (std::size_t f = 0; f < model.n_features; ++f) {
                const double d = imp[f] - model.importances[f];
                model.importances_std[f] += d * d;
            }
        for (double& v : model.importances_std) v = std::sqrt(v / m);
        const double total =
            std::accumulate(model.importances.begin(), model.importances.end(), 0.0);
        if (total > 0.0)
            for (double& v : model.importances) v /= total;
    }
    return model;
}

double predict_forest(const RandomForestModel& m, std::span<const double> row) {
    if (row.size() != m.n_features)
        throw ContractError("predict_forest: row width " + std::to_string(row.size()) +
                            " does not match training width " + std::to_string(m.n_features));
    double sum = 0.0;
    for (const auto& tree : m.trees) sum += tree.predict(row);
    return sum / static_cast<double>(m.trees.size());
}

std::vector<double> predict_forest_rows(const RandomForestModel& m, const RfMatrix& rows) {
    std::vector<double> out(rows.rows);
    for (std::size_t r = 0; r < rows.rows; ++r) out[r] = predict_forest(m, rows.row(r));
    return out;
}

void save_forest(const RandomForestModel& m, const std::string& path) {
    nlohmann::json j;
    j["format"] = "levelcast-rf";
    j["config"] = {{"n_estimators", m.config.n_estimators},
                   {"max_depth", m.config.max_depth},
                   {"min_samples_split", m.config.min_samples_split},
                   {"min_samples_leaf", m.config.min_samples_leaf},
                   {"bootstrap", m.config.bootstrap},
                   {"seed", m.config.seed}};
    j["n_features"] = m.n_features;
    j["importances"] = m.importances;
    j["importances_std"] = m.importances_std;
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& tree : m.trees) {
        nlohmann::json nodes = nlohmann::json::array();
        for (const auto& n : tree.nodes)
            nodes.push_back({n.feature, n.threshold, n.left, n.right, n.value, n.samples,
                             n.impurity_decrease});
        trees.push_back(std::move(nodes));
    }
    j["trees"] = std::move(trees);
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << j.dump() << '\n';
}

RandomForestModel load_forest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded() || j.value("format", "") != "levelcast-rf")
        throw ValidationError(path + ": not a forest file");
    RandomForestModel m;
    const auto& c = j.at("config");
    m.config.n_estimators = c.at("n_estimators").get<std::uint32_t>();
    m.config.max_depth = c.at("max_depth").get<std::uint32_t>();
    m.config.min_samples_split = c.at("min_samples_split").get<std::uint32_t>();
    m.config.min_samples_leaf = c.at("min_samples_leaf").get<std::uint32_t>();
    m.config.bootstrap = c.at("bootstrap").get<bool>();
    m.config.seed = c.at("seed").get<std::uint64_t>();
    m.n_features = j.at("n_features").get<std::size_t>();
    m.importances = j.at("importances").get<std::vector<double>>();
    m.importances_std = j.at("importances_std").get<std::vector<double>>();
    for (const auto& tnodes : j.at("trees")) {
        RegressionTree tree;
        for (const auto& n : tnodes) {
            TreeNode node;
            node.feature = n.at(0).get<std::int32_t>();
            node.threshold = n.at(1).get<double>();
            node.left = n.at(2).get<std::int32_t>();
            node.right = n.at(3).get<std::int32_t>();
            node.value = n.at(4).get<double>();
            node.samples = n.at(5).get<std::uint32_t>();
            node.impurity_decrease = n.at(6).get<double>();
            tree.nodes.push_back(node);
        }
        m.trees.push_back(std::move(tree));
    }
    return m;
}

void write_importances(const RandomForestModel& m, const std::vector<std::string>& feature_names,
                       const std::string& path) {
    if (feature_names.size() != m.n_features)
        throw ContractError("write_importances: name count does not match feature count");
    CsvWriter w(path);
    w.write_row({"feature", "mean_importance", "std_importance"});
    for (std::size_t f = 0; f < m.n_features; ++f)
        w.write_row({feature_names[f], fmt_double_exact(m.importances[f]),
                     fmt_double_exact(m.importances_std[f])});
    w.close();
}

} // namespace levelcast
