#include "levelcast/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include "levelcast/csv.hpp"
#include "levelcast/errors.hpp"
#include "levelcast/rng.hpp"

namespace levelcast {

void validate(const SynthConfig& config) {
    if (config.n_players < 1) throw ConfigError("n_players must be positive");
    if (config.n_levels < 1) throw ConfigError("n_levels must be positive");
    if (config.skill_stdev <= 0.0 || config.consistency_stdev <= 0.0)
        throw ConfigError("scale parameters must be positive");
    if (config.p_min <= 0.0 || config.p_min > 1.0)
        throw ConfigError("p_min must lie in (0, 1]");
    if (!std::isfinite(config.base_logit) || !std::isfinite(config.interaction_strength))
        throw ConfigError("base_logit and interaction_strength must be finite");
}

double truncated_geometric_mean(double p, int cap) {
    if (!(p > 0.0 && p <= 1.0))
        throw ContractError("truncated_geometric_mean: p must lie in (0, 1]");
    if (cap < 1) throw ContractError("truncated_geometric_mean: cap must be positive");
    if (p == 1.0) return 1.0;
    return (1.0 - std::pow(1.0 - p, cap)) / p;
}

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::string player_name(std::int32_t index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "p%05d", index);
    return buf;
}

std::int32_t draw_attempts(double p, Sampler& rng) {
    if (p >= 1.0) return 1;
    const double g = std::log(rng.uniform_pos()) / std::log1p(-p);
    const double k = 1.0 + std::floor(g);
    return static_cast<std::int32_t>(std::min(k, static_cast<double>(kAttemptCap)));
}

// Stream tags: one sampler per concern so layouts can change independently.
constexpr std::uint64_t kLevelTag = 1;
constexpr std::uint64_t kPlayerTag = 2;
constexpr std::uint64_t kAttributeTag = 3;
constexpr std::uint64_t kAttemptBase = std::uint64_t{1} << 32;
constexpr std::uint64_t kTelemetryBase = std::uint64_t{2} << 32;
constexpr std::uint64_t kSkillPathBase = std::uint64_t{3} << 32;

// Effective skill mixes a persistent component with an AR(1) component over
// the level axis, so what a model learns about a player from one stretch of
// levels decays in value with distance — while the persistent floor keeps
// personalization worthwhile everywhere.
constexpr double kPersistentShare = 0.55;
constexpr double kDriftPhi = 0.988;

} // namespace

SynthResult generate(const SynthConfig& config) {
    validate(config);
    const std::int32_t P = config.n_players;
    const std::int32_t L = config.n_levels;

    SynthResult out;
    SynthTruth& truth = out.truth;

    Sampler level_rng(derive_seed(config.seed, kLevelTag));
    for (std::int32_t l = 1; l <= L; ++l) {
        const double frac = static_cast<double>(l) / static_cast<double>(L);
        double d = 3.15 * std::tanh(4.0 * frac) + 0.35 * std::max(0.0, frac - 0.55) +
                   0.4 * std::sin(2.0 * kPi * static_cast<double>(l) / 23.0) +
                   0.25 * level_rng.normal();
        if (l % 10 == 0) d -= 1.2;
        const double rise = std::clamp(2.75 * (frac - 0.2), 0.0, 1.0);
        const double fall = 1.0 - 0.62 * std::clamp((frac - 0.52) / 0.48, 0.0, 1.0);
        const double a =
            std::clamp(1.15 * rise * fall + 0.05 * level_rng.normal(), 0.0, 1.3);
        truth.level_ids.push_back(l);
        truth.difficulty.push_back(d);
        truth.variance_amp.push_back(a);
    }

    Sampler player_rng(derive_seed(config.seed, kPlayerTag));
    std::vector<double> persistent(static_cast<std::size_t>(P));
    for (std::int32_t u = 1; u <= P; ++u) {
        truth.player_ids.push_back(player_name(u));
        persistent[static_cast<std::size_t>(u) - 1] = player_rng.normal();
        truth.consistency.push_back(config.consistency_stdev * player_rng.normal());
    }

    const double w_persist = std::sqrt(kPersistentShare);
    const double w_drift = std::sqrt(1.0 - kPersistentShare);
    const double ar_noise = std::sqrt(1.0 - kDriftPhi * kDriftPhi);
    std::vector<double> skill_at(static_cast<std::size_t>(P) * static_cast<std::size_t>(L));
    truth.skill.assign(static_cast<std::size_t>(P), 0.0);
    for (std::int32_t u = 0; u < P; ++u) {
        Sampler path_rng(derive_seed(config.seed, kSkillPathBase + static_cast<std::uint64_t>(u)));
        double t = path_rng.normal();
        double sum = 0.0;
        for (std::int32_t l = 0; l < L; ++l) {
            if (l > 0) t = kDriftPhi * t + ar_noise * path_rng.normal();
            const double s =
                config.skill_stdev * (w_persist * persistent[static_cast<std::size_t>(u)] + w_drift * t);
            skill_at[static_cast<std::size_t>(u) * L + l] = s;
            sum += s;
        }
        truth.skill[static_cast<std::size_t>(u)] = sum / static_cast<double>(L);
    }

    truth.success_prob.resize(static_cast<std::size_t>(P) * static_cast<std::size_t>(L));
    for (std::int32_t u = 0; u < P; ++u)
        for (std::int32_t l = 0; l < L; ++l) {
            const double logit = config.base_logit - truth.difficulty[l] +
                                 skill_at[static_cast<std::size_t>(u) * L + l] +
                                 config.interaction_strength * truth.consistency[u] *
                                     truth.variance_amp[l];
            truth.success_prob[static_cast<std::size_t>(u) * L + l] =
                std::clamp(logistic(logit), config.p_min, 1.0);
        }

    const double d_lo = *std::min_element(truth.difficulty.begin(), truth.difficulty.end());
    const double d_hi = *std::max_element(truth.difficulty.begin(), truth.difficulty.end());
    std::vector<double> d_norm(truth.difficulty.size(), 0.5);
    if (d_hi > d_lo)
        for (std::size_t l = 0; l < d_norm.size(); ++l)
            d_norm[l] = (truth.difficulty[l] - d_lo) / (d_hi - d_lo);

    std::vector<InteractionRecord> records;
    records.reserve(static_cast<std::size_t>(P) * static_cast<std::size_t>(L));
    for (std::int32_t u = 0; u < P; ++u) {
        Sampler attempt_rng(derive_seed(config.seed, kAttemptBase + static_cast<std::uint64_t>(u)));
        Sampler telemetry_rng(
            derive_seed(config.seed, kTelemetryBase + static_cast<std::uint64_t>(u)));
        const double c = truth.consistency[u];
        for (std::int32_t l = 0; l < L; ++l) {
            const double p = truth.success(u, l);
            records.push_back({truth.player_ids[u], truth.level_ids[l],
                               draw_attempts(p, attempt_rng)});
            const double s = skill_at[static_cast<std::size_t>(u) * L + l];
            const double dn = d_norm[l];
            BehaviorRecord beh;
            beh.values[0] =
                std::clamp(0.75 - 0.12 * s + 0.08 * dn + 0.08 * telemetry_rng.normal(), 0.05, 2.0);
            beh.values[1] = std::max(0.0, 0.15 + 0.25 * dn - 0.10 * s + 0.10 * telemetry_rng.normal());
            beh.values[2] = std::max(0.0, 0.20 + 0.30 * dn - 0.12 * s + 0.12 * telemetry_rng.normal());
            beh.values[3] = std::max(0.0, 3.0 + 1.5 * dn + 0.5 * c + 0.60 * telemetry_rng.normal());
            beh.values[4] = std::max(0.0, 0.80 + 0.60 * dn + 0.30 * telemetry_rng.normal());
            beh.values[5] = std::max(0.0, 1.20 + 0.50 * dn + 0.40 * telemetry_rng.normal());
            beh.values[6] = std::max(0.0, 0.30 + 0.30 * dn + 0.20 * telemetry_rng.normal());
            beh.values[7] = std::max(0.0, 0.15 + 0.20 * dn + 0.15 * telemetry_rng.normal());
            beh.values[8] = std::max(0.0, 0.10 + 0.15 * dn + 0.12 * telemetry_rng.normal());
            out.telemetry[telemetry_key(truth.player_ids[u], truth.level_ids[l])] = beh;
        }
    }
    out.data = make_dataset(std::move(records));

    std::map<std::int32_t, std::pair<double, std::size_t>> level_sums;
    for (const auto& r : out.data.records) {
        auto& [sum, n] = level_sums[r.level_id];
        sum += r.attempts;
        ++n;
    }

    Sampler attr_rng(derive_seed(config.seed, kAttributeTag));
    constexpr std::array<double, kLevelFlags.size()> kFlagThresholds = {1.8, 2.2, 2.6, 3.0, 2.4};
    for (std::int32_t l = 0; l < L; ++l) {
        LevelAttributes attr;
        attr.level_id = truth.level_ids[l];
        const auto& [sum, n] = level_sums.at(attr.level_id);
        attr.avg_attempts_train = sum / static_cast<double>(n);
        attr.color_count = 3 + static_cast<std::int32_t>(bounded(attr_rng.engine(), 4));
        const double concentration = 0.6 + 2.4 * d_norm[l];
        std::vector<double> weights(static_cast<std::size_t>(attr.color_count));
        for (double& w : weights) w = attr_rng.gamma(concentration, 1.0);
        attr.color_entropy = color_entropy(weights);
        for (std::size_t j = 0; j < kLevelFlags.size(); ++j)
            attr.flags[kLevelFlags[j]] =
                attr_rng.uniform() < logistic(1.5 * (truth.difficulty[l] - kFlagThresholds[j]))
                    ? 1
                    : 0;
        out.attributes.push_back(std::move(attr));
    }
    return out;
}

OracleReport oracle_metrics(const SynthTruth& truth, const Split& split) {
    std::map<std::string, std::size_t> player_pos;
    for (std::size_t i = 0; i < truth.player_ids.size(); ++i)
        player_pos[truth.player_ids[i]] = i;
    std::map<std::int32_t, std::size_t> level_pos;
    for (std::size_t i = 0; i < truth.level_ids.size(); ++i) level_pos[truth.level_ids[i]] = i;

    OracleReport report;
    double abs_sum = 0.0, sq_sum = 0.0;
    for (const auto& r : split.test.records) {
        auto pu = player_pos.find(r.player_id);
        auto pl = level_pos.find(r.level_id);
        if (pu == player_pos.end())
            throw ContractError("oracle_metrics: player " + r.player_id + " not in truth");
        if (pl == level_pos.end())
            throw ContractError("oracle_metrics: level " + std::to_string(r.level_id) +
                                " not in truth");
        const double expected = truncated_geometric_mean(truth.success(pu->second, pl->second));
        const double err = expected - r.attempts;
        abs_sum += std::abs(err);
        sq_sum += err * err;
        ++report.n;
    }
    if (report.n == 0) throw ContractError("oracle_metrics: empty test set");
    report.mae = abs_sum / static_cast<double>(report.n);
    report.rmse = std::sqrt(sq_sum / static_cast<double>(report.n));
    return report;
}

void save_truth(const SynthTruth& truth, const std::string& path) {
    CsvWriter w(path);
    w.write_row({"kind", "player_id", "level_id", "value"});
    for (std::size_t u = 0; u < truth.player_ids.size(); ++u)
        w.write_row({"skill", truth.player_ids[u], "", fmt_double_exact(truth.skill[u])});
    for (std::size_t u = 0; u < truth.player_ids.size(); ++u)
        w.write_row(
            {"consistency", truth.player_ids[u], "", fmt_double_exact(truth.consistency[u])});
    for (std::size_t l = 0; l < truth.level_ids.size(); ++l)
        w.write_row({"difficulty", "", std::to_string(truth.level_ids[l]),
                     fmt_double_exact(truth.difficulty[l])});
    for (std::size_t l = 0; l < truth.level_ids.size(); ++l)
        w.write_row({"variance_amp", "", std::to_string(truth.level_ids[l]),
                     fmt_double_exact(truth.variance_amp[l])});
    for (std::size_t u = 0; u < truth.player_ids.size(); ++u)
        for (std::size_t l = 0; l < truth.level_ids.size(); ++l)
            w.write_row({"success_prob", truth.player_ids[u], std::to_string(truth.level_ids[l]),
                         fmt_double_exact(truth.success(u, l))});
    w.close();
}

SynthTruth load_truth(const std::string& path) {
    CsvReader reader(path);
    const int c_kind = reader.require_column("kind");
    const int c_player = reader.require_column("player_id");
    const int c_level = reader.require_column("level_id");
    const int c_value = reader.require_column("value");

    SynthTruth truth;
    std::map<std::string, std::size_t> player_pos;
    std::map<std::int32_t, std::size_t> level_pos;
    struct ProbRow {
        std::string player;
        std::int32_t level;
        double value;
    };
    std::vector<ProbRow> probs;
    std::vector<std::pair<std::string, double>> consistency_rows;
    std::vector<std::pair<std::int32_t, double>> amp_rows;

    std::vector<std::string> fields;
    while (reader.next(fields)) {
        const std::string& kind = fields[static_cast<std::size_t>(c_kind)];
        const std::string& player = fields[static_cast<std::size_t>(c_player)];
        const std::string& level_str = fields[static_cast<std::size_t>(c_level)];
        const double value =
            parse_double_field(fields[static_cast<std::size_t>(c_value)], reader, "value");
        auto level_of = [&] {
            return static_cast<std::int32_t>(parse_long_field(level_str, reader, "level_id"));
        };
        if (kind == "skill") {
            if (player_pos.count(player))
                throw ParseError("duplicate skill row for " + player, reader.line_number());
            player_pos[player] = truth.player_ids.size();
            truth.player_ids.push_back(player);
            truth.skill.push_back(value);
        } else if (kind == "consistency") {
            consistency_rows.emplace_back(player, value);
        } else if (kind == "difficulty") {
            const std::int32_t level = level_of();
            if (level_pos.count(level))
                throw ParseError("duplicate difficulty row for level " + level_str,
                                 reader.line_number());
            level_pos[level] = truth.level_ids.size();
            truth.level_ids.push_back(level);
            truth.difficulty.push_back(value);
        } else if (kind == "variance_amp") {
            amp_rows.emplace_back(level_of(), value);
        } else if (kind == "success_prob") {
            probs.push_back({player, level_of(), value});
        } else {
            throw ParseError("unknown truth kind '" + kind + "'", reader.line_number());
        }
    }

    truth.consistency.assign(truth.player_ids.size(), 0.0);
    for (const auto& [player, value] : consistency_rows) {
        auto it = player_pos.find(player);
        if (it == player_pos.end())
            throw ValidationError("consistency row for unknown player " + player);
        truth.consistency[it->second] = value;
    }
    truth.variance_amp.assign(truth.level_ids.size(), 0.0);
    for (const auto& [level, value] : amp_rows) {
        auto it = level_pos.find(level);
        if (it == level_pos.end())
            throw ValidationError("variance_amp row for unknown level " + std::to_string(level));
        truth.variance_amp[it->second] = value;
    }
    const std::size_t cells = truth.player_ids.size() * truth.level_ids.size();
    if (probs.size() != cells)
        throw ValidationError("truth file has " + std::to_string(probs.size()) +
                              " success probabilities, expected " + std::to_string(cells));
    truth.success_prob.assign(cells, std::numeric_limits<double>::quiet_NaN());
    for (const auto& row : probs) {
        auto pu = player_pos.find(row.player);
        auto pl = level_pos.find(row.level);
        if (pu == player_pos.end() || pl == level_pos.end())
            throw ValidationError("success_prob row references unknown entity");
        truth.success_prob[pu->second * truth.level_ids.size() + pl->second] = row.value;
    }
    for (double p : truth.success_prob)
        if (!std::isfinite(p)) throw ValidationError("truth file success probabilities incomplete");
    return truth;
}

TruthColumns truth_columns(const SynthTruth& truth) {
    TruthColumns cols;
    for (std::size_t u = 0; u < truth.player_ids.size(); ++u)
        cols.player_skill[truth.player_ids[u]] = truth.skill[u];
    for (std::size_t l = 0; l < truth.level_ids.size(); ++l)
        cols.level_difficulty[truth.level_ids[l]] = truth.difficulty[l];
    return cols;
}

} // namespace levelcast
