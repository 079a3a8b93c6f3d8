#include "levelcast/features.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <tuple>

#include <json.hpp>

#include "levelcast/errors.hpp"

namespace levelcast {

std::string telemetry_key(const std::string& player_id, std::int32_t level_id) {
    return player_id + '\x1f' + std::to_string(level_id);
}

double color_entropy(std::span<const double> weights) {
    double total = 0.0;
    for (double w : weights) {
        if (w < 0.0 || !std::isfinite(w))
            throw ValidationError("color_entropy: weights must be non-negative and finite");
        total += w;
    }
    if (weights.empty() || total <= 0.0)
        throw ValidationError("color_entropy: weights must have positive sum");
    double s = 0.0;
    for (double w : weights) {
        if (w > 0.0) {
            double p = w / total;
            s -= p * std::log(p);
        }
    }
    return s;
}

PlayerAggregates aggregate_player(std::span<const InteractionRecord> records,
                                  const TelemetryTable* telemetry) {
    if (records.empty())
        throw ContractError("aggregate_player: empty record span");
    PlayerAggregates agg;
    agg.player_id = records.front().player_id;
    agg.n_observed = static_cast<std::int32_t>(records.size());
    agg.telemetry_present = telemetry != nullptr;

    double sum_attempts = 0.0;
    std::array<double, kBehaviorFields.size()> sums{};
    for (const auto& r : records) {
        if (r.player_id != agg.player_id)
            throw ContractError("aggregate_player: records span multiple players ('" +
                                agg.player_id + "' vs '" + r.player_id + "')");
        sum_attempts += r.attempts;
        if (telemetry) {
            auto it = telemetry->find(telemetry_key(r.player_id, r.level_id));
            if (it != telemetry->end())
                for (std::size_t f = 0; f < sums.size(); ++f) sums[f] += it->second.values[f];
            // absent entries contribute the schema default of 0
        }
    }
    const double n = static_cast<double>(records.size());
    agg.mean_attempts = sum_attempts / n;
    for (std::size_t f = 0; f < sums.size(); ++f) agg.behavior_means[f] = sums[f] / n;
    return agg;
}

// ---------------------------------------------------------------------------
// RowBlock

void RowBlock::push_back(const DesignRow& row) {
    append(row.indices, row.values, row.target);
}

void RowBlock::append(std::span<const std::uint32_t> indices, std::span<const double> values,
                      double target) {
    if (indices.size() != values.size())
        throw ContractError("RowBlock::append: index/value length mismatch");
    indices_.insert(indices_.end(), indices.begin(), indices.end());
    values_.insert(values_.end(), values.begin(), values.end());
    targets_.push_back(target);
    offsets_.push_back(indices_.size());
}

DesignRowView RowBlock::row(std::size_t i) const {
    const std::size_t begin = offsets_[i];
    const std::size_t end = offsets_[i + 1];
    return {{indices_.data() + begin, end - begin},
            {values_.data() + begin, end - begin},
            targets_[i]};
}

// ---------------------------------------------------------------------------
// FeatureSchema

namespace {

constexpr const char* kAggAttempts = "p_mean_attempts";
constexpr const char* kAttrAvgAttempts = "l_avg_attempts";
constexpr const char* kAttrEntropy = "l_color_entropy";
constexpr const char* kAttrColors = "l_color_count";

std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 1099511628211ULL;
    }
    return h;
}

std::uint64_t fnv1a_str(std::uint64_t h, const std::string& s) {
    return fnv1a(h, s.data(), s.size());
}

bool is_flag_column(const std::string& name) {
    return name.rfind("l_flag_", 0) == 0;
}

} // namespace

FeatureSchema FeatureSchema::build(const Split& split, bool augment,
                                   const std::vector<LevelAttributes>* attrs,
                                   const TelemetryTable* telemetry,
                                   std::int32_t observed_levels) {
    return FeatureContext::build(split, augment, attrs, telemetry, observed_levels).schema();
}

std::int32_t FeatureSchema::player_column(const std::string& player_id) const {
    auto it = player_pos_.find(player_id);
    return it == player_pos_.end() ? -1 : static_cast<std::int32_t>(it->second);
}

std::int32_t FeatureSchema::level_column(std::int32_t level_id) const {
    auto it = level_pos_.find(level_id);
    return it == level_pos_.end() ? -1
                                  : static_cast<std::int32_t>(level_block() + it->second);
}

std::string FeatureSchema::column_name(std::uint32_t column) const {
    if (column < level_block()) return "player:" + players_[column];
    if (column < aggregate_block())
        return "level:" + std::to_string(levels_[column - level_block()]);
    if (column < attribute_block()) return agg_names_[column - aggregate_block()];
    if (column < width_) return attr_names_[column - attribute_block()];
    throw ContractError("column_name: column " + std::to_string(column) + " out of range");
}

std::uint64_t FeatureSchema::fingerprint() const {
    std::uint64_t h = 1469598103934665603ULL;
    for (const auto& p : players_) h = fnv1a_str(h, p + '\n');
    for (auto l : levels_) h = fnv1a_str(h, std::to_string(l) + '\n');
    auto mix_norm = [&](const std::string& name, const Normalization& n) {
        h = fnv1a_str(h, name);
        h = fnv1a(h, &n.mean, sizeof n.mean);
        h = fnv1a(h, &n.scale, sizeof n.scale);
    };
    for (std::size_t i = 0; i < agg_names_.size(); ++i) mix_norm(agg_names_[i], agg_norms_[i]);
    for (std::size_t i = 0; i < attr_names_.size(); ++i) mix_norm(attr_names_[i], attr_norms_[i]);
    h = fnv1a(h, &width_, sizeof width_);
    return h;
}

std::vector<int> FeatureSchema::block_groups() const {
    std::vector<int> groups(width_, 0);
    for (std::uint32_t c = level_block(); c < aggregate_block(); ++c) groups[c] = 1;
    for (std::uint32_t c = aggregate_block(); c < attribute_block(); ++c) groups[c] = 2;
    for (std::uint32_t c = attribute_block(); c < width_; ++c) groups[c] = 3;
    return groups;
}

void FeatureSchema::save(const std::string& path) const {
    nlohmann::json j;
    j["players"] = players_;
    j["levels"] = levels_;
    auto dump_block = [](const std::vector<std::string>& names,
                         const std::vector<Normalization>& norms) {
        nlohmann::json arr = nlohmann::json::array();
        for (std::size_t i = 0; i < names.size(); ++i)
            arr.push_back({{"name", names[i]}, {"mean", norms[i].mean}, {"scale", norms[i].scale}});
        return arr;
    };
    j["aggregates"] = dump_block(agg_names_, agg_norms_);
    j["attributes"] = dump_block(attr_names_, attr_norms_);
    j["augmented"] = augmented_;
    j["has_telemetry"] = has_telemetry_;
    j["width"] = width_;
    j["fingerprint"] = fingerprint();
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << j.dump(2) << '\n';
}

FeatureSchema FeatureSchema::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    nlohmann::json j;
    in >> j;

    FeatureSchema s;
    s.players_ = j.at("players").get<std::vector<std::string>>();
    s.levels_ = j.at("levels").get<std::vector<std::int32_t>>();
    for (std::size_t i = 0; i < s.players_.size(); ++i)
        s.player_pos_[s.players_[i]] = static_cast<std::uint32_t>(i);
    for (std::size_t i = 0; i < s.levels_.size(); ++i)
        s.level_pos_[s.levels_[i]] = static_cast<std::uint32_t>(i);
    auto load_block = [](const nlohmann::json& arr, std::vector<std::string>& names,
                         std::vector<Normalization>& norms) {
        for (const auto& e : arr) {
            names.push_back(e.at("name").get<std::string>());
            norms.push_back({e.at("mean").get<double>(), e.at("scale").get<double>()});
        }
    };
    load_block(j.at("aggregates"), s.agg_names_, s.agg_norms_);
    load_block(j.at("attributes"), s.attr_names_, s.attr_norms_);
    s.augmented_ = j.at("augmented").get<bool>();
    s.has_telemetry_ = j.at("has_telemetry").get<bool>();
    s.width_ = j.at("width").get<std::uint32_t>();
    const auto expected_width = s.player_pos_.size() + s.level_pos_.size() + s.agg_names_.size() +
                                s.attr_names_.size();
    if (s.width_ != expected_width)
        throw ValidationError(path + ": inconsistent schema width");
    if (j.contains("fingerprint") && j["fingerprint"].get<std::uint64_t>() != s.fingerprint())
        throw ValidationError(path + ": schema fingerprint mismatch");
    return s;
}

// ---------------------------------------------------------------------------
// FeatureContext

FeatureContext FeatureContext::build(const Split& split, bool augment,
                                     const std::vector<LevelAttributes>* attrs,
                                     const TelemetryTable* telemetry,
                                     std::int32_t observed_levels) {
    const Dataset& train = split.train;
    FeatureContext ctx;
    FeatureSchema& schema = ctx.schema_;

    schema.players_ = train.player_ids();
    for (std::size_t i = 0; i < schema.players_.size(); ++i)
        schema.player_pos_[schema.players_[i]] = static_cast<std::uint32_t>(i);
    schema.levels_ = train.level_ids();
    for (std::size_t i = 0; i < schema.levels_.size(); ++i)
        schema.level_pos_[schema.levels_[i]] = static_cast<std::uint32_t>(i);
    schema.augmented_ = augment;
    schema.has_telemetry_ = telemetry != nullptr;

    // Per-level mean attempts over training players only; test players'
    // observed records are deliberately left out.
    std::map<std::int32_t, std::pair<double, std::size_t>> level_sums;
    double global_sum = 0.0;
    std::size_t global_n = 0;
    for (const auto& r : train.records) {
        if (split.test_players.count(r.player_id)) continue;
        auto& [sum, n] = level_sums[r.level_id];
        sum += r.attempts;
        ++n;
        global_sum += r.attempts;
        ++global_n;
    }
    const double global_mean = global_n ? global_sum / static_cast<double>(global_n) : 1.0;

    for (std::int32_t level : schema.levels_) {
        LevelAttributes a;
        if (attrs) {
            auto it = std::find_if(attrs->begin(), attrs->end(),
                                   [&](const LevelAttributes& x) { return x.level_id == level; });
            if (it == attrs->end())
                throw ValidationError("level attributes missing level " + std::to_string(level));
            a = *it;
        } else {
            a.level_id = level;
        }
        auto it = level_sums.find(level);
        a.avg_attempts_train =
            it != level_sums.end() ? it->second.first / static_cast<double>(it->second.second)
                                   : global_mean;
        ctx.attributes_.emplace(level, std::move(a));
    }

    // Aggregates over each player's records up to the observation horizon.
    const InteractionRecord* begin = train.records.data();
    const InteractionRecord* end = begin + train.records.size();
    for (const InteractionRecord* p = begin; p != end;) {
        const InteractionRecord* q = p;
        while (q != end && q->player_id == p->player_id) ++q;
        const InteractionRecord* horizon = p;
        while (horizon != q && horizon->level_id <= observed_levels) ++horizon;
        PlayerAggregates agg;
        if (horizon == p) {
            // No observations below the horizon; fall back to neutral values.
            agg.player_id = p->player_id;
            agg.n_observed = 0;
            agg.mean_attempts = global_mean;
            agg.telemetry_present = telemetry != nullptr;
        } else {
            agg = aggregate_player({p, horizon}, telemetry);
        }
        ctx.aggregates_.emplace(agg.player_id, std::move(agg));
        p = q;
    }

    if (augment) {
        schema.agg_names_.push_back(kAggAttempts);
        if (telemetry)
            for (const char* f : kBehaviorFields) schema.agg_names_.push_back(std::string("p_") + f);
        schema.attr_names_.push_back(kAttrAvgAttempts);
        if (attrs) {
            schema.attr_names_.push_back(kAttrEntropy);
            schema.attr_names_.push_back(kAttrColors);
            for (const char* f : kLevelFlags) schema.attr_names_.push_back(std::string("l_") + f);
        }
    }
    schema.width_ = static_cast<std::uint32_t>(schema.players_.size() + schema.levels_.size() +
                                               schema.agg_names_.size() + schema.attr_names_.size());

    if (augment) {
        // Standardize continuous columns with train-row statistics. Binary
        // flag columns stay raw so zero entries are never materialized.
        auto standardize = [&](const std::vector<std::string>& names,
                               auto&& value_of) -> std::vector<FeatureSchema::Normalization> {
            std::vector<FeatureSchema::Normalization> norms(names.size());
            std::vector<double> sum(names.size(), 0.0), sumsq(names.size(), 0.0);
            for (const auto& r : train.records) {
                for (std::size_t i = 0; i < names.size(); ++i) {
                    double v = value_of(r, i);
                    sum[i] += v;
                    sumsq[i] += v * v;
                }
            }
            const double n = static_cast<double>(train.records.size());
            for (std::size_t i = 0; i < names.size(); ++i) {
                if (is_flag_column(names[i])) continue; // keep raw
                double mean = sum[i] / n;
                double var = std::max(0.0, sumsq[i] / n - mean * mean);
                double sd = std::sqrt(var);
                norms[i].mean = mean;
                norms[i].scale = sd > 1e-12 ? sd : 1.0;
            }
            return norms;
        };
        schema.agg_norms_ = standardize(schema.agg_names_, [&](const InteractionRecord& r,
                                                               std::size_t i) {
            const auto& agg = ctx.aggregates_.at(r.player_id);
            return i == 0 ? agg.mean_attempts : agg.behavior_means[i - 1];
        });
        schema.attr_norms_ = standardize(schema.attr_names_, [&](const InteractionRecord& r,
                                                                 std::size_t i) {
            const auto& a = ctx.attributes_.at(r.level_id);
            if (i == 0) return a.avg_attempts_train;
            if (i == 1) return a.color_entropy;
            if (i == 2) return static_cast<double>(a.color_count);
            const std::string& name = schema.attr_names_[i];
            auto it = a.flags.find(name.substr(2)); // strip "l_"
            return it != a.flags.end() ? static_cast<double>(it->second) : 0.0;
        });
    }
    return ctx;
}

DesignRow FeatureContext::encode(const InteractionRecord& r) const {
    const FeatureSchema& s = schema_;
    std::int32_t pcol = s.player_column(r.player_id);
    if (pcol < 0)
        throw ValidationError("encode: player '" + r.player_id + "' not in schema");
    std::int32_t lcol = s.level_column(r.level_id);
    if (lcol < 0)
        throw ValidationError("encode: level " + std::to_string(r.level_id) + " not in schema");

    DesignRow row;
    row.target = r.attempts;
    row.indices.push_back(static_cast<std::uint32_t>(pcol));
    row.values.push_back(1.0);
    row.indices.push_back(static_cast<std::uint32_t>(lcol));
    row.values.push_back(1.0);
    if (!s.augmented()) return row;

    const auto& agg = aggregates_.at(r.player_id);
    for (std::size_t i = 0; i < s.aggregate_count(); ++i) {
        double raw = i == 0 ? agg.mean_attempts : agg.behavior_means[i - 1];
        const auto& n = s.aggregate_norm(i);
        row.indices.push_back(s.aggregate_block() + static_cast<std::uint32_t>(i));
        row.values.push_back((raw - n.mean) / n.scale);
    }
    const auto& attr = attributes_.at(r.level_id);
    for (std::size_t i = 0; i < s.attribute_count(); ++i) {
        const std::string& name = s.attribute_names()[i];
        double raw;
        if (i == 0)
            raw = attr.avg_attempts_train;
        else if (i == 1)
            raw = attr.color_entropy;
        else if (i == 2)
            raw = static_cast<double>(attr.color_count);
        else {
            auto it = attr.flags.find(name.substr(2));
            raw = it != attr.flags.end() ? static_cast<double>(it->second) : 0.0;
            if (raw == 0.0) continue; // flags are sparse
        }
        const auto& n = s.attribute_norm(i);
        row.indices.push_back(s.attribute_block() + static_cast<std::uint32_t>(i));
        row.values.push_back((raw - n.mean) / n.scale);
    }
    return row;
}

RowBlock FeatureContext::encode_rows(const Dataset& d) const {
    RowBlock block;
    for (const auto& r : d.records) block.push_back(encode(r));
    return block;
}

std::vector<std::string> FeatureContext::rf_feature_names() const {
    std::vector<std::string> names;
    names.push_back(kAggAttempts);
    if (schema_.has_telemetry())
        for (const char* f : kBehaviorFields) names.push_back(std::string("p_") + f);
    names.push_back(kAttrAvgAttempts);
    bool have_attr_details =
        std::any_of(attributes_.begin(), attributes_.end(),
                    [](const auto& kv) { return kv.second.color_count > 0; });
    if (have_attr_details) {
        names.push_back(kAttrEntropy);
        names.push_back(kAttrColors);
        for (const char* f : kLevelFlags) names.push_back(std::string("l_") + f);
    }
    return names;
}

void FeatureContext::rf_features(const InteractionRecord& r, std::vector<double>& out) const {
    out.clear();
    const auto& agg = aggregates_.at(r.player_id);
    out.push_back(agg.mean_attempts);
    if (schema_.has_telemetry())
        for (double v : agg.behavior_means) out.push_back(v);
    auto it = attributes_.find(r.level_id);
    if (it == attributes_.end())
        throw ValidationError("rf_features: level " + std::to_string(r.level_id) +
                              " not in context");
    const auto& a = it->second;
    out.push_back(a.avg_attempts_train);
    bool have_attr_details =
        std::any_of(attributes_.begin(), attributes_.end(),
                    [](const auto& kv) { return kv.second.color_count > 0; });
    if (have_attr_details) {
        out.push_back(a.color_entropy);
        out.push_back(static_cast<double>(a.color_count));
        for (const char* f : kLevelFlags) {
            auto fit = a.flags.find(f);
            out.push_back(fit != a.flags.end() ? static_cast<double>(fit->second) : 0.0);
        }
    }
}

const PlayerAggregates& FeatureContext::aggregates_for(const std::string& player_id) const {
    auto it = aggregates_.find(player_id);
    if (it == aggregates_.end())
        throw ValidationError("no aggregates for player '" + player_id + "'");
    return it->second;
}

double FeatureContext::level_avg_attempts(std::int32_t level_id) const {
    auto it = attributes_.find(level_id);
    if (it == attributes_.end())
        throw ValidationError("no attributes for level " + std::to_string(level_id));
    return it->second.avg_attempts_train;
}

FmRows build_fm_rows(const Split& split, const FeatureContext& ctx) {
    return {ctx.encode_rows(split.train), ctx.encode_rows(split.test)};
}

RfMatrices build_rf_matrix(const Split& split, const FeatureContext& ctx) {
    RfMatrices out;
    auto fill = [&](const Dataset& d, RfMatrix& m) {
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
    };
    fill(split.train, out.train);
    fill(split.test, out.test);
    return out;
}

// ---------------------------------------------------------------------------
// File formats

std::vector<LevelAttributes> load_level_attributes(const std::string& path) {
    CsvReader reader(path);
    int c_level = reader.require_column("level_id");
    int c_avg = reader.require_column("avg_attempts_train");
    int c_entropy = reader.require_column("color_entropy");
    int c_colors = reader.require_column("color_count");
    std::vector<std::pair<std::string, int>> flag_cols;
    for (const char* f : kLevelFlags) {
        int c = reader.column(f);
        if (c >= 0) flag_cols.emplace_back(f, c);
    }

    std::vector<LevelAttributes> attrs;
    std::vector<std::string> fields;
    while (reader.next(fields)) {
        LevelAttributes a;
        a.level_id = static_cast<std::int32_t>(
            parse_long_field(fields[static_cast<std::size_t>(c_level)], reader, "level_id"));
        a.avg_attempts_train =
            parse_double_field(fields[static_cast<std::size_t>(c_avg)], reader, "avg_attempts_train");
        a.color_entropy = parse_double_field(fields[static_cast<std::size_t>(c_entropy)], reader,
                                             "color_entropy");
        a.color_count = static_cast<std::int32_t>(
            parse_long_field(fields[static_cast<std::size_t>(c_colors)], reader, "color_count"));
        if (a.color_count >= 1 &&
            a.color_entropy > std::log(static_cast<double>(a.color_count)) + 1e-9)
            throw ValidationError(path + ": color_entropy exceeds ln(color_count) (line " +
                                  std::to_string(reader.line_number()) + ")");
        for (const auto& [name, col] : flag_cols) {
            long v = parse_long_field(fields[static_cast<std::size_t>(col)], reader, name);
            if (v != 0 && v != 1)
                throw ValidationError(path + ": flag " + name + " must be 0 or 1 (line " +
                                      std::to_string(reader.line_number()) + ")");
            a.flags[name] = static_cast<int>(v);
        }
        attrs.push_back(std::move(a));
    }
    return attrs;
}

void save_level_attributes(const std::vector<LevelAttributes>& attrs, const std::string& path) {
    CsvWriter w(path);
    std::vector<std::string> header = {"level_id", "avg_attempts_train", "color_entropy",
                                       "color_count"};
    for (const char* f : kLevelFlags) header.push_back(f);
    w.write_row(header);
    for (const auto& a : attrs) {
        std::vector<std::string> row = {std::to_string(a.level_id),
                                        fmt_double_exact(a.avg_attempts_train),
                                        fmt_double_exact(a.color_entropy),
                                        std::to_string(a.color_count)};
        for (const char* f : kLevelFlags) {
            auto it = a.flags.find(f);
            row.push_back(std::to_string(it != a.flags.end() ? it->second : 0));
        }
        w.write_row(row);
    }
    w.close();
}

void save_telemetry(const TelemetryTable& table, const std::string& path) {
    struct Row {
        std::string player;
        std::int32_t level;
        const BehaviorRecord* rec;
    };
    std::vector<Row> rows;
    rows.reserve(table.size());
    for (const auto& [key, rec] : table) {
        const auto sep = key.find('\x1f');
        rows.push_back({key.substr(0, sep),
                        static_cast<std::int32_t>(std::stol(key.substr(sep + 1))), &rec});
    }
    std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
        return std::tie(a.player, a.level) < std::tie(b.player, b.level);
    });
    CsvWriter w(path);
    std::vector<std::string> header = {"player_id", "level_id"};
    header.insert(header.end(), kBehaviorFields.begin(), kBehaviorFields.end());
    w.write_row(header);
    for (const Row& r : rows) {
        std::vector<std::string> cells = {r.player, std::to_string(r.level)};
        for (double v : r.rec->values) cells.push_back(fmt_double_exact(v));
        w.write_row(cells);
    }
    w.close();
}

TelemetryTable load_telemetry(const std::string& path) {
    CsvReader reader(path);
    int c_player = reader.require_column("player_id");
    int c_level = reader.require_column("level_id");
    std::array<int, kBehaviorFields.size()> cols{};
    for (std::size_t i = 0; i < kBehaviorFields.size(); ++i)
        cols[i] = reader.require_column(kBehaviorFields[i]);

    TelemetryTable table;
    std::vector<std::string> fields;
    while (reader.next(fields)) {
        const std::string& player = fields[static_cast<std::size_t>(c_player)];
        auto level = static_cast<std::int32_t>(
            parse_long_field(fields[static_cast<std::size_t>(c_level)], reader, "level_id"));
        BehaviorRecord rec;
        for (std::size_t i = 0; i < cols.size(); ++i)
            rec.values[i] = parse_double_field(fields[static_cast<std::size_t>(cols[i])], reader,
                                               kBehaviorFields[i]);
        table[telemetry_key(player, level)] = rec;
    }
    return table;
}

} // namespace levelcast
