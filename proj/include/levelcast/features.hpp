#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "levelcast/dataset.hpp"

namespace levelcast {

// Per-level behavior fields carried by the optional telemetry CSV, in
// column order. Player-side design features are the means of these over
// the first n observed levels, prefixed by mean attempts.
inline constexpr std::array<const char*, 9> kBehaviorFields = {
    "moves_used_ratio",   "pregame_boosters", "ingame_boosters",
    "powerpieces_total",  "powerpiece_combos", "rockets_solo",
    "rocket_bomb",        "rocket_magic",      "bomb_magic",
};

inline constexpr std::array<const char*, 5> kLevelFlags = {
    "flag_spreading_cg", "flag_layercake_cg", "flag_consecutive_cg",
    "flag_mega_multicolor", "flag_teleport",
};

struct BehaviorRecord {
    std::array<double, kBehaviorFields.size()> values{};
};

// Keyed by (player_id, level_id).
using TelemetryTable =
    std::unordered_map<std::string, BehaviorRecord>;

std::string telemetry_key(const std::string& player_id, std::int32_t level_id);

// Static descriptors of one level. avg_attempts_train is recomputed from
// the training players of the active split before model building; the value
// stored in a loaded CSV is advisory only.
struct LevelAttributes {
    std::int32_t level_id = 0;
    double avg_attempts_train = 0.0;
    double color_entropy = 0.0;
    std::int32_t color_count = 0;
    std::map<std::string, int> flags; // values in {0,1}
};

// Means over the first n_observed levels of one player.
struct PlayerAggregates {
    std::string player_id;
    std::int32_t n_observed = 0;
    double mean_attempts = 0.0;
    std::array<double, kBehaviorFields.size()> behavior_means{};
    bool telemetry_present = false;
};

// Shannon entropy -sum p_i ln p_i of the normalized weights.
double color_entropy(std::span<const double> weights);

// records must all belong to one player and have level_id <= the checkpoint.
PlayerAggregates aggregate_player(std::span<const InteractionRecord> records,
                                  const TelemetryTable* telemetry);

// One sparse design row. indices are strictly increasing column positions.
struct DesignRow {
    std::vector<std::uint32_t> indices;
    std::vector<double> values;
    double target = 0.0;
};

struct DesignRowView {
    std::span<const std::uint32_t> indices;
    std::span<const double> values;
    double target = 0.0;
    std::size_t size() const { return indices.size(); }
};

// CSR container for a batch of design rows.
class RowBlock {
public:
    void push_back(const DesignRow& row);
    void append(std::span<const std::uint32_t> indices, std::span<const double> values,
                double target);

    std::size_t size() const { return offsets_.size() - 1; }
    bool empty() const { return size() == 0; }
    DesignRowView row(std::size_t i) const;
    double target(std::size_t i) const { return targets_[i]; }
    const std::vector<double>& targets() const { return targets_; }
    std::size_t nonzeros() const { return indices_.size(); }

private:
    std::vector<std::size_t> offsets_{0};
    std::vector<std::uint32_t> indices_;
    std::vector<double> values_;
    std::vector<double> targets_;
};

// Column layout: [player one-hot | level one-hot | player aggregates |
// level attributes]. The real-valued blocks carry train-set normalization
// so every row built under the schema is standardized identically.
class FeatureSchema {
public:
    struct Normalization {
        double mean = 0.0;
        double scale = 1.0; // train std; 1 when the column is constant
    };

    static FeatureSchema build(const Split& split, bool augment,
                               const std::vector<LevelAttributes>* attrs,
                               const TelemetryTable* telemetry,
                               std::int32_t observed_levels);

    std::uint32_t width() const { return width_; }
    std::uint32_t player_block() const { return 0; }
    std::uint32_t player_count() const { return static_cast<std::uint32_t>(players_.size()); }
    std::uint32_t level_block() const { return player_count(); }
    std::uint32_t level_count() const { return static_cast<std::uint32_t>(levels_.size()); }
    std::uint32_t aggregate_block() const { return player_count() + level_count(); }
    std::uint32_t aggregate_count() const { return static_cast<std::uint32_t>(agg_names_.size()); }
    std::uint32_t attribute_block() const { return aggregate_block() + aggregate_count(); }
    std::uint32_t attribute_count() const { return static_cast<std::uint32_t>(attr_names_.size()); }
    bool augmented() const { return augmented_; }
    bool has_telemetry() const { return has_telemetry_; }

    std::int32_t player_column(const std::string& player_id) const; // -1 if absent
    std::int32_t level_column(std::int32_t level_id) const;         // -1 if absent

    const std::vector<std::string>& players() const { return players_; }
    const std::vector<std::int32_t>& levels() const { return levels_; }
    const std::vector<std::string>& aggregate_names() const { return agg_names_; }
    const std::vector<std::string>& attribute_names() const { return attr_names_; }
    std::string column_name(std::uint32_t column) const;

    const Normalization& aggregate_norm(std::size_t i) const { return agg_norms_[i]; }
    const Normalization& attribute_norm(std::size_t i) const { return attr_norms_[i]; }

    // FNV-1a over the canonical serialization; model files embed it so a
    // model is never applied under a different layout.
    std::uint64_t fingerprint() const;

    // Column group ids (player block 0, level block 1, aggregates 2,
    // attributes 3) for optional per-block hyperpriors.
    std::vector<int> block_groups() const;

    void save(const std::string& path) const;
    static FeatureSchema load(const std::string& path);

private:
    friend class FeatureContext;
    std::vector<std::string> players_;
    std::map<std::string, std::uint32_t> player_pos_;
    std::vector<std::int32_t> levels_;
    std::map<std::int32_t, std::uint32_t> level_pos_;
    std::vector<std::string> agg_names_;
    std::vector<std::string> attr_names_;
    std::vector<Normalization> agg_norms_;
    std::vector<Normalization> attr_norms_;
    bool augmented_ = false;
    bool has_telemetry_ = false;
    std::uint32_t width_ = 0;
};

// Everything needed to turn interaction records into design rows at one
// checkpoint: the schema plus the per-entity feature values behind it.
class FeatureContext {
public:
    // Aggregates use records with level_id <= observed_levels only, for
    // every player, so test rows never see information past the horizon.
    static FeatureContext build(const Split& split, bool augment,
                                const std::vector<LevelAttributes>* attrs,
                                const TelemetryTable* telemetry,
                                std::int32_t observed_levels);

    const FeatureSchema& schema() const { return schema_; }

    DesignRow encode(const InteractionRecord& r) const;
    RowBlock encode_rows(const Dataset& d) const;

    // Raw (unstandardized) dense feature vector for the tree models:
    // player aggregates then level attributes.
    std::vector<std::string> rf_feature_names() const;
    void rf_features(const InteractionRecord& r, std::vector<double>& out) const;

    const PlayerAggregates& aggregates_for(const std::string& player_id) const;
    double level_avg_attempts(std::int32_t level_id) const;

private:
    FeatureSchema schema_;
    std::map<std::string, PlayerAggregates> aggregates_;
    std::map<std::int32_t, LevelAttributes> attributes_;
};

// Batch builders over FeatureContext.
struct FmRows {
    RowBlock train;
    RowBlock test;
};
FmRows build_fm_rows(const Split& split, const FeatureContext& ctx);

struct RfMatrix {
    std::vector<std::string> feature_names;
    std::vector<double> data; // row-major, size rows * cols
    std::vector<double> targets;
    std::size_t rows = 0;
    std::size_t cols = 0;

    std::span<const double> row(std::size_t i) const {
        return {data.data() + i * cols, cols};
    }
};
struct RfMatrices {
    RfMatrix train;
    RfMatrix test;
};
RfMatrices build_rf_matrix(const Split& split, const FeatureContext& ctx);

// Level attributes CSV: level_id,avg_attempts_train,color_entropy,
// color_count,flag_*.
std::vector<LevelAttributes> load_level_attributes(const std::string& path);
void save_level_attributes(const std::vector<LevelAttributes>& attrs,
                           const std::string& path);

// Telemetry CSV keyed by (player_id, level_id) with the behavior columns.
// Saved rows are ordered by (player_id, level_id) for reproducible bytes.
TelemetryTable load_telemetry(const std::string& path);
void save_telemetry(const TelemetryTable& table, const std::string& path);

} // namespace levelcast
