#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "levelcast/csv.hpp"

namespace levelcast {

// Attempt counts above this cap are truncated on ingestion; predictions are
// clamped to the same range at reporting time.
inline constexpr int kAttemptCap = 30;

// One (player, level, attempts) observation: the number of attempts the
// player needed to complete the level for the first time.
struct InteractionRecord {
    std::string player_id;
    std::int32_t level_id = 0; // ordinal position in the level sequence, >= 1
    std::int32_t attempts = 0; // >= 1, <= kAttemptCap after preprocessing

    friend bool operator==(const InteractionRecord&, const InteractionRecord&) = default;
};

// Immutable after construction. Records are sorted by (player_id, level_id);
// the indices map entity ids to dense, contiguous column positions.
struct Dataset {
    std::vector<InteractionRecord> records;
    std::map<std::string, std::int32_t> player_index;
    std::map<std::int32_t, std::int32_t> level_index;
    std::int32_t max_level = 0;

    std::size_t num_players() const { return player_index.size(); }
    std::size_t num_levels() const { return level_index.size(); }

    // Ordered by dense index.
    std::vector<std::string> player_ids() const;
    std::vector<std::int32_t> level_ids() const;
};

// Sorts records, rejects duplicate (player, level) pairs and rebuilds the
// dense indices. Every loader and generator funnels through this.
Dataset make_dataset(std::vector<InteractionRecord> records);

// min(a, kAttemptCap); a must be >= 1.
std::int32_t truncate_attempts(std::int32_t a);

// Train/test split protocol. The test players' records up to observed_levels
// go to the training side; their records after eval_level_floor form the
// test side; records in between belong to neither.
struct SplitSpec {
    double test_fraction = 0.01;
    std::int32_t observed_levels = 0;
    std::int32_t eval_level_floor = 150;
    // Players must have complete history up to here to take part at all.
    // 0 means eval_level_floor + 50.
    std::int32_t eligibility_floor = 0;
    std::uint64_t seed = 0;

    std::int32_t effective_eligibility_floor() const {
        return eligibility_floor > 0 ? eligibility_floor : eval_level_floor + 50;
    }
};

struct Split {
    Dataset train;
    Dataset test;
    std::set<std::string> test_players;
    std::size_t excluded_players = 0; // failed the eligibility filter
};

// Reads `player_id,level_id,attempts` CSV, applies attempt truncation and
// builds indices. Throws ParseError / ValidationError on malformed input.
Dataset load_interactions(const std::string& path, CsvFormat format = {});

void save_interactions(const Dataset& d, const std::string& path);

// Deterministic per spec.seed. Test players are drawn by a seeded
// Fisher-Yates permutation of the sorted eligible player ids.
Split split_players(const Dataset& d, const SplitSpec& spec);

// JSON audit record listing the spec and the chosen test players.
void write_split_manifest(const Split& split, const SplitSpec& spec,
                          const std::string& path);

// Records of `d` restricted to players not in `exclude`. Used to fit
// non-personalized baselines on training players only.
Dataset without_players(const Dataset& d, const std::set<std::string>& exclude);

} // namespace levelcast
