#include "levelcast/dataset.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "levelcast/errors.hpp"
#include "levelcast/rng.hpp"

namespace levelcast {

std::vector<std::string> Dataset::player_ids() const {
    std::vector<std::string> ids(player_index.size());
    for (const auto& [id, idx] : player_index) ids[static_cast<std::size_t>(idx)] = id;
    return ids;
}

std::vector<std::int32_t> Dataset::level_ids() const {
    std::vector<std::int32_t> ids(level_index.size());
    for (const auto& [id, idx] : level_index) ids[static_cast<std::size_t>(idx)] = id;
    return ids;
}

std::int32_t truncate_attempts(std::int32_t a) {
    return std::min(a, kAttemptCap);
}

Dataset make_dataset(std::vector<InteractionRecord> records) {
    std::sort(records.begin(), records.end(), [](const auto& a, const auto& b) {
        return std::tie(a.player_id, a.level_id) < std::tie(b.player_id, b.level_id);
    });
    for (std::size_t i = 1; i < records.size(); ++i) {
        if (records[i].player_id == records[i - 1].player_id &&
            records[i].level_id == records[i - 1].level_id)
            throw ValidationError("duplicate record for player '" + records[i].player_id +
                                  "', level " + std::to_string(records[i].level_id));
    }

    Dataset d;
    d.records = std::move(records);
    for (const auto& r : d.records) {
        d.player_index.emplace(r.player_id, 0);
        d.level_index.emplace(r.level_id, 0);
        d.max_level = std::max(d.max_level, r.level_id);
    }
    std::int32_t next = 0;
    for (auto& [id, idx] : d.player_index) idx = next++;
    next = 0;
    for (auto& [id, idx] : d.level_index) idx = next++;
    return d;
}

Dataset load_interactions(const std::string& path, CsvFormat format) {
    CsvReader reader(path, format);
    int c_player = reader.require_column("player_id");
    int c_level = reader.require_column("level_id");
    int c_attempts = reader.require_column("attempts");

    std::vector<InteractionRecord> records;
    std::vector<std::string> fields;
    while (reader.next(fields)) {
        InteractionRecord r;
        r.player_id = fields[static_cast<std::size_t>(c_player)];
        if (r.player_id.empty())
            throw ParseError(path + ": empty player_id", reader.line_number());
        long level = parse_long_field(fields[static_cast<std::size_t>(c_level)], reader, "level_id");
        long attempts =
            parse_long_field(fields[static_cast<std::size_t>(c_attempts)], reader, "attempts");
        if (level < 1)
            throw ValidationError(path + ": level_id must be >= 1 (line " +
                                  std::to_string(reader.line_number()) + ")");
        if (attempts < 1)
            throw ValidationError(path + ": attempts must be >= 1 (line " +
                                  std::to_string(reader.line_number()) + ")");
        r.level_id = static_cast<std::int32_t>(level);
        r.attempts = truncate_attempts(static_cast<std::int32_t>(attempts));
        records.push_back(std::move(r));
    }
    return make_dataset(std::move(records));
}

void save_interactions(const Dataset& d, const std::string& path) {
    CsvWriter w(path);
    w.write_row({"player_id", "level_id", "attempts"});
    for (const auto& r : d.records)
        w.write_row({r.player_id, std::to_string(r.level_id), std::to_string(r.attempts)});
    w.close();
}

namespace {

// Complete history up to `floor` means one record for every level 1..floor.
bool is_eligible(const std::vector<const InteractionRecord*>& recs, std::int32_t floor) {
    std::int32_t below = 0;
    for (const auto* r : recs)
        if (r->level_id <= floor) ++below;
    return below >= floor;
}

} // namespace

Split split_players(const Dataset& d, const SplitSpec& spec) {
    if (d.records.empty()) throw ValidationError("split_players: empty dataset");
    if (spec.test_fraction <= 0.0 || spec.test_fraction >= 1.0)
        throw ValidationError("split_players: test_fraction must lie in (0,1)");
    if (spec.observed_levels < 0 || spec.observed_levels > spec.eval_level_floor)
        throw ValidationError("split_players: observed_levels must lie in [0, eval_level_floor]");

    // Group record pointers per player (records are sorted by player already).
    std::map<std::string, std::vector<const InteractionRecord*>> by_player;
    for (const auto& r : d.records) by_player[r.player_id].push_back(&r);

    const std::int32_t eligibility_floor = spec.effective_eligibility_floor();
    std::vector<std::string> eligible;
    std::set<std::string> eligible_set;
    std::size_t excluded = 0;
    for (const auto& [player, recs] : by_player) {
        if (is_eligible(recs, eligibility_floor)) {
            eligible.push_back(player);
            eligible_set.insert(player);
        } else {
            ++excluded;
        }
    }
    if (eligible.size() < 2)
        throw ProtocolError("split_players: need at least 2 eligible players, have " +
                            std::to_string(eligible.size()));

    // Sorted ids + seeded permutation; prefix becomes the test set.
    std::mt19937_64 rng(spec.seed);
    seeded_shuffle(eligible, rng);
    std::size_t n_test = static_cast<std::size_t>(
        std::lround(spec.test_fraction * static_cast<double>(eligible.size())));
    n_test = std::max<std::size_t>(n_test, 1);
    n_test = std::min(n_test, eligible.size() - 1);

    Split split;
    split.excluded_players = excluded;
    for (std::size_t i = 0; i < n_test; ++i) split.test_players.insert(eligible[i]);

    std::vector<InteractionRecord> train_records;
    std::vector<InteractionRecord> test_records;
    for (const auto& [player, recs] : by_player) {
        if (!eligible_set.count(player)) continue;
        const bool is_test = split.test_players.count(player) > 0;
        for (const auto* r : recs) {
            if (!is_test) {
                train_records.push_back(*r);
            } else if (r->level_id <= spec.observed_levels) {
                train_records.push_back(*r);
            } else if (r->level_id > spec.eval_level_floor) {
                test_records.push_back(*r);
            }
        }
    }
    split.train = make_dataset(std::move(train_records));
    split.test = make_dataset(std::move(test_records));
    return split;
}

void write_split_manifest(const Split& split, const SplitSpec& spec, const std::string& path) {
    nlohmann::json j;
    j["spec"] = {{"test_fraction", spec.test_fraction},
                 {"observed_levels", spec.observed_levels},
                 {"eval_level_floor", spec.eval_level_floor},
                 {"eligibility_floor", spec.effective_eligibility_floor()},
                 {"seed", spec.seed}};
    j["test_players"] = std::vector<std::string>(split.test_players.begin(), split.test_players.end());
    j["excluded_players"] = split.excluded_players;
    j["train_records"] = split.train.records.size();
    j["test_records"] = split.test.records.size();
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << j.dump(2) << '\n';
}

Dataset without_players(const Dataset& d, const std::set<std::string>& exclude) {
    std::vector<InteractionRecord> records;
    records.reserve(d.records.size());
    for (const auto& r : d.records)
        if (!exclude.count(r.player_id)) records.push_back(r);
    return make_dataset(std::move(records));
}

} // namespace levelcast
