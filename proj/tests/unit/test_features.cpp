#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "levelcast/dataset.hpp"
#include "levelcast/errors.hpp"
#include "levelcast/features.hpp"
#include "support/testutil.hpp"

using namespace levelcast;
using testutil::TempDir;

namespace {

// 30 players x 210 levels with deterministic attempts, split at the given
// horizon. Player p0003 (say) may or may not be the test player; callers
// read split.test_players instead of assuming.
Split fixture_split(std::int32_t observed, std::uint64_t seed = 7) {
    const Dataset d = testutil::grid_dataset(30, 210, [](int u, int l) {
        return 1 + (u * 13 + l * 5) % 9;
    });
    SplitSpec spec;
    spec.test_fraction = 0.05;
    spec.observed_levels = observed;
    spec.seed = seed;
    return split_players(d, spec);
}

std::vector<LevelAttributes> fixture_attributes(std::int32_t levels) {
    std::vector<LevelAttributes> attrs;
    for (std::int32_t l = 1; l <= levels; ++l) {
        LevelAttributes a;
        a.level_id = l;
        a.avg_attempts_train = 1.0 + l % 4;
        a.color_entropy = 0.3 + 0.1 * (l % 5);
        a.color_count = 3 + l % 3;
        for (const char* f : kLevelFlags) a.flags[f] = (l * 31) % 7 == 0 ? 1 : 0;
        attrs.push_back(std::move(a));
    }
    return attrs;
}

TelemetryTable fixture_telemetry(const Dataset& d, std::uint64_t seed = 3) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> val(0.0, 2.0);
    TelemetryTable table;
    for (const auto& r : d.records) {
        BehaviorRecord beh;
        for (auto& v : beh.values) v = val(rng);
        table[telemetry_key(r.player_id, r.level_id)] = beh;
    }
    return table;
}

double row_value_at(const DesignRow& row, std::uint32_t column) {
    for (std::size_t i = 0; i < row.indices.size(); ++i)
        if (row.indices[i] == column) return row.values[i];
    FAIL("column not active in row");
    return 0.0;
}

} // namespace

TEST_CASE("color_entropy matches hand-evaluated cases") {
    CHECK(color_entropy(std::vector<double>{1.0}) == 0.0);
    CHECK(color_entropy(std::vector<double>{0.5, 0.5}) ==
          doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(color_entropy(std::vector<double>{1, 1, 1, 1, 1}) ==
          doctest::Approx(std::log(5.0)).epsilon(1e-12));
    // Normalization is internal; scaling the weights changes nothing.
    CHECK(color_entropy(std::vector<double>{2, 6}) ==
          doctest::Approx(color_entropy(std::vector<double>{0.25, 0.75})));
}

TEST_CASE("color_entropy respects its bounds") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> w(0.0, 3.0);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 2 + rng() % 6;
        std::vector<double> weights(n);
        for (auto& x : weights) x = w(rng);
        if (std::accumulate(weights.begin(), weights.end(), 0.0) <= 0.0) continue;
        const double s = color_entropy(weights);
        CHECK(s >= 0.0);
        CHECK(s <= std::log(static_cast<double>(n)) + 1e-12);
    }
    const std::vector<double> uniform(4, 0.25);
    CHECK(color_entropy(uniform) == doctest::Approx(std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("color_entropy rejects degenerate weights") {
    CHECK_THROWS_AS(color_entropy(std::vector<double>{}), ValidationError);
    CHECK_THROWS_AS(color_entropy(std::vector<double>{0.0, 0.0}), ValidationError);
    CHECK_THROWS_AS(color_entropy(std::vector<double>{-1.0, 2.0}), ValidationError);
}

TEST_CASE("aggregate_player means match direct recomputation") {
    std::vector<InteractionRecord> records = {{"p1", 1, 2}, {"p1", 2, 4}};
    const PlayerAggregates two = aggregate_player(records, nullptr);
    CHECK(two.mean_attempts == 3.0);
    CHECK(two.n_observed == 2);
    CHECK_FALSE(two.telemetry_present);

    std::vector<InteractionRecord> one = {{"p9", 4, 5}};
    CHECK(aggregate_player(one, nullptr).mean_attempts == 5.0);

    TelemetryTable telemetry;
    BehaviorRecord a;
    BehaviorRecord b;
    for (std::size_t f = 0; f < kBehaviorFields.size(); ++f) {
        a.values[f] = 0.5 + static_cast<double>(f);
        b.values[f] = 2.0 * static_cast<double>(f);
    }
    telemetry[telemetry_key("p1", 1)] = a;
    telemetry[telemetry_key("p1", 2)] = b;
    const PlayerAggregates agg = aggregate_player(records, &telemetry);
    CHECK(agg.telemetry_present);
    for (std::size_t f = 0; f < kBehaviorFields.size(); ++f)
        CHECK(agg.behavior_means[f] ==
              doctest::Approx((a.values[f] + b.values[f]) / 2.0).epsilon(1e-12));
}

TEST_CASE("aggregate_player rejects bad spans") {
    CHECK_THROWS_AS(aggregate_player({}, nullptr), ContractError);
    std::vector<InteractionRecord> mixed = {{"p1", 1, 2}, {"p2", 2, 3}};
    CHECK_THROWS_AS(aggregate_player(mixed, nullptr), ContractError);
}

TEST_CASE("plain rows are two-hot with decodable indices") {
    const Split split = fixture_split(100);
    const FeatureContext ctx = FeatureContext::build(split, false, nullptr, nullptr, 100);
    const FeatureSchema& s = ctx.schema();
    CHECK(s.width() == s.player_count() + s.level_count());
    CHECK_FALSE(s.augmented());

    const InteractionRecord probe = split.train.records[123];
    const DesignRow row = ctx.encode(probe);
    REQUIRE(row.indices.size() == 2);
    CHECK(row.values == std::vector<double>{1.0, 1.0});
    CHECK(row.target == static_cast<double>(probe.attempts));
    CHECK(row.indices[0] == static_cast<std::uint32_t>(s.player_column(probe.player_id)));
    CHECK(row.indices[1] == static_cast<std::uint32_t>(s.level_column(probe.level_id)));
    CHECK(row.indices[1] >= s.level_block());
    CHECK(s.column_name(row.indices[1]) == "level:" + std::to_string(probe.level_id));

    CHECK_THROWS_AS(ctx.encode({"nobody", 1, 2}), ValidationError);
    CHECK_THROWS_AS(ctx.encode({probe.player_id, 9999, 2}), ValidationError);
    try {
        ctx.encode({"nobody", 1, 2});
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("nobody") != std::string::npos);
    }
}

TEST_CASE("row building is stable across rebuilds") {
    const Split split = fixture_split(80);
    const FeatureContext a = FeatureContext::build(split, false, nullptr, nullptr, 80);
    const FeatureContext b = FeatureContext::build(split, false, nullptr, nullptr, 80);
    CHECK(a.schema().fingerprint() == b.schema().fingerprint());

    const RowBlock ra = a.encode_rows(split.train);
    const RowBlock rb = b.encode_rows(split.train);
    REQUIRE(ra.size() == rb.size());
    for (std::size_t i = 0; i < ra.size(); ++i) {
        const DesignRowView va = ra.row(i);
        const DesignRowView vb = rb.row(i);
        REQUIRE(va.size() == vb.size());
        CHECK(std::equal(va.indices.begin(), va.indices.end(), vb.indices.begin()));
        CHECK(std::equal(va.values.begin(), va.values.end(), vb.values.begin()));
        CHECK(va.target == vb.target);
    }
}

TEST_CASE("augmented rows standardize the real-valued blocks") {
    const Split split = fixture_split(100);
    const auto attrs = fixture_attributes(210);
    const TelemetryTable telemetry = fixture_telemetry(split.train);
    const FeatureContext ctx = FeatureContext::build(split, true, &attrs, &telemetry, 100);
    const FeatureSchema& s = ctx.schema();
    CHECK(s.augmented());
    CHECK(s.aggregate_count() == 1 + kBehaviorFields.size());
    CHECK(s.attribute_count() == 3 + kLevelFlags.size());
    CHECK(s.width() ==
          s.player_count() + s.level_count() + s.aggregate_count() + s.attribute_count());

    const InteractionRecord probe = split.train.records[50];
    const DesignRow row = ctx.encode(probe);
    CHECK(std::is_sorted(row.indices.begin(), row.indices.end()));
    CHECK(std::adjacent_find(row.indices.begin(), row.indices.end()) == row.indices.end());
    for (std::uint32_t idx : row.indices) CHECK(idx < s.width());

    // Undoing the stored normalization must recover the raw feature value.
    const double std_attempts = row_value_at(row, s.aggregate_block());
    const auto& norm_attempts = s.aggregate_norm(0);
    CHECK(std_attempts * norm_attempts.scale + norm_attempts.mean ==
          doctest::Approx(ctx.aggregates_for(probe.player_id).mean_attempts).epsilon(1e-12));

    const double std_avg = row_value_at(row, s.attribute_block());
    const auto& norm_avg = s.attribute_norm(0);
    CHECK(std_avg * norm_avg.scale + norm_avg.mean ==
          doctest::Approx(ctx.level_avg_attempts(probe.level_id)).epsilon(1e-12));
}

TEST_CASE("test rows use only information up to the horizon") {
    const std::int32_t observed = 60;
    const Split split = fixture_split(observed);
    const FeatureContext ctx = FeatureContext::build(split, true, nullptr, nullptr, observed);

    for (const auto& player : split.test_players) {
        std::vector<InteractionRecord> visible;
        for (const auto& r : split.train.records)
            if (r.player_id == player && r.level_id <= observed) visible.push_back(r);
        REQUIRE_FALSE(visible.empty());
        const PlayerAggregates expected = aggregate_player(visible, nullptr);
        const PlayerAggregates& actual = ctx.aggregates_for(player);
        CHECK(actual.n_observed == expected.n_observed);
        CHECK(actual.mean_attempts == doctest::Approx(expected.mean_attempts).epsilon(1e-12));
    }
}

TEST_CASE("level averages come from training players only") {
    const Split split = fixture_split(100);
    const FeatureContext ctx = FeatureContext::build(split, true, nullptr, nullptr, 100);

    const std::int32_t level = 40; // observed by the test players too
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& r : split.train.records) {
        if (r.level_id != level || split.test_players.count(r.player_id)) continue;
        sum += r.attempts;
        ++n;
    }
    REQUIRE(n > 0);
    CHECK(ctx.level_avg_attempts(level) == doctest::Approx(sum / n).epsilon(1e-12));
}

TEST_CASE("rf matrix carries the documented feature columns") {
    const Split split = fixture_split(100);
    const auto attrs = fixture_attributes(210);
    const TelemetryTable telemetry = fixture_telemetry(split.train);
    const FeatureContext ctx = FeatureContext::build(split, true, &attrs, &telemetry, 100);

    const RfMatrices m = build_rf_matrix(split, ctx);
    const auto names = ctx.rf_feature_names();
    REQUIRE(m.train.cols == names.size());
    CHECK(m.train.rows == split.train.records.size());
    CHECK(m.test.rows == split.test.records.size());

    const auto col_of = [&](const std::string& name) {
        const auto it = std::find(names.begin(), names.end(), name);
        REQUIRE(it != names.end());
        return static_cast<std::size_t>(it - names.begin());
    };
    const std::size_t c_player_mean = col_of("p_mean_attempts");
    const std::size_t c_level_avg = col_of("l_avg_attempts");

    for (std::size_t i : {std::size_t{0}, m.train.rows / 2, m.train.rows - 1}) {
        const auto& r = split.train.records[i];
        const auto row = m.train.row(i);
        CHECK(row[c_player_mean] ==
              doctest::Approx(ctx.aggregates_for(r.player_id).mean_attempts));
        CHECK(row[c_level_avg] == doctest::Approx(ctx.level_avg_attempts(r.level_id)));
    }

    // Player-side features are fixed per checkpoint: any two rows of one
    // player agree on them.
    const std::string player = split.train.records[0].player_id;
    std::vector<std::size_t> rows_of_player;
    for (std::size_t i = 0; i < m.train.rows && rows_of_player.size() < 2; ++i)
        if (split.train.records[i].player_id == player) rows_of_player.push_back(i);
    REQUIRE(rows_of_player.size() == 2);
    const auto r0 = m.train.row(rows_of_player[0]);
    const auto r1 = m.train.row(rows_of_player[1]);
    CHECK(r0[c_player_mean] == r1[c_player_mean]);

    // Column means against a spreadsheet-style recomputation on the first
    // ten rows.
    std::vector<double> expected_mean(m.train.cols, 0.0);
    for (std::size_t i = 0; i < 10; ++i) {
        std::vector<double> raw;
        ctx.rf_features(split.train.records[i], raw);
        REQUIRE(raw.size() == m.train.cols);
        for (std::size_t c = 0; c < raw.size(); ++c) expected_mean[c] += raw[c] / 10.0;
    }
    for (std::size_t c = 0; c < m.train.cols; ++c) {
        double got = 0.0;
        for (std::size_t i = 0; i < 10; ++i) got += m.train.row(i)[c] / 10.0;
        CHECK(got == doctest::Approx(expected_mean[c]).epsilon(1e-12));
    }
}

TEST_CASE("schema serialization round-trips") {
    const Split split = fixture_split(100);
    const auto attrs = fixture_attributes(210);
    const FeatureContext ctx = FeatureContext::build(split, true, &attrs, nullptr, 100);

    TempDir dir;
    ctx.schema().save(dir.file("schema.json"));
    const FeatureSchema loaded = FeatureSchema::load(dir.file("schema.json"));
    CHECK(loaded.fingerprint() == ctx.schema().fingerprint());
    CHECK(loaded.width() == ctx.schema().width());
    CHECK(loaded.players() == ctx.schema().players());
    CHECK(loaded.attribute_names() == ctx.schema().attribute_names());
}

TEST_CASE("fingerprints react to layout changes") {
    const Split split = fixture_split(100);
    const FeatureContext plain = FeatureContext::build(split, false, nullptr, nullptr, 100);
    const FeatureContext augmented = FeatureContext::build(split, true, nullptr, nullptr, 100);
    CHECK(plain.schema().fingerprint() != augmented.schema().fingerprint());

    const Split other = fixture_split(100, 9); // different test players
    const FeatureContext moved = FeatureContext::build(other, false, nullptr, nullptr, 100);
    CHECK(plain.schema().fingerprint() == moved.schema().fingerprint());
}

TEST_CASE("level attributes and telemetry round-trip through CSV") {
    TempDir dir;
    const auto attrs = fixture_attributes(12);
    save_level_attributes(attrs, dir.file("attrs.csv"));
    const auto loaded = load_level_attributes(dir.file("attrs.csv"));
    REQUIRE(loaded.size() == attrs.size());
    for (std::size_t i = 0; i < attrs.size(); ++i) {
        CHECK(loaded[i].level_id == attrs[i].level_id);
        CHECK(loaded[i].avg_attempts_train == attrs[i].avg_attempts_train);
        CHECK(loaded[i].color_entropy == attrs[i].color_entropy);
        CHECK(loaded[i].color_count == attrs[i].color_count);
        CHECK(loaded[i].flags == attrs[i].flags);
    }

    const Dataset d = testutil::grid_dataset(3, 4, [](int, int) { return 2; });
    const TelemetryTable telemetry = fixture_telemetry(d);
    save_telemetry(telemetry, dir.file("telemetry.csv"));
    const TelemetryTable back = load_telemetry(dir.file("telemetry.csv"));
    REQUIRE(back.size() == telemetry.size());
    for (const auto& [key, beh] : telemetry) {
        REQUIRE(back.count(key) == 1);
        for (std::size_t f = 0; f < beh.values.size(); ++f)
            CHECK(back.at(key).values[f] == beh.values[f]);
    }
    save_telemetry(back, dir.file("telemetry2.csv"));
    CHECK(testutil::slurp(dir.file("telemetry.csv")) ==
          testutil::slurp(dir.file("telemetry2.csv")));
}
