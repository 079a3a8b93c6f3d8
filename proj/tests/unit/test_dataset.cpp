#include <doctest.h>

#include <json.hpp>

#include <algorithm>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "levelcast/dataset.hpp"
#include "levelcast/errors.hpp"
#include "support/testutil.hpp"

using namespace levelcast;
using testutil::TempDir;

TEST_CASE("truncate_attempts caps at the attempt limit") {
    CHECK(truncate_attempts(35) == 30);
    CHECK(truncate_attempts(30) == 30);
    CHECK(truncate_attempts(1) == 1);
    CHECK(truncate_attempts(31) == 30);
}

TEST_CASE("load_interactions reads rows back, sorted and truncated") {
    TempDir dir;
    testutil::write_text(dir.file("in.csv"),
                         "player_id,level_id,attempts\n"
                         "p2,1,35\n"
                         "p1,2,1\n"
                         "p1,1,2\n");
    const Dataset d = load_interactions(dir.file("in.csv"));
    REQUIRE(d.records.size() == 3);
    CHECK(d.num_players() == 2);
    CHECK(d.num_levels() == 2);
    CHECK(d.max_level == 2);
    CHECK(d.records[0] == InteractionRecord{"p1", 1, 2});
    CHECK(d.records[1] == InteractionRecord{"p1", 2, 1});
    CHECK(d.records[2] == InteractionRecord{"p2", 1, 30}); // 35 truncated
}

TEST_CASE("load_interactions rejects malformed input") {
    TempDir dir;

    testutil::write_text(dir.file("zero.csv"), "player_id,level_id,attempts\np1,1,0\n");
    CHECK_THROWS_AS(load_interactions(dir.file("zero.csv")), ValidationError);

    testutil::write_text(dir.file("garbled.csv"),
                         "player_id,level_id,attempts\np1,1,2\np1,two,3\n");
    try {
        load_interactions(dir.file("garbled.csv"));
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 3);
    }

    testutil::write_text(dir.file("dupe.csv"),
                         "player_id,level_id,attempts\np1,1,2\np1,1,3\n");
    CHECK_THROWS_AS(load_interactions(dir.file("dupe.csv")), ValidationError);

    testutil::write_text(dir.file("headerless.csv"), "a,b\n1,2\n");
    CHECK_THROWS_AS(load_interactions(dir.file("headerless.csv")), ValidationError);
}

TEST_CASE("make_dataset builds contiguous dense indices") {
    std::vector<InteractionRecord> records = {
        {"zeta", 5, 1}, {"alpha", 9, 2}, {"alpha", 5, 3}, {"mid", 2, 4}};
    const Dataset d = make_dataset(records);
    REQUIRE(d.records.size() == 4);
    CHECK(std::is_sorted(d.records.begin(), d.records.end(),
                         [](const auto& a, const auto& b) {
                             return std::tie(a.player_id, a.level_id) <
                                    std::tie(b.player_id, b.level_id);
                         }));
    std::set<std::int32_t> player_cols;
    for (const auto& [id, col] : d.player_index) player_cols.insert(col);
    CHECK(*player_cols.begin() == 0);
    CHECK(*player_cols.rbegin() == 2);
    CHECK(d.level_index.at(2) == 0);
    CHECK(d.level_index.at(5) == 1);
    CHECK(d.level_index.at(9) == 2);
    CHECK(d.max_level == 9);
}

TEST_CASE("split_players follows the protocol") {
    const Dataset d = testutil::grid_dataset(100, 210, [](int u, int l) {
        return 1 + (u * 7 + l) % 5;
    });
    SplitSpec spec;
    spec.test_fraction = 0.01;
    spec.observed_levels = 150;
    spec.eval_level_floor = 150;
    spec.seed = 7;

    const Split split = split_players(d, spec);
    REQUIRE(split.test_players.size() == 1); // round(0.01 * 100)
    CHECK(split.excluded_players == 0);
    const std::string test_player = *split.test_players.begin();

    std::size_t observed = 0;
    for (const auto& r : split.train.records)
        if (r.player_id == test_player) {
            CHECK(r.level_id <= 150);
            ++observed;
        }
    CHECK(observed == 150);

    CHECK(split.test.records.size() == 60); // levels 151..210
    for (const auto& r : split.test.records) {
        CHECK(r.player_id == test_player);
        CHECK(r.level_id > 150);
    }

    // 99 training players contribute everything; the test player 150 rows.
    CHECK(split.train.records.size() == 99u * 210 + 150);

    const Split again = split_players(d, spec);
    CHECK(again.test_players == split.test_players);
    CHECK(again.train.records == split.train.records);
    CHECK(again.test.records == split.test.records);

    spec.test_fraction = 0.02;
    CHECK(split_players(d, spec).test_players.size() == 2);
    spec.test_fraction = 0.001; // rounds to zero, floored at one player
    CHECK(split_players(d, spec).test_players.size() == 1);
}

TEST_CASE("split_players applies the eligibility filter") {
    std::vector<InteractionRecord> records;
    for (int u = 1; u <= 13; ++u) {
        const int reach = u <= 10 ? 210 : 120; // three players stop short
        for (int l = 1; l <= reach; ++l)
            records.push_back({testutil::player_name(u), l, 1});
    }
    const Dataset d = make_dataset(std::move(records));
    SplitSpec spec;
    spec.observed_levels = 100;
    spec.seed = 3;

    const Split split = split_players(d, spec);
    CHECK(split.excluded_players == 3);
    for (const auto& p : split.test_players)
        CHECK(p <= testutil::player_name(10));
}

TEST_CASE("split_players rejects impossible requests") {
    const Dataset d = testutil::grid_dataset(10, 210, [](int, int) { return 2; });
    SplitSpec spec;
    spec.observed_levels = 160; // past the eval floor
    CHECK_THROWS_AS(split_players(d, spec), ValidationError);

    const Dataset shallow = testutil::grid_dataset(10, 120, [](int, int) { return 2; });
    SplitSpec ok;
    ok.observed_levels = 100;
    CHECK_THROWS_AS(split_players(shallow, ok), ProtocolError); // nobody eligible
}

TEST_CASE("split partition assigns every record to exactly one side") {
    std::mt19937_64 rng(11);
    std::vector<InteractionRecord> records;
    for (int u = 1; u <= 40; ++u) {
        const int reach = 200 + static_cast<int>(rng() % 40);
        for (int l = 1; l <= reach; ++l)
            records.push_back({testutil::player_name(u), l,
                               1 + static_cast<int>(rng() % 12)});
    }
    const Dataset d = make_dataset(std::move(records));

    SplitSpec spec;
    spec.test_fraction = 0.1;
    spec.observed_levels = 60;
    spec.eval_level_floor = 150;
    spec.seed = 5;
    const Split split = split_players(d, spec);
    REQUIRE(split.test_players.size() == 4);

    std::set<std::pair<std::string, std::int32_t>> train_keys;
    for (const auto& r : split.train.records) train_keys.insert({r.player_id, r.level_id});
    std::set<std::pair<std::string, std::int32_t>> test_keys;
    for (const auto& r : split.test.records) test_keys.insert({r.player_id, r.level_id});

    std::vector<std::pair<std::string, std::int32_t>> overlap;
    std::set_intersection(train_keys.begin(), train_keys.end(), test_keys.begin(),
                          test_keys.end(), std::back_inserter(overlap));
    CHECK(overlap.empty());

    for (const auto& r : d.records) {
        const bool is_test_player = split.test_players.count(r.player_id) > 0;
        const bool in_train = train_keys.count({r.player_id, r.level_id}) > 0;
        const bool in_test = test_keys.count({r.player_id, r.level_id}) > 0;
        if (!is_test_player) {
            CHECK(in_train);
            CHECK_FALSE(in_test);
        } else {
            CHECK(in_train == (r.level_id <= spec.observed_levels));
            CHECK(in_test == (r.level_id > spec.eval_level_floor));
        }
    }
}

TEST_CASE("interactions round-trip bit-exactly") {
    const Dataset d = testutil::grid_dataset(5, 8, [](int u, int l) {
        return 1 + (u + l) % 7;
    });
    TempDir dir;
    save_interactions(d, dir.file("a.csv"));
    const Dataset reloaded = load_interactions(dir.file("a.csv"));
    CHECK(reloaded.records == d.records);
    save_interactions(reloaded, dir.file("b.csv"));
    CHECK(testutil::slurp(dir.file("a.csv")) == testutil::slurp(dir.file("b.csv")));
}

TEST_CASE("without_players drops exactly the named players") {
    const Dataset d = testutil::grid_dataset(4, 3, [](int, int) { return 2; });
    const Dataset rest = without_players(d, {testutil::player_name(2)});
    CHECK(rest.records.size() == 9);
    CHECK(rest.player_index.count(testutil::player_name(2)) == 0);
    for (const auto& r : rest.records) CHECK(r.player_id != testutil::player_name(2));
}

TEST_CASE("split manifest records the spec and the chosen players") {
    const Dataset d = testutil::grid_dataset(20, 210, [](int, int) { return 2; });
    SplitSpec spec;
    spec.test_fraction = 0.1;
    spec.observed_levels = 30;
    spec.seed = 13;
    const Split split = split_players(d, spec);

    TempDir dir;
    write_split_manifest(split, spec, dir.file("split.json"));
    const auto j = nlohmann::json::parse(testutil::slurp(dir.file("split.json")));
    CHECK(j.at("spec").at("observed_levels").get<int>() == 30);
    CHECK(j.at("spec").at("seed").get<std::uint64_t>() == 13);
    std::set<std::string> listed;
    for (const auto& p : j.at("test_players")) listed.insert(p.get<std::string>());
    CHECK(listed == split.test_players);
}
