#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "support/testutil.hpp"

namespace {

std::string g_cli;

struct Shell {
    int code = -1;
    std::string output;
};

// Runs the tool through the shell, capturing stdout+stderr and the exit
// code. `env_prefix` may carry VAR=value assignments.
Shell run(const std::string& args, const std::string& env_prefix = "") {
    static testutil::TempDir capture_dir;
    static int counter = 0;
    const std::string cap = capture_dir.file("cap" + std::to_string(counter++) + ".txt");
    std::string cmd;
    if (!env_prefix.empty()) cmd += env_prefix + " ";
    cmd += "'" + g_cli + "' " + args + " >'" + cap + "' 2>&1";
    const int raw = std::system(cmd.c_str());
    Shell result;
    if (WIFEXITED(raw)) result.code = WEXITSTATUS(raw);
    result.output = testutil::slurp(cap);
    return result;
}

// Shared corpus: one generated dataset plus one trained FM run, reused by
// the read-only cases below.
struct Fixture {
    testutil::TempDir dir;
    std::string gen;
    std::string fm;

    Fixture() {
        gen = dir.file("gen");
        fm = dir.file("fm");
        Shell g = run("generate --players 60 --levels 210 --seed 4 --out-dir '" + gen + "'");
        if (g.code != 0) throw std::runtime_error("fixture generate failed: " + g.output);
        Shell t = run("train --method fm --data '" + gen + "/interactions.csv'" +
                      " --factors 2 --iterations 40 --burn-in 10 --out-dir '" + fm + "'");
        if (t.code != 0) throw std::runtime_error("fixture train failed: " + t.output);
    }

    std::string data() const { return gen + "/interactions.csv"; }
    std::string features() const { return gen + "/level_attributes.csv"; }
    std::string truth() const { return gen + "/truth.csv"; }
};

const Fixture& fx() {
    static Fixture fixture;
    return fixture;
}

bool exists(const std::string& path) { return std::filesystem::exists(path); }

} // namespace

TEST_CASE("the version flag exits cleanly") {
    CHECK(run("--version").code == 0);
}

TEST_CASE("a missing subcommand is a usage error") {
    CHECK(run("").code == 2);
    CHECK(run("transmogrify").code == 2);
}

TEST_CASE("generate writes the full dataset bundle") {
    const Fixture& f = fx();
    for (const char* name : {"interactions.csv", "level_attributes.csv", "telemetry.csv",
                             "truth.csv", "manifest.json"})
        CHECK(exists(f.gen + "/" + name));
    CHECK(testutil::slurp(f.data()).find("player_id,level_id,attempts") == 0);
}

TEST_CASE("generate is byte-reproducible per seed") {
    const Fixture& f = fx();
    const std::string again = f.dir.file("gen_again");
    REQUIRE(run("generate --players 60 --levels 210 --seed 4 --out-dir '" + again + "'")
                .code == 0);
    for (const char* name :
         {"interactions.csv", "level_attributes.csv", "telemetry.csv", "truth.csv"})
        CHECK(testutil::slurp(f.gen + "/" + name) ==
              testutil::slurp(again + "/" + name));
}

TEST_CASE("generate rejects non-positive sizes at parse time") {
    CHECK(run("generate --players 0").code == 2);
    CHECK(run("generate --levels -5").code == 2);
}

TEST_CASE("train rejects flags foreign to the chosen method") {
    const Fixture& f = fx();
    const Shell s = run("train --method naive --data '" + f.data() + "' --factors 2");
    CHECK(s.code == 2);
    CHECK(s.output.find("--factors") != std::string::npos);

    CHECK(run("train --method naive --data '" + f.data() + "' --trees 10").code == 2);
    CHECK(run("train --method quantum --data '" + f.data() + "'").code == 2);
}

TEST_CASE("train fm writes the model bundle") {
    const Fixture& f = fx();
    for (const char* name : {"model.json", "schema.json", "training_log.csv", "split.json",
                             "manifest.json"})
        CHECK(exists(f.fm + "/" + name));
    CHECK(testutil::slurp(f.fm + "/training_log.csv")
              .find("iteration,train_rmse,alpha,wall_ms") == 0);
    CHECK(testutil::slurp(f.fm + "/split.json").find("test_players") != std::string::npos);
}

TEST_CASE("train naive writes a model without a schema") {
    const Fixture& f = fx();
    const std::string out = f.dir.file("naive");
    REQUIRE(run("train --method naive --data '" + f.data() + "' --out-dir '" + out + "'")
                .code == 0);
    CHECK(exists(out + "/model.json"));
    CHECK(exists(out + "/split.json"));
    CHECK_FALSE(exists(out + "/schema.json"));
}

TEST_CASE("feature-hungry methods demand the features flag") {
    const Fixture& f = fx();
    const Shell s = run("train --method fm-feat --data '" + f.data() + "'");
    CHECK(s.code == 3);
    CHECK(s.output.find("--features") != std::string::npos);

    const Shell e = run("evaluate --data '" + f.data() +
                        "' --checkpoints 10 --methods fm-feat --iterations 20 --burn-in 5");
    CHECK(e.code == 3);
    CHECK(e.output.find("--features") != std::string::npos);
}

TEST_CASE("evaluate emits metrics, curves and prediction dumps") {
    const Fixture& f = fx();
    const std::string out = f.dir.file("eval");
    REQUIRE(run("evaluate --data '" + f.data() +
                "' --checkpoints 10,30 --methods naive --seeds 2 --out-dir '" + out + "'")
                .code == 0);
    for (const char* name :
         {"report.json", "sweep_metrics.csv", "level_curve.csv", "manifest.json",
          "predictions_naive_10_seed2.csv", "predictions_naive_30_seed2.csv"})
        CHECK(exists(out + "/" + name));

    // The baseline cells are checkpoint-independent: identical metric text.
    const std::string metrics = testutil::slurp(out + "/sweep_metrics.csv");
    std::vector<std::string> lines;
    std::size_t pos = 0;
    while (pos < metrics.size()) {
        const std::size_t end = metrics.find('\n', pos);
        lines.push_back(metrics.substr(pos, end - pos));
        if (end == std::string::npos) break;
        pos = end + 1;
    }
    REQUIRE(lines.size() >= 3);
    CHECK(lines[0].find("method,k,checkpoint,mae,rmse") == 0);
    const auto masked = [](const std::string& line, const std::string& ckpt) {
        const std::string token = "," + ckpt + ",";
        const std::size_t pos = line.find(token);
        REQUIRE(pos != std::string::npos);
        return line.substr(0, pos) + ",X," + line.substr(pos + token.size());
    };
    CHECK(masked(lines[1], "10") == masked(lines[2], "30"));
}

TEST_CASE("analyze emits the interpretation bundle") {
    const Fixture& f = fx();
    const std::string out = f.dir.file("analyze");
    REQUIRE(run("analyze --model '" + f.fm + "/model.json' --data '" + f.data() +
                "' --out-dir '" + out + "'")
                .code == 0);
    for (const char* name : {"factors_players.csv", "factors_levels.csv",
                             "param_histograms.csv", "correlations.csv", "manifest.json"})
        CHECK(exists(out + "/" + name));
    const std::string corr = testutil::slurp(out + "/correlations.csv");
    CHECK(corr.find("level_w_vs_avg_attempts") != std::string::npos);
    CHECK(corr.find("true_difficulty") == std::string::npos);
}

TEST_CASE("analyze joins the generator truth when given") {
    const Fixture& f = fx();
    const std::string out = f.dir.file("analyze_truth");
    REQUIRE(run("analyze --model '" + f.fm + "/model.json' --data '" + f.data() +
                "' --truth '" + f.truth() + "' --out-dir '" + out + "'")
                .code == 0);
    const std::string corr = testutil::slurp(out + "/correlations.csv");
    CHECK(corr.find("level_w_vs_true_difficulty") != std::string::npos);
    CHECK(corr.find("player_skill_proxy_w_vs_true_skill") != std::string::npos);
}

TEST_CASE("analyze refuses a schema from a different run") {
    const Fixture& f = fx();
    // Two feature-augmented runs on different datasets share a layout but
    // not normalization statistics, so their fingerprints differ.
    const std::string other_gen = f.dir.file("gen_other");
    REQUIRE(run("generate --players 60 --levels 210 --seed 9 --out-dir '" + other_gen + "'")
                .code == 0);
    const std::string feat_a = f.dir.file("feat_a");
    const std::string feat_b = f.dir.file("feat_b");
    REQUIRE(run("train --method fm-feat --data '" + f.data() + "' --features '" +
                f.features() + "' --factors 2 --iterations 20 --burn-in 5 --out-dir '" +
                feat_a + "'")
                .code == 0);
    REQUIRE(run("train --method fm-feat --data '" + other_gen + "/interactions.csv'" +
                " --features '" + other_gen + "/level_attributes.csv'" +
                " --factors 2 --iterations 20 --burn-in 5 --out-dir '" + feat_b + "'")
                .code == 0);

    const Shell s = run("analyze --model '" + feat_a + "/model.json' --schema '" + feat_b +
                        "/schema.json' --data '" + f.data() + "'");
    CHECK(s.code == 3);
    CHECK(s.output.find("fingerprint") != std::string::npos);
}

TEST_CASE("the output root honors LEVELCAST_OUT") {
    const Fixture& f = fx();
    const std::string root = f.dir.file("envroot");
    REQUIRE(run("generate --players 10 --levels 20 --seed 2",
                "LEVELCAST_OUT='" + root + "'")
                .code == 0);
    CHECK(exists(root + "/generate/interactions.csv"));
}

TEST_CASE("filesystem failures map to the IO exit code") {
    const Fixture& f = fx();
    const std::string blocked = f.dir.file("blocked");
    testutil::write_text(blocked, "in the way\n");
    CHECK(run("generate --players 10 --levels 20 --out-dir '" + blocked + "'").code == 5);

    CHECK(run("train --method naive --data '" + f.dir.file("missing.csv") + "'").code == 5);
}

int main(int argc, char** argv) {
    doctest::Context context;
    std::vector<char*> args;
    for (int i = 0; i < argc; ++i) {
        if (i > 0 && argv[i][0] != '-' && g_cli.empty()) {
            g_cli = argv[i];
            continue;
        }
        args.push_back(argv[i]);
    }
    if (g_cli.empty()) {
        std::fprintf(stderr, "usage: %s <path-to-levelcast-binary> [doctest options]\n",
                     argv[0]);
        return 1;
    }
    context.applyCommandLine(static_cast<int>(args.size()), args.data());
    return context.run();
}
