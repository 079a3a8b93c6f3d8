#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "levelcast/analysis.hpp"
#include "levelcast/baselines.hpp"
#include "levelcast/dataset.hpp"
#include "levelcast/eval.hpp"
#include "levelcast/features.hpp"
#include "levelcast/synth.hpp"
#include "levelcast/trainer.hpp"

namespace py = pybind11;
namespace lc = levelcast;

namespace {

lc::SplitSpec make_split_spec(std::int32_t observed, double test_fraction,
                              std::int32_t floor, std::uint64_t seed) {
    lc::SplitSpec spec;
    spec.observed_levels = observed;
    spec.test_fraction = test_fraction;
    spec.eval_level_floor = floor;
    spec.seed = seed;
    return spec;
}

struct RunResult {
    double mae = 0.0;
    double rmse = 0.0;
    std::vector<double> predictions;
    std::vector<double> truth;
};

std::vector<double> targets_of(const lc::Dataset& d) {
    std::vector<double> t;
    t.reserve(d.records.size());
    for (const auto& r : d.records) t.push_back(r.attempts);
    return t;
}

RunResult score(std::vector<double> predictions, std::vector<double> truth) {
    RunResult r;
    r.mae = lc::mae(predictions, truth);
    r.rmse = lc::rmse(predictions, truth);
    r.predictions = std::move(predictions);
    r.truth = std::move(truth);
    return r;
}

RunResult run_fm(const lc::Dataset& data, std::int32_t observed, std::uint32_t k,
                 std::uint32_t iterations, std::uint32_t burn_in, double init_stdev,
                 std::uint64_t seed, double test_fraction, std::int32_t floor) {
    lc::Split split = lc::split_players(data, make_split_spec(observed, test_fraction, floor, seed));
    lc::FeatureContext ctx = lc::FeatureContext::build(split, false, nullptr, nullptr, observed);
    lc::McmcConfig config;
    config.iterations = iterations;
    config.burn_in = burn_in;
    config.factor_count = k;
    config.init_stdev = init_stdev;
    config.seed = seed;
    lc::TrainResult result = lc::train_predict(ctx.encode_rows(split.train),
                                               ctx.encode_rows(split.test),
                                               ctx.schema().width(), config);
    return score(result.test_prediction.clamped(), targets_of(split.test));
}

RunResult run_naive(const lc::Dataset& data, std::int32_t observed, std::uint64_t seed,
                    double test_fraction, std::int32_t floor) {
    lc::Split split = lc::split_players(data, make_split_spec(observed, test_fraction, floor, seed));
    lc::NaiveBaselineModel model =
        lc::fit_naive(lc::without_players(split.train, split.test_players));
    std::vector<double> preds;
    preds.reserve(split.test.records.size());
    for (const auto& r : split.test.records)
        preds.push_back(std::clamp(lc::predict_naive(model, r.level_id), 1.0,
                                   static_cast<double>(lc::kAttemptCap)));
    return score(std::move(preds), targets_of(split.test));
}

lc::OracleReport run_oracle(const lc::SynthResult& synth, std::int32_t observed,
                            std::uint64_t seed, double test_fraction, std::int32_t floor) {
    lc::Split split =
        lc::split_players(synth.data, make_split_spec(observed, test_fraction, floor, seed));
    return lc::oracle_metrics(synth.truth, split);
}

} // namespace

PYBIND11_MODULE(_levelcast, m) {
    m.doc() = "Attempt-count prediction toolkit: synthetic data, FM training, baselines";

    py::register_exception<lc::ValidationError>(m, "ValidationError", PyExc_ValueError);
    py::register_exception<lc::DivergenceError>(m, "DivergenceError", PyExc_RuntimeError);

    py::class_<lc::Dataset>(m, "Dataset")
        .def_property_readonly("n_records",
                               [](const lc::Dataset& d) { return d.records.size(); })
        .def_property_readonly("n_players",
                               [](const lc::Dataset& d) { return d.player_index.size(); })
        .def_property_readonly("max_level", [](const lc::Dataset& d) { return d.max_level; })
        .def("__len__", [](const lc::Dataset& d) { return d.records.size(); })
        .def("__repr__", [](const lc::Dataset& d) {
            return "<Dataset records=" + std::to_string(d.records.size()) +
                   " players=" + std::to_string(d.player_index.size()) + ">";
        });

    py::class_<lc::SynthTruth>(m, "SynthTruth")
        .def_readonly("player_ids", &lc::SynthTruth::player_ids)
        .def_readonly("skill", &lc::SynthTruth::skill)
        .def_readonly("level_ids", &lc::SynthTruth::level_ids)
        .def_readonly("difficulty", &lc::SynthTruth::difficulty);

    py::class_<lc::SynthResult>(m, "SynthResult")
        .def_readonly("data", &lc::SynthResult::data)
        .def_readonly("truth", &lc::SynthResult::truth);

    py::class_<lc::OracleReport>(m, "OracleReport")
        .def_readonly("mae", &lc::OracleReport::mae)
        .def_readonly("rmse", &lc::OracleReport::rmse)
        .def_readonly("n", &lc::OracleReport::n);

    py::class_<RunResult>(m, "RunResult")
        .def_readonly("mae", &RunResult::mae)
        .def_readonly("rmse", &RunResult::rmse)
        .def_readonly("predictions", &RunResult::predictions)
        .def_readonly("truth", &RunResult::truth);

    m.def("load_interactions",
          [](const std::string& path) { return lc::load_interactions(path); }, py::arg("path"));
    m.def("save_interactions", &lc::save_interactions, py::arg("data"), py::arg("path"));

    m.def(
        "generate",
        [](std::int32_t players, std::int32_t levels, std::uint64_t seed, double gamma,
           double skill_stdev) {
            lc::SynthConfig config;
            config.n_players = players;
            config.n_levels = levels;
            config.seed = seed;
            config.interaction_strength = gamma;
            config.skill_stdev = skill_stdev;
            return lc::generate(config);
        },
        py::arg("players") = 200, py::arg("levels") = 300, py::arg("seed") = 1,
        py::arg("gamma") = 0.5, py::arg("skill_stdev") = 0.7);

    m.def("train_fm", &run_fm, py::arg("data"), py::arg("observed"), py::arg("k") = 8,
          py::arg("iterations") = 1000, py::arg("burn_in") = 50, py::arg("init_stdev") = 1.0,
          py::arg("seed") = 1, py::arg("test_fraction") = 0.01, py::arg("floor") = 150,
          "Split the data, train an FM by Gibbs sampling and score the held-out rows");
    m.def("evaluate_naive", &run_naive, py::arg("data"), py::arg("observed"), py::arg("seed") = 1,
          py::arg("test_fraction") = 0.01, py::arg("floor") = 150,
          "Score the per-level-mean baseline on the held-out rows");
    m.def("oracle_metrics", &run_oracle, py::arg("synth"), py::arg("observed"),
          py::arg("seed") = 1, py::arg("test_fraction") = 0.01, py::arg("floor") = 150,
          "Error of the Bayes-optimal predictor on the held-out rows");

    m.def("mae", [](const std::vector<double>& p, const std::vector<double>& t) {
        return lc::mae(p, t);
    });
    m.def("rmse", [](const std::vector<double>& p, const std::vector<double>& t) {
        return lc::rmse(p, t);
    });
    m.def("spearman", [](const std::vector<double>& a, const std::vector<double>& b) {
        return lc::spearman(a, b);
    });
    m.def("truncated_geometric_mean", &lc::truncated_geometric_mean, py::arg("p"),
          py::arg("cap") = lc::kAttemptCap);

    m.attr("ATTEMPT_CAP") = lc::kAttemptCap;
    m.attr("__version__") = "0.1.0";
}
