#include <doctest.h>

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "levelcast/errors.hpp"
#include "levelcast/fm.hpp"
#include "support/oracles.hpp"
#include "support/testutil.hpp"

using namespace levelcast;

namespace {

DesignRow one_hot_row(std::initializer_list<std::uint32_t> columns) {
    DesignRow row;
    for (std::uint32_t c : columns) {
        row.indices.push_back(c);
        row.values.push_back(1.0);
    }
    return row;
}

} // namespace

TEST_CASE("predict is zero for the zero model") {
    const FmModel m = make_fm_model(10, 4);
    const DesignRow row = one_hot_row({1, 5, 9});
    CHECK(predict(m, as_view(row)) == 0.0);
}

TEST_CASE("a single active column contributes only its weight") {
    std::mt19937_64 rng(2);
    auto [m, row] = oracles::random_case(rng, 20, 4, 1);
    row.values[0] = 1.0;
    CHECK(predict(m, as_view(row)) ==
          doctest::Approx(m.w0 + m.w[row.indices[0]]).epsilon(1e-12));
}

TEST_CASE("fast predict equals the pairwise double loop") {
    std::mt19937_64 rng(404);
    const std::uint32_t ks[] = {1, 2, 8};
    for (int trial = 0; trial < 1000; ++trial) {
        const std::uint32_t k = ks[trial % 3];
        const std::size_t active = 2 + rng() % 11;
        const auto [m, row] = oracles::random_case(rng, 50, k, active);
        const double fast = predict(m, as_view(row));
        const double slow = oracles::predict_double_loop(m, as_view(row));
        CHECK(std::abs(fast - slow) <= 1e-10 * std::max(1.0, std::abs(slow)));
    }
}

TEST_CASE("predict rejects out-of-range columns") {
    const FmModel m = make_fm_model(5, 2);
    const DesignRow row = one_hot_row({4, 7});
    CHECK_THROWS_AS(predict(m, as_view(row)), ContractError);
}

TEST_CASE("predict_clamped reports within the attempt range") {
    FmModel m = make_fm_model(1, 0);
    const DesignRow row = one_hot_row({0});

    m.w[0] = 0.2;
    CHECK(predict_clamped(m, as_view(row)) == 1.0);
    m.w[0] = 57.0;
    CHECK(predict_clamped(m, as_view(row)) == 30.0);
    m.w[0] = 3.7;
    CHECK(predict_clamped(m, as_view(row)) == 3.7);
}

TEST_CASE("multilinear_terms reconstructs the prediction") {
    std::mt19937_64 rng(77);
    for (int trial = 0; trial < 100; ++trial) {
        const auto [m, row] = oracles::random_case(rng, 30, 2, 3);
        const auto view = as_view(row);
        const double y = predict(m, view);
        for (std::size_t i = 0; i < row.indices.size(); ++i) {
            const std::uint32_t col = row.indices[i];
            const auto lin = multilinear_terms(m, view, ParamHandle::linear(col));
            CHECK(lin.g + lin.h * m.w[col] == doctest::Approx(y).epsilon(1e-10));
            CHECK(lin.h == row.values[i]);
            for (std::uint32_t f = 0; f < m.k; ++f) {
                const auto fac = multilinear_terms(m, view, ParamHandle::latent(col, f));
                CHECK(fac.g + fac.h * m.v_at(col, f) == doctest::Approx(y).epsilon(1e-10));
            }
        }
    }
}

TEST_CASE("multilinear h matches the finite-difference slope") {
    std::mt19937_64 rng(88);
    for (int trial = 0; trial < 200; ++trial) {
        const auto [m, row] = oracles::random_case(rng, 30, 4, 2 + trial % 5);
        const auto view = as_view(row);
        const std::uint32_t col = row.indices[trial % row.indices.size()];
        const ParamHandle param = trial % 2 == 0
                                      ? ParamHandle::linear(col)
                                      : ParamHandle::latent(col, trial % m.k);
        const double h = multilinear_terms(m, view, param).h;
        const double fd = oracles::predict_slope_fd(m, view, param);
        CHECK(std::abs(h - fd) <= 1e-8 * std::max(1.0, std::abs(h)));
    }
}

TEST_CASE("an inactive or partnerless column has no latent slope") {
    std::mt19937_64 rng(31);
    const auto [m, single] = oracles::random_case(rng, 20, 4, 1);
    CHECK(multilinear_terms(m, as_view(single),
                            ParamHandle::latent(single.indices[0], 1))
              .h == 0.0);

    // Column 19 is not in the row at all.
    const auto [m2, row] = oracles::random_case(rng, 19, 4, 3);
    CHECK(multilinear_terms(m2, as_view(row), ParamHandle::linear(18)).h == 0.0);
    CHECK(multilinear_terms(m2, as_view(row), ParamHandle::latent(18, 0)).h == 0.0);
}

TEST_CASE("multilinear_terms rejects invalid handles") {
    const FmModel m = make_fm_model(5, 2);
    const DesignRow row = one_hot_row({0, 1});
    CHECK_THROWS_AS(multilinear_terms(m, as_view(row), ParamHandle::linear(9)), ContractError);
    CHECK_THROWS_AS(multilinear_terms(m, as_view(row), ParamHandle::latent(0, 5)),
                    ContractError);
}

TEST_CASE("a model with no factors is purely linear") {
    std::mt19937_64 rng(19);
    std::uniform_real_distribution<double> coef(-2.0, 2.0);
    FmModel m = make_fm_model(12, 0);
    for (auto& w : m.w) w = coef(rng);
    CHECK(m.v.empty());

    DesignRow row = one_hot_row({2, 5, 11});
    row.values = {1.0, -0.5, 2.0};
    double expected = 0.0;
    for (std::size_t i = 0; i < row.indices.size(); ++i)
        expected += m.w[row.indices[i]] * row.values[i];
    CHECK(predict(m, as_view(row)) == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("negating a whole factor column preserves predictions") {
    std::mt19937_64 rng(23);
    for (int trial = 0; trial < 50; ++trial) {
        auto [m, row] = oracles::random_case(rng, 25, 4, 4);
        const double before = predict(m, as_view(row));
        const std::uint32_t f = trial % m.k;
        for (std::uint32_t c = 0; c < m.schema_width; ++c) m.v_at(c, f) = -m.v_at(c, f);
        CHECK(predict(m, as_view(row)) == doctest::Approx(before).epsilon(1e-12));
    }
}

TEST_CASE("predict is affine in every single parameter") {
    std::mt19937_64 rng(41);
    for (int trial = 0; trial < 50; ++trial) {
        auto [m, row] = oracles::random_case(rng, 15, 2, 3);
        const auto view = as_view(row);
        const std::uint32_t col = row.indices[0];
        double* theta = trial % 2 == 0 ? &m.w[col] : &m.v_at(col, 0);
        *theta = 0.0;
        const double y0 = predict(m, view);
        *theta = 1.0;
        const double y1 = predict(m, view);
        *theta = 2.0;
        const double y2 = predict(m, view);
        CHECK(y2 - y1 == doctest::Approx(y1 - y0).epsilon(1e-9));
    }
}

TEST_CASE("model serialization round-trips exactly") {
    std::mt19937_64 rng(61);
    auto [m, row] = oracles::random_case(rng, 18, 2, 3);
    m.schema_fingerprint = 0xabcdef12345678ULL;

    testutil::TempDir dir;
    save_fm_model(m, dir.file("model.json"), R"({"note":"fixture"})");
    std::string meta;
    const FmModel loaded = load_fm_model(dir.file("model.json"), &meta);
    CHECK(loaded.schema_width == m.schema_width);
    CHECK(loaded.k == m.k);
    CHECK(loaded.w == m.w);
    CHECK(loaded.v == m.v);
    CHECK(loaded.schema_fingerprint == m.schema_fingerprint);
    CHECK(meta.find("fixture") != std::string::npos);
    CHECK(predict(loaded, as_view(row)) == predict(m, as_view(row)));
}

TEST_CASE("fingerprint checks name both sides") {
    FmModel m = make_fm_model(4, 1);
    m.schema_fingerprint = 1111;
    CHECK_NOTHROW(check_fingerprint(m, 1111));
    m.schema_fingerprint = 0; // never stamped
    CHECK_NOTHROW(check_fingerprint(m, 2222));
    m.schema_fingerprint = 1111;
    try {
        check_fingerprint(m, 2222);
        FAIL("expected a fingerprint mismatch");
    } catch (const ValidationError& e) {
        const std::string what = e.what();
        CHECK(what.find("1111") != std::string::npos);
        CHECK(what.find("2222") != std::string::npos);
    }
}
