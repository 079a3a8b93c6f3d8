#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "levelcast/features.hpp"

namespace levelcast {

// Second-order factorization machine. The pairwise interaction between two
// active columns i and j is the inner product of their k-dimensional latent
// rows. The global bias w0 is carried for completeness but stays frozen at
// zero in every trained model.
struct FmModel {
    std::uint32_t schema_width = 0;
    std::uint32_t k = 0;
    double w0 = 0.0;
    std::vector<double> w; // schema_width entries
    std::vector<double> v; // schema_width * k entries, column-major rows: v[i*k + f]
    std::uint64_t schema_fingerprint = 0;

    double v_at(std::uint32_t column, std::uint32_t factor) const {
        return v[static_cast<std::size_t>(column) * k + factor];
    }
    double& v_at(std::uint32_t column, std::uint32_t factor) {
        return v[static_cast<std::size_t>(column) * k + factor];
    }
};

// Zero-initialized model of the given shape. k = 0 is allowed and reduces
// predict to the pure linear model.
FmModel make_fm_model(std::uint32_t schema_width, std::uint32_t k);

inline DesignRowView as_view(const DesignRow& r) {
    return {r.indices, r.values, r.target};
}

// w0 + Σ w_i x_i + ½ Σ_f [(Σ v_{i,f} x_i)² − Σ v_{i,f}² x_i²]; one pass over
// the active columns, cost O(active × k).
double predict(const FmModel& m, const DesignRowView& x);

// predict() clamped to the valid attempt range [1, kAttemptCap]. Applied at
// reporting time only; training always works on the raw value.
double predict_clamped(const FmModel& m, const DesignRowView& x);

// Names one scalar parameter of the model: either w[column] or
// v[column, factor].
struct ParamHandle {
    enum class Kind { linear, factor };
    Kind kind = Kind::linear;
    std::uint32_t column = 0;
    std::uint32_t factor = 0; // meaningful when kind == factor

    static ParamHandle linear(std::uint32_t column) {
        return {Kind::linear, column, 0};
    }
    static ParamHandle latent(std::uint32_t column, std::uint32_t factor) {
        return {Kind::factor, column, factor};
    }
};

// predict = g + h·θ with g, h independent of θ: the decomposition every
// Gibbs conditional is built on. For w_i, h = x_i; for v_{i,f},
// h = x_i (q_f − v_{i,f} x_i) with q_f = Σ_j v_{j,f} x_j. h = 0 when the
// column is inactive in the row.
struct MultilinearTerms {
    double g = 0.0;
    double h = 0.0;
};
MultilinearTerms multilinear_terms(const FmModel& m, const DesignRowView& x, ParamHandle param);

// JSON serialization carrying shape, parameters and the schema fingerprint.
// meta_json, when non-empty, must be a JSON object; it is embedded verbatim
// under "meta" and returned untouched by load (run provenance lives there).
void save_fm_model(const FmModel& m, const std::string& path,
                   const std::string& meta_json = "");
FmModel load_fm_model(const std::string& path, std::string* meta_json = nullptr);

// Throws ValidationError naming both fingerprints when they differ.
void check_fingerprint(const FmModel& m, std::uint64_t expected);

} // namespace levelcast
