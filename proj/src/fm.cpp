#include "levelcast/fm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "levelcast/errors.hpp"

namespace levelcast {

FmModel make_fm_model(std::uint32_t schema_width, std::uint32_t k) {
    FmModel m;
    m.schema_width = schema_width;
    m.k = k;
    m.w.assign(schema_width, 0.0);
    m.v.assign(static_cast<std::size_t>(schema_width) * k, 0.0);
    return m;
}

namespace {

void check_row(const FmModel& m, const DesignRowView& x) {
    for (std::uint32_t idx : x.indices)
        if (idx >= m.schema_width)
            throw ContractError("design row index " + std::to_string(idx) +
                                " out of range for schema width " +
                                std::to_string(m.schema_width));
}

} // namespace

double predict(const FmModel& m, const DesignRowView& x) {
    check_row(m, x);
    const std::uint32_t k = m.k;
    thread_local std::vector<double> q, s;
    q.assign(k, 0.0);
    s.assign(k, 0.0);
    double y = m.w0;
    for (std::size_t a = 0; a < x.indices.size(); ++a) {
        const std::uint32_t idx = x.indices[a];
        const double val = x.values[a];
        y += m.w[idx] * val;
        const double* vrow = m.v.data() + static_cast<std::size_t>(idx) * k;
        for (std::uint32_t f = 0; f < k; ++f) {
            double t = vrow[f] * val;
            q[f] += t;
            s[f] += t * t;
        }
    }
    for (std::uint32_t f = 0; f < k; ++f) y += 0.5 * (q[f] * q[f] - s[f]);
    return y;
}

double predict_clamped(const FmModel& m, const DesignRowView& x) {
    return std::clamp(predict(m, x), 1.0, static_cast<double>(kAttemptCap));
}

MultilinearTerms multilinear_terms(const FmModel& m, const DesignRowView& x, ParamHandle param) {
    if (param.column >= m.schema_width)
        throw ContractError("parameter column " + std::to_string(param.column) +
                            " out of range for schema width " + std::to_string(m.schema_width));
    if (param.kind == ParamHandle::Kind::factor && param.factor >= m.k)
        throw ContractError("parameter factor " + std::to_string(param.factor) +
                            " out of range for k = " + std::to_string(m.k));
    check_row(m, x);

    double xi = 0.0;
    bool active = false;
    for (std::size_t a = 0; a < x.indices.size(); ++a) {
        if (x.indices[a] == param.column) {
            xi = x.values[a];
            active = true;
            break;
        }
    }
    const double y = predict(m, x);
    if (!active) return {y, 0.0};

    double h, theta;
    if (param.kind == ParamHandle::Kind::linear) {
        h = xi;
        theta = m.w[param.column];
    } else {
        double qf = 0.0;
        for (std::size_t a = 0; a < x.indices.size(); ++a)
            qf += m.v_at(x.indices[a], param.factor) * x.values[a];
        theta = m.v_at(param.column, param.factor);
        h = xi * (qf - theta * xi);
    }
    return {y - h * theta, h};
}

void save_fm_model(const FmModel& m, const std::string& path, const std::string& meta_json) {
    nlohmann::json j;
    j["format"] = "levelcast-fm";
    j["version"] = 1;
    j["schema_width"] = m.schema_width;
    j["k"] = m.k;
    j["w0"] = m.w0;
    j["w"] = m.w;
    j["v"] = m.v;
    j["schema_fingerprint"] = m.schema_fingerprint;
    if (!meta_json.empty()) {
        nlohmann::json meta = nlohmann::json::parse(meta_json, nullptr, false);
        if (meta.is_discarded() || !meta.is_object())
            throw ContractError("save_fm_model: meta_json must be a JSON object");
        j["meta"] = std::move(meta);
    }
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << j.dump(2) << '\n';
    if (!out) throw IoError("write failed: " + path);
}

FmModel load_fm_model(const std::string& path, std::string* meta_json) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ValidationError(path + ": not valid JSON");
    if (j.value("format", "") != "levelcast-fm")
        throw ValidationError(path + ": not a model file");

    FmModel m;
    m.schema_width = j.at("schema_width").get<std::uint32_t>();
    m.k = j.at("k").get<std::uint32_t>();
    m.w0 = j.at("w0").get<double>();
    m.w = j.at("w").get<std::vector<double>>();
    m.v = j.at("v").get<std::vector<double>>();
    m.schema_fingerprint = j.at("schema_fingerprint").get<std::uint64_t>();
    if (m.w.size() != m.schema_width)
        throw ValidationError(path + ": w length does not match schema_width");
    if (m.v.size() != static_cast<std::size_t>(m.schema_width) * m.k)
        throw ValidationError(path + ": v length does not match schema_width * k");
    auto finite = [](double d) { return std::isfinite(d); };
    if (!finite(m.w0) || !std::all_of(m.w.begin(), m.w.end(), finite) ||
        !std::all_of(m.v.begin(), m.v.end(), finite))
        throw ValidationError(path + ": non-finite parameter");
    if (meta_json) *meta_json = j.contains("meta") ? j["meta"].dump() : std::string();
    return m;
}

void check_fingerprint(const FmModel& m, std::uint64_t expected) {
    if (m.schema_fingerprint == 0) return; // never stamped; nothing to check
    if (m.schema_fingerprint != expected)
        throw ValidationError("schema fingerprint mismatch: model has " +
                              std::to_string(m.schema_fingerprint) + ", schema has " +
                              std::to_string(expected));
}

} // namespace levelcast
