#include "levelcast/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "levelcast/csv.hpp"
#include "levelcast/errors.hpp"

namespace levelcast {

namespace {

std::vector<double> fractional_ranks(std::span<const double> values) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
        const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = avg;
        i = j + 1;
    }
    return ranks;
}

} // namespace

double spearman(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size())
        throw ContractError("spearman: length mismatch (" + std::to_string(a.size()) + " vs " +
                            std::to_string(b.size()) + ")");
    if (a.size() < 2) throw ContractError("spearman: need at least 2 points");
    const std::vector<double> ra = fractional_ranks(a);
    const std::vector<double> rb = fractional_ranks(b);
    const double n = static_cast<double>(a.size());
    const double mean = (n + 1.0) / 2.0;
    double cov = 0.0, var_a = 0.0, var_b = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double da = ra[i] - mean;
        const double db = rb[i] - mean;
        cov += da * db;
        var_a += da * da;
        var_b += db * db;
    }
    if (var_a <= 0.0 || var_b <= 0.0)
        throw UndefinedCorrelationError(
            "spearman undefined: " + std::string(var_a <= 0.0 ? "first" : "second") +
            " input has zero rank variance");
    return std::clamp(cov / std::sqrt(var_a * var_b), -1.0, 1.0);
}

namespace {

struct Stats {
    double mean = 0.0;
    double var = 0.0;
    std::size_t n = 0;
};

void finish_row(FactorRow& row, const Stats& s) {
    if (s.n == 0) return;
    row.has_stats = true;
    row.mean_attempts = s.mean;
    row.var_attempts = s.var;
    row.norm_variance = s.mean > 0.0 ? s.var / s.mean : 0.0;
    row.norm_variance_sq = s.mean > 0.0 ? s.var / (s.mean * s.mean) : 0.0;
}

template <typename Key>
std::map<Key, Stats> attempt_stats(const Dataset& train, Key (*key_of)(const InteractionRecord&)) {
    std::map<Key, std::pair<double, std::size_t>> sums;
    for (const auto& r : train.records) {
        auto& [sum, n] = sums[key_of(r)];
        sum += r.attempts;
        ++n;
    }
    std::map<Key, Stats> out;
    for (const auto& [key, sn] : sums)
        out[key] = {sn.first / static_cast<double>(sn.second), 0.0, sn.second};
    for (const auto& r : train.records) {
        Stats& s = out[key_of(r)];
        const double d = r.attempts - s.mean;
        s.var += d * d;
    }
    for (auto& [key, s] : out) s.var /= static_cast<double>(s.n);
    return out;
}

} // namespace

FactorTables build_factor_tables(const FmModel& model, const FeatureSchema& schema,
                                 const Dataset& train) {
    if (model.schema_width != schema.width())
        throw ContractError("factor tables: model width " + std::to_string(model.schema_width) +
                            " does not match schema width " + std::to_string(schema.width()));
    check_fingerprint(model, schema.fingerprint());

    auto player_stats = attempt_stats<std::string>(
        train, [](const InteractionRecord& r) { return r.player_id; });
    auto level_stats = attempt_stats<std::int32_t>(
        train, [](const InteractionRecord& r) { return r.level_id; });

    FactorTables tables;
    tables.players.kind = FactorTable::Kind::player;
    tables.levels.kind = FactorTable::Kind::level;
    tables.players.k = model.k;
    tables.levels.k = model.k;

    auto fill = [&](FactorRow& row, std::uint32_t column) {
        row.w = model.w[column];
        row.v.resize(model.k);
        for (std::uint32_t f = 0; f < model.k; ++f) row.v[f] = model.v_at(column, f);
    };

    const auto& players = schema.players();
    for (std::uint32_t i = 0; i < players.size(); ++i) {
        FactorRow row;
        row.id = players[i];
        fill(row, schema.player_block() + i);
        if (auto it = player_stats.find(players[i]); it != player_stats.end())
            finish_row(row, it->second);
        tables.players.rows.push_back(std::move(row));
    }
    const auto& levels = schema.levels();
    for (std::uint32_t i = 0; i < levels.size(); ++i) {
        FactorRow row;
        row.id = std::to_string(levels[i]);
        row.level_number = levels[i];
        fill(row, schema.level_block() + i);
        if (auto it = level_stats.find(levels[i]); it != level_stats.end())
            finish_row(row, it->second);
        tables.levels.rows.push_back(std::move(row));
    }
    return tables;
}

std::vector<double> canonicalize_factors(FactorTables& tables) {
    std::vector<double> signs(tables.levels.k, 1.0);
    for (std::uint32_t f = 0; f < tables.levels.k; ++f) {
        std::vector<double> vf, attempts;
        for (const auto& row : tables.levels.rows) {
            if (!row.has_stats) continue;
            vf.push_back(row.v[f]);
            attempts.push_back(row.mean_attempts);
        }
        double rho = 1.0;
        if (vf.size() >= 2) {
            try {
                rho = spearman(vf, attempts);
            } catch (const UndefinedCorrelationError&) {
                rho = 1.0;
            }
        }
        if (rho < 0.0) {
            signs[f] = -1.0;
            for (auto& row : tables.levels.rows) row.v[f] = -row.v[f];
            for (auto& row : tables.players.rows) row.v[f] = -row.v[f];
        }
    }
    return signs;
}

const CorrelationEntry* CorrelationReport::find(const std::string& name) const {
    for (const auto& e : entries)
        if (e.name == name) return &e;
    return nullptr;
}

namespace {

template <typename Extract>
void add_entry(CorrelationReport& report, const FactorTable& table, const std::string& name,
               Extract extract) {
    std::vector<double> a, b;
    for (const auto& row : table.rows) {
        auto pair = extract(row);
        if (!pair) continue;
        a.push_back(pair->first);
        b.push_back(pair->second);
    }
    if (a.size() < 2) return;
    report.entries.push_back({name, spearman(a, b), a.size()});
}

using MaybePair = std::optional<std::pair<double, double>>;

MaybePair with_stats(const FactorRow& row, double param) {
    if (!row.has_stats) return std::nullopt;
    return std::pair{param, row.mean_attempts};
}

} // namespace

CorrelationReport interpretation_report(const FactorTables& tables, const TruthColumns* truth,
                                        bool norm_variance_squared) {
    CorrelationReport report;
    const std::uint32_t k = tables.levels.k;

    add_entry(report, tables.levels, "level_w_vs_avg_attempts",
              [](const FactorRow& r) { return with_stats(r, r.w); });
    add_entry(report, tables.players, "player_w_vs_mean_attempts",
              [](const FactorRow& r) { return with_stats(r, r.w); });
    if (k >= 1) {
        add_entry(report, tables.levels, "level_v1_vs_avg_attempts",
                  [](const FactorRow& r) { return with_stats(r, r.v[0]); });
        add_entry(report, tables.levels, "level_v1_vs_norm_variance",
                  [norm_variance_squared](const FactorRow& r) -> MaybePair {
                      if (!r.has_stats) return std::nullopt;
                      return std::pair{r.v[0], norm_variance_squared ? r.norm_variance_sq
                                                                     : r.norm_variance};
                  });
        add_entry(report, tables.players, "player_v1_vs_mean_attempts",
                  [](const FactorRow& r) { return with_stats(r, r.v[0]); });
    }
    if (k >= 2)
        add_entry(report, tables.levels, "level_v2_vs_level_number",
                  [](const FactorRow& r) -> MaybePair {
                      return std::pair{r.v[1], static_cast<double>(r.level_number)};
                  });

    if (truth) {
        auto level_truth = [&](const FactorRow& r, double param) -> MaybePair {
            auto it = truth->level_difficulty.find(r.level_number);
            if (it == truth->level_difficulty.end()) return std::nullopt;
            return std::pair{param, it->second};
        };
        auto player_truth = [&](const FactorRow& r, double param) -> MaybePair {
            auto it = truth->player_skill.find(r.id);
            if (it == truth->player_skill.end()) return std::nullopt;
            return std::pair{param, it->second};
        };
        add_entry(report, tables.levels, "level_w_vs_true_difficulty",
                  [&](const FactorRow& r) { return level_truth(r, r.w); });
        if (k >= 1) {
            add_entry(report, tables.levels, "level_v1_vs_true_difficulty",
                      [&](const FactorRow& r) { return level_truth(r, r.v[0]); });
            add_entry(report, tables.players, "player_v1_vs_true_skill",
                      [&](const FactorRow& r) { return player_truth(r, r.v[0]); });
            add_entry(report, tables.players, "player_skill_proxy_v1_vs_true_skill",
                      [&](const FactorRow& r) { return player_truth(r, -r.v[0]); });
        }
        add_entry(report, tables.players, "player_skill_proxy_w_vs_true_skill",
                  [&](const FactorRow& r) { return player_truth(r, -r.w); });
    }
    return report;
}

std::vector<HistogramBin> fd_histogram(std::span<const double> values) {
    if (values.empty()) throw ContractError("fd_histogram: empty input");
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    const double lo = sorted.front();
    const double hi = sorted.back();
    const std::size_t n = sorted.size();
    auto quantile = [&](double p) {
        const double pos = p * static_cast<double>(n - 1);
        const std::size_t base = static_cast<std::size_t>(pos);
        const double frac = pos - static_cast<double>(base);
        if (base + 1 >= n) return sorted[base];
        return sorted[base] + frac * (sorted[base + 1] - sorted[base]);
    };
    const double iqr = quantile(0.75) - quantile(0.25);
    const double width = 2.0 * iqr / std::cbrt(static_cast<double>(n));
    if (hi <= lo || width <= 0.0) return {{lo, hi, n}};
    const std::size_t n_bins =
        static_cast<std::size_t>(std::ceil((hi - lo) / width));
    std::vector<HistogramBin> bins(n_bins);
    for (std::size_t b = 0; b < n_bins; ++b) {
        bins[b].lo = lo + (hi - lo) * static_cast<double>(b) / static_cast<double>(n_bins);
        bins[b].hi = lo + (hi - lo) * static_cast<double>(b + 1) / static_cast<double>(n_bins);
    }
    bins.back().hi = hi;
    for (double v : sorted) {
        std::size_t b = static_cast<std::size_t>((v - lo) / (hi - lo) *
                                                 static_cast<double>(n_bins));
        if (b >= n_bins) b = n_bins - 1;
        ++bins[b].count;
    }
    return bins;
}

std::vector<Histogram> parameter_histograms(const FactorTables& tables) {
    std::vector<Histogram> out;
    auto add = [&](const std::string& series, const std::vector<double>& values) {
        if (values.empty()) return;
        out.push_back({series, fd_histogram(values)});
    };
    auto collect_w = [](const FactorTable& t) {
        std::vector<double> v;
        for (const auto& row : t.rows) v.push_back(row.w);
        return v;
    };
    add("player_w", collect_w(tables.players));
    add("level_w", collect_w(tables.levels));
    for (std::uint32_t f = 0; f < tables.players.k; ++f) {
        auto collect_v = [f](const FactorTable& t) {
            std::vector<double> v;
            for (const auto& row : t.rows) v.push_back(row.v[f]);
            return v;
        };
        add("player_v" + std::to_string(f + 1), collect_v(tables.players));
        add("level_v" + std::to_string(f + 1), collect_v(tables.levels));
    }
    return out;
}

void write_factor_table_csv(const FactorTable& table, const std::string& path) {
    CsvWriter w(path);
    const bool level = table.kind == FactorTable::Kind::level;
    std::vector<std::string> header;
    header.push_back(level ? "level_id" : "player_id");
    if (level) header.push_back("level_number");
    header.push_back("w");
    for (std::uint32_t f = 0; f < table.k; ++f) header.push_back("v" + std::to_string(f + 1));
    header.push_back("has_stats");
    header.push_back(level ? "avg_attempts" : "mean_attempts");
    header.push_back("var_attempts");
    if (level) {
        header.push_back("norm_variance");
        header.push_back("norm_variance_sq");
    }
    w.write_row(header);
    for (const auto& row : table.rows) {
        std::vector<std::string> cells;
        cells.push_back(row.id);
        if (level) cells.push_back(std::to_string(row.level_number));
        cells.push_back(fmt_double_exact(row.w));
        for (double v : row.v) cells.push_back(fmt_double_exact(v));
        cells.push_back(row.has_stats ? "1" : "0");
        if (row.has_stats) {
            cells.push_back(fmt_double_exact(row.mean_attempts));
            cells.push_back(fmt_double_exact(row.var_attempts));
            if (level) {
                cells.push_back(fmt_double_exact(row.norm_variance));
                cells.push_back(fmt_double_exact(row.norm_variance_sq));
            }
        } else {
            cells.insert(cells.end(), level ? 4 : 2, "");
        }
        w.write_row(cells);
    }
    w.close();
}

void write_histograms_csv(const std::vector<Histogram>& histograms, const std::string& path) {
    CsvWriter w(path);
    w.write_row({"series", "bin_lo", "bin_hi", "count"});
    for (const auto& h : histograms)
        for (const auto& b : h.bins)
            w.write_row({h.series, fmt_double_exact(b.lo), fmt_double_exact(b.hi),
                         std::to_string(b.count)});
    w.close();
}

void write_correlations_csv(const CorrelationReport& report, const std::string& path) {
    CsvWriter w(path);
    w.write_row({"name", "rho", "n"});
    for (const auto& e : report.entries)
        w.write_row({e.name, fmt_double_exact(e.rho), std::to_string(e.n)});
    w.close();
}

} // namespace levelcast
