#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "levelcast/dataset.hpp"

namespace testutil {

// Unique scratch directory, removed (with contents) on destruction.
class TempDir {
public:
    TempDir() {
        const auto base = std::filesystem::temp_directory_path();
        std::random_device rd;
        for (int tries = 0; tries < 100; ++tries) {
            auto candidate = base / ("levelcast_test_" + std::to_string(rd()));
            std::error_code ec;
            if (std::filesystem::create_directory(candidate, ec)) {
                path_ = candidate;
                return;
            }
        }
        throw std::runtime_error("cannot create a scratch directory");
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::string file(const std::string& name) const { return (path_ / name).string(); }

private:
    std::filesystem::path path_;
};

inline std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
}

inline std::string player_name(int u) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "p%04d", u);
    return buf;
}

// Full players x levels grid with attempts supplied per cell.
inline levelcast::Dataset grid_dataset(
    int players, int levels, const std::function<int(int, int)>& attempts) {
    std::vector<levelcast::InteractionRecord> records;
    records.reserve(static_cast<std::size_t>(players) * levels);
    for (int u = 1; u <= players; ++u)
        for (int l = 1; l <= levels; ++l)
            records.push_back({player_name(u), l, attempts(u, l)});
    return levelcast::make_dataset(std::move(records));
}

} // namespace testutil
