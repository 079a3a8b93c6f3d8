#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace levelcast {

inline constexpr const char* kToolVersion = "0.1.0";

// FNV-1a over the raw bytes; IoError when the file cannot be read.
std::uint64_t hash_file(const std::string& path);

// Provenance record written once per artifact directory.
struct RunManifest {
    std::string command;
    std::string config_json; // serialized snapshot of the effective config
    std::vector<std::pair<std::string, std::uint64_t>> input_hashes;
    std::vector<std::uint64_t> seeds;
    std::vector<std::string> outputs;
    double wall_ms = 0.0;
};

void write_manifest(const RunManifest& manifest, const std::string& dir);

} // namespace levelcast
