#include "levelcast/manifest.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>

#include <json.hpp>

#include "levelcast/errors.hpp"

namespace levelcast {

std::uint64_t hash_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[1 << 16];
    while (in.read(buf, sizeof buf) || in.gcount() > 0) {
        const std::streamsize n = in.gcount();
        for (std::streamsize i = 0; i < n; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ULL;
        }
    }
    return h;
}

namespace {

std::string hex64(std::uint64_t v) {
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string utc_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

} // namespace

void write_manifest(const RunManifest& manifest, const std::string& dir) {
    nlohmann::json j;
    j["tool_version"] = kToolVersion;
    j["command"] = manifest.command;
    j["created_utc"] = utc_now();
    if (!manifest.config_json.empty())
        j["config"] = nlohmann::json::parse(manifest.config_json);
    nlohmann::json inputs = nlohmann::json::object();
    for (const auto& [path, hash] : manifest.input_hashes) inputs[path] = "fnv1a:" + hex64(hash);
    j["inputs"] = std::move(inputs);
    j["seeds"] = manifest.seeds;
    j["outputs"] = manifest.outputs;
    j["wall_ms"] = manifest.wall_ms;
    const std::string path = dir + "/manifest.json";
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << j.dump(2) << '\n';
}

} // namespace levelcast
