// Run manifest: records the command, configuration hash, input and output
// file hashes, seed, version and timings, so a run can be audited and
// reproduced. File hashes use FNV-1a 64 (content fingerprint, not a
// security primitive).
#pragma once

#include <chrono>
#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "prospect/errors.hpp"
#include "prospect/version.hpp"

namespace prospect {

inline std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t h = 1469598103934665603ULL) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < size; ++i) {
        h ^= p[i];
        h *= 1099511628211ULL;
    }
    return h;
}

inline std::string hash_hex(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

inline std::string hash_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot hash " + path.string());
    std::uint64_t h = 1469598103934665603ULL;
    char buf[1 << 16];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0)
        h = fnv1a64(buf, static_cast<std::size_t>(in.gcount()), h);
    return hash_hex(h);
}

class RunManifest {
public:
    RunManifest(std::string command, std::uint64_t seed) {
        j_["command"] = std::move(command);
        j_["seed"] = seed;
        j_["version"] = version_string();
        j_["inputs"] = nlohmann::json::object();
        j_["outputs"] = nlohmann::json::object();
        j_["params"] = nlohmann::json::object();
        start_ = std::chrono::steady_clock::now();
    }

    void set_config(const std::filesystem::path& path) { j_["config_hash"] = hash_file(path); }
    void add_input(const std::filesystem::path& path) { j_["inputs"][path.filename().string()] = hash_file(path); }
    void add_output(const std::filesystem::path& path) { j_["outputs"][path.filename().string()] = hash_file(path); }
    void set_param(const std::string& key, const std::string& value) { j_["params"][key] = value; }
    void add_warning(const std::string& w) { j_["warnings"].push_back(w); }

    void write(const std::filesystem::path& path) {
        const auto elapsed = std::chrono::steady_clock::now() - start_;
        j_["elapsed_ms"] = std::chrono::duration_cast<std::chrono::milliseconds>(elapsed).count();
        std::ofstream out(path);
        if (!out) throw IoError("cannot write " + path.string());
        out << j_.dump(2) << '\n';
        if (!out) throw IoError("write failed: " + path.string());
    }

    const nlohmann::json& json() const { return j_; }

private:
    nlohmann::json j_;
    std::chrono::steady_clock::time_point start_;
};

} // namespace prospect
