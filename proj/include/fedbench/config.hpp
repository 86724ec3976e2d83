#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "fedbench/error.hpp"

namespace fedbench {

// Flat key=value experiment configuration with dotted section paths
// (strategy.fedprox.mu=0.01). Lines starting with '#' are comments. Every key
// must be consumed by the experiment builder; leftovers are reported as
// configuration errors with their full path.
class KeyValueConfig {
public:
    static KeyValueConfig from_file(const std::filesystem::path& path);
    static KeyValueConfig from_string(const std::string& text);

    // Environment variables FEDBENCH_<key with '.' spelled '__'> override
    // file values, e.g. FEDBENCH_federation__rounds=20.
    void apply_env_overrides(const std::string& prefix = "FEDBENCH_");

    void set(const std::string& key, const std::string& value);
    bool has(const std::string& key) const { return values_.count(key) > 0; }

    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    int64_t get_int(const std::string& key, int64_t fallback) const;
    uint64_t get_uint(const std::string& key, uint64_t fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::vector<std::string> get_list(const std::string& key) const; // comma-separated
    std::vector<double> get_double_list(const std::string& key) const;

    // Throws naming every key that no getter touched (typo protection).
    void fail_on_unknown() const;

    // Full config echo for manifests.
    nlohmann::ordered_json echo() const;

private:
    std::map<std::string, std::string> values_;
    mutable std::set<std::string> consumed_;

    const std::string* lookup(const std::string& key) const;
};

} // namespace fedbench
