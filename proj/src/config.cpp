#include "fedbench/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

extern char** environ;

namespace fedbench {

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}

} // namespace

KeyValueConfig KeyValueConfig::from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return from_string(buf.str());
}

KeyValueConfig KeyValueConfig::from_string(const std::string& text) {
    KeyValueConfig cfg;
    std::istringstream in(text);
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string stripped = trim(line);
        if (stripped.empty() || stripped[0] == '#') continue;
        const auto eq = stripped.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(line_no) + " is not key=value: " +
                              stripped);
        const std::string key = trim(stripped.substr(0, eq));
        if (key.empty()) throw ConfigError("config line " + std::to_string(line_no) + " has an empty key");
        cfg.values_[key] = trim(stripped.substr(eq + 1));
    }
    return cfg;
}

void KeyValueConfig::apply_env_overrides(const std::string& prefix) {
    for (char** env = environ; *env; ++env) {
        const std::string entry(*env);
        if (entry.rfind(prefix, 0) != 0) continue;
        const auto eq = entry.find('=');
        if (eq == std::string::npos) continue;
        std::string key = entry.substr(prefix.size(), eq - prefix.size());
        size_t pos;
        while ((pos = key.find("__")) != std::string::npos) key.replace(pos, 2, ".");
        values_[key] = entry.substr(eq + 1);
    }
}

void KeyValueConfig::set(const std::string& key, const std::string& value) { values_[key] = value; }

const std::string* KeyValueConfig::lookup(const std::string& key) const {
    consumed_.insert(key);
    const auto it = values_.find(key);
    return it == values_.end() ? nullptr : &it->second;
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const {
    const std::string* v = lookup(key);
    return v ? *v : fallback;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
    const std::string* v = lookup(key);
    if (!v) return fallback;
    try {
        size_t used = 0;
        const double parsed = std::stod(*v, &used);
        if (used != v->size()) throw std::invalid_argument("");
        return parsed;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': expected a number, got '" + *v + "'");
    }
}

int64_t KeyValueConfig::get_int(const std::string& key, int64_t fallback) const {
    const std::string* v = lookup(key);
    if (!v) return fallback;
    try {
        size_t used = 0;
        const int64_t parsed = std::stoll(*v, &used);
        if (used != v->size()) throw std::invalid_argument("");
        return parsed;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': expected an integer, got '" + *v + "'");
    }
}

uint64_t KeyValueConfig::get_uint(const std::string& key, uint64_t fallback) const {
    const int64_t v = get_int(key, static_cast<int64_t>(fallback));
    if (v < 0) throw ConfigError("config key '" + key + "': must be nonnegative");
    return static_cast<uint64_t>(v);
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
    const std::string* v = lookup(key);
    if (!v) return fallback;
    if (*v == "1" || *v == "true" || *v == "yes" || *v == "on") return true;
    if (*v == "0" || *v == "false" || *v == "no" || *v == "off") return false;
    throw ConfigError("config key '" + key + "': expected a boolean, got '" + *v + "'");
}

std::vector<std::string> KeyValueConfig::get_list(const std::string& key) const {
    const std::string* v = lookup(key);
    std::vector<std::string> out;
    if (!v) return out;
    std::istringstream in(*v);
    std::string item;
    while (std::getline(in, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::vector<double> KeyValueConfig::get_double_list(const std::string& key) const {
    std::vector<double> out;
    for (const std::string& item : get_list(key)) {
        try {
            out.push_back(std::stod(item));
        } catch (const std::exception&) {
            throw ConfigError("config key '" + key + "': expected numbers, got '" + item + "'");
        }
    }
    return out;
}

void KeyValueConfig::fail_on_unknown() const {
    std::string unknown;
    for (const auto& [key, value] : values_)
        if (!consumed_.count(key)) unknown += (unknown.empty() ? "" : ", ") + key;
    if (!unknown.empty()) throw ConfigError("unknown config key(s): " + unknown);
}

nlohmann::ordered_json KeyValueConfig::echo() const {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (const auto& [key, value] : values_) j[key] = value;
    return j;
}

} // namespace fedbench
