#include "apde/config.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>

namespace apde {

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}

}  // namespace

Config Config::from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path.string());
    Config cfg;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        const std::string t = trim(line);
        if (t.empty()) continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(path.string() + ":" + std::to_string(lineno) +
                              ": expected key = value, got '" + t + "'");
        }
        const std::string key = trim(t.substr(0, eq));
        const std::string value = trim(t.substr(eq + 1));
        if (key.empty()) {
            throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": empty key");
        }
        cfg.kv_[key] = value;
    }
    return cfg;
}

void Config::apply_override(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw ConfigError("override must look like key=value, got '" + assignment + "'");
    }
    kv_[trim(assignment.substr(0, eq))] = trim(assignment.substr(eq + 1));
}

Config Config::resolved_against(const std::map<std::string, std::string>& defaults) const {
    for (const auto& [key, value] : kv_) {
        if (defaults.count(key) == 0) {
            std::string known;
            for (const auto& [k, v] : defaults) {
                if (!known.empty()) known += ", ";
                known += k;
            }
            throw ConfigError("unknown config key '" + key + "' (known keys: " + known + ")");
        }
    }
    Config out;
    out.kv_ = defaults;
    for (const auto& [key, value] : kv_) out.kv_[key] = value;
    return out;
}

std::string Config::get_string(const std::string& key) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) throw ConfigError("missing config key '" + key + "'");
    return it->second;
}

double Config::get_double(const std::string& key) const {
    const std::string v = get_string(key);
    try {
        std::size_t consumed = 0;
        const double x = std::stod(v, &consumed);
        if (consumed != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "' is not a number: '" + v + "'");
    }
}

std::size_t Config::get_size(const std::string& key) const {
    const double x = get_double(key);
    if (x < 0 || x != std::floor(x)) {
        throw ConfigError("config key '" + key + "' must be a nonnegative integer");
    }
    return static_cast<std::size_t>(x);
}

bool Config::get_bool(const std::string& key) const {
    std::string v = get_string(key);
    std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError("config key '" + key + "' is not a boolean: '" + v + "'");
}

double Config::get_positive(const std::string& key) const {
    const double x = get_double(key);
    if (!(x > 0.0)) throw ConfigError("config key '" + key + "' must be positive");
    return x;
}

}  // namespace apde
