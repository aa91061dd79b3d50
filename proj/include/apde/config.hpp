#pragma once

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace apde {

class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Flat key = value configuration: defaults come from the experiment schema,
/// then an optional file, then command-line overrides. Keys outside the
/// schema are rejected with the offending name.
class Config {
public:
    Config() = default;

    static Config from_file(const std::filesystem::path& path);

    /// Parses "key=value".
    void apply_override(const std::string& assignment);
    void set(const std::string& key, const std::string& value) { kv_[key] = value; }

    bool has(const std::string& key) const { return kv_.count(key) > 0; }
    const std::map<std::string, std::string>& entries() const { return kv_; }

    /// Overlays this config onto `defaults`; every key must exist there.
    Config resolved_against(const std::map<std::string, std::string>& defaults) const;

    std::string get_string(const std::string& key) const;
    double get_double(const std::string& key) const;
    std::size_t get_size(const std::string& key) const;
    bool get_bool(const std::string& key) const;
    double get_positive(const std::string& key) const;

private:
    std::map<std::string, std::string> kv_;
};

}  // namespace apde
