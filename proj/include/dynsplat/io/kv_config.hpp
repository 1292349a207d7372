#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace dynsplat {

/// Flat `key = value` text. `#` starts a comment; blank lines are ignored;
/// later assignments override earlier ones.
class KeyValueConfig {
public:
    static KeyValueConfig parse(const std::string& text, const std::string& source = "<string>");
    static KeyValueConfig load(const std::filesystem::path& path);

    bool contains(const std::string& key) const { return values_.count(key) != 0; }
    void set(const std::string& key, const std::string& value) { values_[key] = value; }
    const std::map<std::string, std::string>& values() const { return values_; }

    // Typed lookups mark the key as used and return `fallback` when absent.
    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    long long get_int(const std::string& key, long long fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;

    /// Keys never looked up, in sorted order.
    std::vector<std::string> unused_keys() const;
    /// Throws ConfigError listing every key no lookup consumed.
    void require_all_used() const;

    std::string to_string() const;

private:
    std::string source_;
    std::map<std::string, std::string> values_;
    mutable std::set<std::string> used_;
};

} // namespace dynsplat
