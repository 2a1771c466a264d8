#pragma once
// Key=value run configuration with a fixed per-command schema. Values merge
// in precedence order: built-in defaults, then a config file, then explicit
// command-line flags. Every consumed key is validated against the schema, so
// an unknown key is rejected by name instead of silently falling back to a
// default.

#include <cstddef>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

namespace hicenhance::cli {

class RunConfig {
public:
    /// The schema is the ordered list of known keys with their defaults.
    explicit RunConfig(std::vector<std::pair<std::string, std::string>> defaults);

    /// Merge key=value lines from a file. '#' starts a comment and blank
    /// lines are skipped; whitespace around keys and values is trimmed.
    /// Unknown keys or lines without '=' throw with the path and line number.
    void load_file(const std::string& path);

    /// Override one key (used for flags given explicitly on the command
    /// line). Throws if the key is not in the schema.
    void set(const std::string& key, const std::string& value);

    const std::string& get_string(const std::string& key) const;
    long long get_int(const std::string& key) const;
    double get_double(const std::string& key) const;
    /// Accepts true/false/1/0/yes/no (case-insensitive).
    bool get_bool(const std::string& key) const;

    /// Effective configuration as key=value lines in schema order.
    void dump(std::ostream& os) const;

private:
    std::size_t index_of(const std::string& key) const;  // throws on unknown
    std::vector<std::pair<std::string, std::string>> entries_;
};

}  // namespace hicenhance::cli
