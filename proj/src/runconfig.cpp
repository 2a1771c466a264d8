#include "hicenhance/runconfig.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <stdexcept>

namespace hicenhance::cli {

namespace {

std::string trim(const std::string& s) {
    const auto* ws = " \t\r\n";
    const auto first = s.find_first_not_of(ws);
    if (first == std::string::npos) return "";
    const auto last = s.find_last_not_of(ws);
    return s.substr(first, last - first + 1);
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

}  // namespace

RunConfig::RunConfig(std::vector<std::pair<std::string, std::string>> defaults)
    : entries_(std::move(defaults)) {
    for (std::size_t i = 0; i < entries_.size(); ++i)
        for (std::size_t j = i + 1; j < entries_.size(); ++j)
            if (entries_[i].first == entries_[j].first)
                throw std::logic_error("config schema: duplicate key '" + entries_[i].first + "'");
}

std::size_t RunConfig::index_of(const std::string& key) const {
    for (std::size_t i = 0; i < entries_.size(); ++i)
        if (entries_[i].first == key) return i;
    throw std::runtime_error("config: unknown key '" + key + "'");
}

void RunConfig::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    std::string line;
    for (int lineno = 1; std::getline(in, line); ++lineno) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const std::string stripped = trim(line);
        if (stripped.empty()) continue;
        const auto eq = stripped.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": expected key=value, got '" + stripped + "'");
        const std::string key = trim(stripped.substr(0, eq));
        const std::string value = trim(stripped.substr(eq + 1));
        if (key.empty())
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": empty key");
        try {
            set(key, value);
        } catch (const std::runtime_error&) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": unknown key '" + key + "'");
        }
    }
}

void RunConfig::set(const std::string& key, const std::string& value) {
    entries_[index_of(key)].second = value;
}

const std::string& RunConfig::get_string(const std::string& key) const {
    return entries_[index_of(key)].second;
}

long long RunConfig::get_int(const std::string& key) const {
    const std::string& v = get_string(key);
    long long out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size())
        throw std::runtime_error("config: key '" + key + "' expects an integer, got '" + v + "'");
    return out;
}

double RunConfig::get_double(const std::string& key) const {
    const std::string& v = get_string(key);
    double out = 0.0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size())
        throw std::runtime_error("config: key '" + key + "' expects a number, got '" + v + "'");
    return out;
}

bool RunConfig::get_bool(const std::string& key) const {
    const std::string v = lower(get_string(key));
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw std::runtime_error("config: key '" + key + "' expects a boolean, got '" +
                             get_string(key) + "'");
}

void RunConfig::dump(std::ostream& os) const {
    for (const auto& [key, value] : entries_) os << key << '=' << value << '\n';
}

}  // namespace hicenhance::cli
