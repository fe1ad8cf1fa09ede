#pragma once

#include <cctype>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>

// Plain-text key=value configuration with INI-style [section] headers.
// Unknown keys are rejected by the consumers, not here; this layer only
// tokenizes. Values are kept as strings and converted on access.

namespace tlab {

class ConfigError : public std::runtime_error {
  public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

class Config {
  public:
    Config() = default;

    static Config parse_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config file: " + path);
        std::stringstream ss;
        ss << in.rdbuf();
        return parse_string(ss.str(), path);
    }

    static Config parse_string(const std::string& text, const std::string& origin = "<string>") {
        Config cfg;
        std::string section;
        std::istringstream in(text);
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            std::string s = strip(line);
            if (s.empty() || s[0] == '#' || s[0] == ';') continue;
            if (s.front() == '[') {
                if (s.back() != ']')
                    throw ConfigError(origin + ":" + std::to_string(lineno) + ": malformed section header");
                section = strip(s.substr(1, s.size() - 2));
                continue;
            }
            const auto eq = s.find('=');
            if (eq == std::string::npos)
                throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key=value");
            const std::string key = strip(s.substr(0, eq));
            const std::string val = strip(s.substr(eq + 1));
            if (key.empty())
                throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
            cfg.values_[section + "." + key] = val;
        }
        return cfg;
    }

    bool has(const std::string& section, const std::string& key) const {
        return values_.count(section + "." + key) > 0;
    }

    double get_double(const std::string& section, const std::string& key, double fallback) const {
        const auto it = values_.find(section + "." + key);
        if (it == values_.end()) return fallback;
        try {
            std::size_t pos = 0;
            const double v = std::stod(it->second, &pos);
            if (pos != it->second.size()) throw std::invalid_argument("trailing junk");
            return v;
        } catch (const std::exception&) {
            throw ConfigError("bad numeric value for " + section + "." + key + ": " + it->second);
        }
    }

    long get_int(const std::string& section, const std::string& key, long fallback) const {
        const auto it = values_.find(section + "." + key);
        if (it == values_.end()) return fallback;
        try {
            std::size_t pos = 0;
            const long v = std::stol(it->second, &pos);
            if (pos != it->second.size()) throw std::invalid_argument("trailing junk");
            return v;
        } catch (const std::exception&) {
            throw ConfigError("bad integer value for " + section + "." + key + ": " + it->second);
        }
    }

    std::string get_string(const std::string& section, const std::string& key,
                           const std::string& fallback) const {
        const auto it = values_.find(section + "." + key);
        return it == values_.end() ? fallback : it->second;
    }

    void set(const std::string& section, const std::string& key, const std::string& value) {
        values_[section + "." + key] = value;
    }

    const std::map<std::string, std::string>& raw() const { return values_; }

  private:
    static std::string strip(const std::string& s) {
        std::size_t b = 0, e = s.size();
        while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
        while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
        return s.substr(b, e - b);
    }

    std::map<std::string, std::string> values_;
};

}  // namespace tlab
