#include "multitox/config.hpp"

#include <fstream>
#include <stdexcept>

#include "multitox/errors.hpp"

namespace multitox {

Config Config::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  Config cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::size_t start = line.find_first_not_of(" \t");
    if (start == std::string::npos || line[start] == '#') continue;
    std::size_t sep = line.find_first_of(" \t", start);
    if (sep == std::string::npos) {
      throw ConfigError("config " + path + ":" + std::to_string(lineno) +
                        ": expected 'key value'");
    }
    std::string key = line.substr(start, sep - start);
    std::size_t vstart = line.find_first_not_of(" \t", sep);
    if (vstart == std::string::npos) {
      throw ConfigError("config " + path + ":" + std::to_string(lineno) +
                        ": missing value for '" + key + "'");
    }
    std::string value = line.substr(vstart);
    while (!value.empty() && (value.back() == ' ' || value.back() == '\t')) {
      value.pop_back();
    }
    cfg.kv_[key] = value;
  }
  return cfg;
}

void Config::set(const std::string& key, const std::string& value) {
  kv_[key] = value;
}

bool Config::has(const std::string& key) const { return kv_.count(key) > 0; }

std::string Config::get_str(const std::string& key,
                            const std::string& fallback) const {
  auto it = kv_.find(key);
  return it == kv_.end() ? fallback : it->second;
}

std::string Config::require_str(const std::string& key) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) {
    throw ConfigError("missing required config key '" + key + "'");
  }
  return it->second;
}

long Config::get_long(const std::string& key, long fallback) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return fallback;
  try {
    return std::stol(it->second);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' is not an integer: " +
                      it->second);
  }
}

double Config::get_double(const std::string& key, double fallback) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return fallback;
  try {
    return std::stod(it->second);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' is not a number: " +
                      it->second);
  }
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return fallback;
  if (it->second == "1" || it->second == "true") return true;
  if (it->second == "0" || it->second == "false") return false;
  throw ConfigError("config key '" + key + "' is not a boolean: " +
                    it->second);
}

std::uint64_t Config::require_u64(const std::string& key) const {
  const std::string v = require_str(key);
  try {
    return std::stoull(v);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' is not an unsigned integer: " +
                      v);
  }
}

}  // namespace multitox
