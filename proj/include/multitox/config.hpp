#ifndef MULTITOX_CONFIG_HPP
#define MULTITOX_CONFIG_HPP

#include <cstdint>
#include <map>
#include <string>

namespace multitox {

// Flat key-value run configuration.  File format: one "key value" per line,
// '#' comments, blank lines ignored; the value is the rest of the line.
class Config {
 public:
  Config() = default;
  static Config from_file(const std::string& path);

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const;

  std::string get_str(const std::string& key, const std::string& fallback) const;
  std::string require_str(const std::string& key) const;
  long get_long(const std::string& key, long fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::uint64_t require_u64(const std::string& key) const;

  const std::map<std::string, std::string>& entries() const { return kv_; }

 private:
  std::map<std::string, std::string> kv_;
};

}  // namespace multitox

#endif
