#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace hrg {

/// Flat key=value configuration. Lines starting with '#' are comments; later
/// assignments override earlier ones.
class Config {
 public:
  static Config parse(const std::string& text, const std::string& origin = "<text>");
  static Config load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  void merge(const Config& overrides);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  std::optional<std::string> find(const std::string& key) const;

  std::string get(const std::string& key, const std::string& fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<long long> get_ints(const std::string& key, const std::vector<long long>& fallback) const;

  /// Sorted "key=value" lines.
  std::string to_text() const;
  void save(const std::filesystem::path& path) const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace hrg
