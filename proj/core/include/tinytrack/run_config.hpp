#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>

namespace tinytrack {

/// Key-value run configuration: `key = value` lines, '#' comments. Flag
/// overrides land on top of the file; unknown keys are rejected against the
/// subcommand's declared key set, and the effective configuration is echoed
/// into every output directory so a run can be reproduced from its artifacts.
class RunConfig {
 public:
  RunConfig() = default;

  static RunConfig from_file(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value) { kv_[key] = value; }
  bool has(const std::string& key) const { return kv_.count(key) > 0; }

  std::string str(const std::string& key, const std::string& fallback) const;
  double num(const std::string& key, double fallback) const;
  int integer(const std::string& key, int fallback) const;
  std::uint64_t seed(const std::string& key, std::uint64_t fallback) const;
  bool flag(const std::string& key, bool fallback) const;

  /// Throws std::invalid_argument naming every key outside `allowed`.
  void require_known(const std::set<std::string>& allowed) const;

  /// Writes the effective config (sorted keys) to `dir`/config_echo.txt.
  void write_echo(const std::filesystem::path& dir) const;

  const std::map<std::string, std::string>& entries() const { return kv_; }

 private:
  std::map<std::string, std::string> kv_;
};

}  // namespace tinytrack
