#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "reidforge/common.hpp"

namespace reidforge {

// Flat key=value configuration: one pair per line, '#' starts a comment.
// Typed getters record the effective value (default or explicit), so
// render() echoes the full configuration with all defaults materialized.
// Keys present in the file but never consumed are unknown keys and are
// rejected by ensure_all_consumed().
class KeyValueConfig {
 public:
  KeyValueConfig() = default;

  static KeyValueConfig parse_file(const std::string& path);
  static KeyValueConfig parse_string(const std::string& text,
                                     const std::string& origin = "<string>");

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const;

  std::string get_string(const std::string& key, const std::string& fallback);
  double get_double(const std::string& key, double fallback);
  int get_int(const std::string& key, int fallback);
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback);
  std::vector<Index> get_index_list(const std::string& key,
                                    const std::vector<Index>& fallback);

  void ensure_all_consumed() const;

  // key=value lines, sorted by key, covering every consumed key.
  std::string render() const;

 private:
  std::string origin_ = "<empty>";
  std::map<std::string, std::string> values_;
  std::set<std::string> consumed_;
  std::map<std::string, std::string> effective_;
};

}  // namespace reidforge
