#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace spax {

// Flat "key = value" text with optional [section] headers and '#' comments.
// Section names prefix the keys as "section.key". Order-preserving.
struct KvFile {
  std::vector<std::pair<std::string, std::string>> entries;

  bool has(const std::string& key) const;
  std::string get(const std::string& key, const std::string& fallback = "") const;
  void set(const std::string& key, std::string value);
};

KvFile parse_kv(const std::string& text);

std::string kv_trim(std::string_view s);
std::size_t parse_size(const std::string& value, const std::string& key);
double parse_real(const std::string& value, const std::string& key);
bool parse_bool(const std::string& value, const std::string& key);
std::vector<std::size_t> parse_size_list(const std::string& value,
                                         const std::string& key);

}  // namespace spax
