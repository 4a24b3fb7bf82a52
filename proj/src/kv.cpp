#include "spax/kv.hpp"

#include <sstream>
#include <stdexcept>

#include "spax/error.hpp"

namespace spax {

std::string kv_trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

bool KvFile::has(const std::string& key) const {
  for (const auto& [k, v] : entries)
    if (k == key) return true;
  return false;
}

std::string KvFile::get(const std::string& key,
                        const std::string& fallback) const {
  for (const auto& [k, v] : entries)
    if (k == key) return v;
  return fallback;
}

void KvFile::set(const std::string& key, std::string value) {
  for (auto& [k, v] : entries) {
    if (k == key) {
      v = std::move(value);
      return;
    }
  }
  entries.emplace_back(key, std::move(value));
}

KvFile parse_kv(const std::string& text) {
  KvFile out;
  std::istringstream in(text);
  std::string line;
  std::string section;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const std::string t = kv_trim(line);
    if (t.empty()) continue;
    if (t.front() == '[') {
      if (t.back() != ']')
        throw FormatError("bad section header at line " +
                          std::to_string(lineno));
      section = kv_trim(t.substr(1, t.size() - 2));
      continue;
    }
    const std::size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw FormatError("expected key = value at line " +
                        std::to_string(lineno));
    std::string key = kv_trim(t.substr(0, eq));
    std::string value = kv_trim(t.substr(eq + 1));
    if (key.empty())
      throw FormatError("empty key at line " + std::to_string(lineno));
    if (!section.empty()) key = section + "." + key;
    out.set(key, std::move(value));
  }
  return out;
}

std::size_t parse_size(const std::string& value, const std::string& key) {
  try {
    const long long v = std::stoll(value);
    if (v < 0) throw std::invalid_argument("negative");
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw FormatError("bad integer for " + key + ": '" + value + "'");
  }
}

double parse_real(const std::string& value, const std::string& key) {
  try {
    return std::stod(value);
  } catch (const std::exception&) {
    throw FormatError("bad number for " + key + ": '" + value + "'");
  }
}

bool parse_bool(const std::string& value, const std::string& key) {
  if (value == "true" || value == "1" || value == "yes" || value == "on")
    return true;
  if (value == "false" || value == "0" || value == "no" || value == "off")
    return false;
  throw FormatError("bad boolean for " + key + ": '" + value + "'");
}

std::vector<std::size_t> parse_size_list(const std::string& value,
                                         const std::string& key) {
  std::vector<std::size_t> out;
  std::string item;
  std::istringstream in(value);
  while (std::getline(in, item, ',')) {
    const std::string t = kv_trim(item);
    if (t.empty()) continue;
    out.push_back(parse_size(t, key));
  }
  return out;
}

}  // namespace spax
