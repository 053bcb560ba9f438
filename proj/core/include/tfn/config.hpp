#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace tfn {

// Ordered `key = value` pairs. Grammar: one pair per line, '#' starts a
// comment, blank lines ignored, surrounding whitespace trimmed. Duplicate
// keys and lines without '=' are ConfigErrors.
class KeyValues {
public:
  static KeyValues parse(std::string_view text);
  static KeyValues parse_file(const std::string &path);

  void set(const std::string &key, std::string value);
  bool contains(const std::string &key) const { return values_.count(key) != 0; }
  const std::string &get(const std::string &key) const;
  const std::map<std::string, std::string> &values() const { return values_; }

  // Throws ConfigError naming the first key not in `schema`.
  void require_known(const std::set<std::string> &schema) const;

  // Overwrites/extends with `other` (other wins).
  void merge(const KeyValues &other);

  std::string to_string() const;

private:
  std::map<std::string, std::string> values_;
};

namespace parse {
std::size_t positive_int(const std::string &key, const std::string &value);
std::uint64_t uint64(const std::string &key, const std::string &value);
double real(const std::string &key, const std::string &value);
std::vector<std::size_t> int_list(const std::string &key, const std::string &value);
std::vector<std::string> name_list(const std::string &value);
} // namespace parse

// Shortest round-trip decimal form.
std::string format_real(double v);
std::string format_int_list(const std::vector<std::size_t> &v);

} // namespace tfn
