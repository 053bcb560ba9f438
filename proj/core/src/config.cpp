#include "tfn/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "tfn/error.hpp"

namespace tfn {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos)
    return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

} // namespace

KeyValues KeyValues::parse(std::string_view text) {
  KeyValues kv;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos)
      line = line.substr(0, hash);
    const std::string content = trim(line);
    if (content.empty())
      continue;
    const auto eq = content.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
    const std::string key = trim(std::string_view(content).substr(0, eq));
    const std::string value = trim(std::string_view(content).substr(eq + 1));
    if (key.empty())
      throw ConfigError("line " + std::to_string(line_no) + ": empty key");
    if (kv.contains(key))
      throw ConfigError("line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
    kv.values_[key] = value;
  }
  return kv;
}

KeyValues KeyValues::parse_file(const std::string &path) {
  std::ifstream in(path);
  if (!in)
    throw ConfigError("cannot read config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

void KeyValues::set(const std::string &key, std::string value) {
  values_[key] = std::move(value);
}

const std::string &KeyValues::get(const std::string &key) const {
  const auto it = values_.find(key);
  if (it == values_.end())
    throw ConfigError("missing config key '" + key + "'");
  return it->second;
}

void KeyValues::require_known(const std::set<std::string> &schema) const {
  for (const auto &[key, value] : values_)
    if (!schema.count(key))
      throw ConfigError("unknown config key '" + key + "'");
}

void KeyValues::merge(const KeyValues &other) {
  for (const auto &[key, value] : other.values_)
    values_[key] = value;
}

std::string KeyValues::to_string() const {
  std::string out;
  for (const auto &[key, value] : values_)
    out += key + " = " + value + "\n";
  return out;
}

namespace parse {

std::uint64_t uint64(const std::string &key, const std::string &value) {
  std::uint64_t v = 0;
  const auto *end = value.data() + value.size();
  const auto r = std::from_chars(value.data(), end, v);
  if (r.ec != std::errc() || r.ptr != end)
    throw ConfigError("'" + key + "' expects a non-negative integer, got '" + value + "'");
  return v;
}

std::size_t positive_int(const std::string &key, const std::string &value) {
  const auto v = uint64(key, value);
  if (v == 0)
    throw ConfigError("'" + key + "' must be positive");
  return static_cast<std::size_t>(v);
}

double real(const std::string &key, const std::string &value) {
  double v = 0;
  const auto *end = value.data() + value.size();
  const auto r = std::from_chars(value.data(), end, v);
  if (r.ec != std::errc() || r.ptr != end)
    throw ConfigError("'" + key + "' expects a number, got '" + value + "'");
  return v;
}

std::vector<std::size_t> int_list(const std::string &key, const std::string &value) {
  std::vector<std::size_t> out;
  for (const auto &item : name_list(value))
    out.push_back(positive_int(key, item));
  if (out.empty())
    throw ConfigError("'" + key + "' expects a comma-separated list");
  return out;
}

std::vector<std::string> name_list(const std::string &value) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= value.size()) {
    const auto comma = value.find(',', pos);
    const std::string item = trim(std::string_view(value).substr(
        pos, comma == std::string::npos ? std::string::npos : comma - pos));
    if (!item.empty())
      out.push_back(item);
    if (comma == std::string::npos)
      break;
    pos = comma + 1;
  }
  return out;
}

} // namespace parse

std::string format_real(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string format_int_list(const std::vector<std::size_t> &v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i)
    out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

} // namespace tfn
