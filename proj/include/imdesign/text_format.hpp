#pragma once

#include <charconv>
#include <cstdio>
#include <istream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "imdesign/errors.hpp"

// Line-oriented "key = value" text with [section] headers, '#' comments and a
// mandatory "<magic> v<N>" first line. Shared by catalogs, checkpoints and configs.

namespace imdesign::text {

struct Entry {
  std::string key;
  std::string value;
  std::size_t line = 0;
};

struct Section {
  std::string name;
  std::size_t line = 0;
  std::vector<Entry> entries;

  const Entry* find(std::string_view key) const {
    for (const auto& e : entries)
      if (e.key == key) return &e;
    return nullptr;
  }

  const Entry& require(std::string_view key) const {
    if (const Entry* e = find(key)) return *e;
    throw MalformedFile("section [" + name + "] is missing key '" + std::string(key) + "'", line);
  }
};

struct Document {
  std::vector<Entry> preamble;  // entries before the first section
  std::vector<Section> sections;
};

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

/// Shortest text that parses back to the identical double.
inline std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s, std::size_t line) {
  s = trim(s);
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || s.empty())
    throw MalformedFile("expected a number, got '" + std::string(s) + "'", line);
  return v;
}

template <class Int>
Int parse_int(std::string_view s, std::size_t line) {
  s = trim(s);
  Int v{};
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || s.empty())
    throw MalformedFile("expected an integer, got '" + std::string(s) + "'", line);
  return v;
}

inline bool parse_bool(std::string_view s, std::size_t line) {
  s = trim(s);
  if (s == "true") return true;
  if (s == "false") return false;
  throw MalformedFile("expected true or false, got '" + std::string(s) + "'", line);
}

inline std::vector<double> parse_doubles(std::string_view s, std::size_t line) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos < s.size()) {
    const auto start = s.find_first_not_of(' ', pos);
    if (start == std::string_view::npos) break;
    auto end = s.find(' ', start);
    if (end == std::string_view::npos) end = s.size();
    out.push_back(parse_double(s.substr(start, end - start), line));
    pos = end;
  }
  return out;
}

/// Parses a document. `magic` is the expected header without the version suffix.
inline Document parse(std::istream& in, std::string_view magic, int version) {
  Document doc;
  std::string raw;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    if (!header_seen) {
      const auto space = line.rfind(' ');
      if (space == std::string_view::npos || line.substr(0, space) != magic)
        throw MalformedFile("expected header '" + std::string(magic) + " v" + std::to_string(version) + "'",
                            line_no);
      const auto ver = line.substr(space + 1);
      if (ver != "v" + std::to_string(version))
        throw VersionMismatch("unsupported " + std::string(magic) + " version '" + std::string(ver) +
                              "' (expected v" + std::to_string(version) + ")");
      header_seen = true;
      continue;
    }
    if (line.front() == '[') {
      if (line.back() != ']') throw MalformedFile("unterminated section header", line_no);
      doc.sections.push_back(Section{std::string(trim(line.substr(1, line.size() - 2))), line_no, {}});
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw MalformedFile("expected 'key = value'", line_no);
    Entry e{std::string(trim(line.substr(0, eq))), std::string(trim(line.substr(eq + 1))), line_no};
    if (e.key.empty()) throw MalformedFile("empty key", line_no);
    auto& target = doc.sections.empty() ? doc.preamble : doc.sections.back().entries;
    for (const auto& prior : target)
      if (prior.key == e.key) throw MalformedFile("duplicate key '" + e.key + "'", line_no);
    target.push_back(std::move(e));
  }
  if (!header_seen) throw MalformedFile("empty file", line_no == 0 ? 1 : line_no);
  return doc;
}

inline Document parse_string(const std::string& s, std::string_view magic, int version) {
  std::istringstream in(s);
  return parse(in, magic, version);
}

}  // namespace imdesign::text
