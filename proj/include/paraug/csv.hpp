#pragma once

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "paraug/error.hpp"

namespace paraug::csv {

// RFC-4180 style split of a single line; quoted fields may contain commas
// and doubled quotes. Embedded newlines are not supported.
inline std::vector<std::string> split(std::string_view line, char delim = ',') {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == delim) {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!line.empty() && line.back() == '\r' && !quoted && !cur.empty()) cur.pop_back();
  out.push_back(std::move(cur));
  return out;
}

inline std::string escape(std::string_view field) {
  if (field.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

template <typename Range>
std::string join(const Range& fields, char delim = ',') {
  std::string out;
  bool first = true;
  for (const auto& f : fields) {
    if (!first) out.push_back(delim);
    out += escape(f);
    first = false;
  }
  return out;
}

inline std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

// Writes via a sibling temp file and renames so readers never see a torn file.
inline void write_atomic(const std::filesystem::path& path, std::string_view content) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw IoError("short write on " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot replace " + path.string() + ": " + ec.message());
}

inline int parse_int(std::string_view s, std::string_view what) {
  int v = 0;
  const auto* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc{} || p != end) throw ParseError("not an integer in " + std::string(what) + ": '" + std::string(s) + "'");
  return v;
}

inline long long parse_count(std::string_view s, std::string_view what) {
  long long v = 0;
  const auto* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc{} || p != end || v < 0) throw ParseError("not a count in " + std::string(what) + ": '" + std::string(s) + "'");
  return v;
}

inline double parse_double(std::string_view s, std::string_view what) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc{} || p != end) throw ParseError("not a number in " + std::string(what) + ": '" + std::string(s) + "'");
  return v;
}

// Fixed two-decimal rendering used at report boundaries.
inline std::string fixed2(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed, 2);
  return std::string(buf, p);
}

// Shortest round-trip rendering.
inline std::string shortest(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

// Header -> column index lookup with a readable error for missing columns.
class Header {
 public:
  explicit Header(std::vector<std::string> cols) : cols_(std::move(cols)) {}

  std::size_t index(std::string_view name) const {
    for (std::size_t i = 0; i < cols_.size(); ++i)
      if (cols_[i] == name) return i;
    throw ParseError("missing column '" + std::string(name) + "'");
  }
  bool has(std::string_view name) const {
    for (const auto& c : cols_)
      if (c == name) return true;
    return false;
  }
  std::size_t size() const { return cols_.size(); }
  const std::vector<std::string>& columns() const { return cols_; }

 private:
  std::vector<std::string> cols_;
};

}  // namespace paraug::csv
