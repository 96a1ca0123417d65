#pragma once

#include <cstdio>
#include <filesystem>
#include <mutex>
#include <string>
#include <vector>

#include <unistd.h>

#include "paraug/csv.hpp"
#include "paraug/error.hpp"
#include "paraug/json_util.hpp"

namespace paraug {

// Append-only JSON-lines file. Each append is flushed and fsynced before returning.
class JsonLinesLog {
 public:
  explicit JsonLinesLog(std::filesystem::path path) : path_(std::move(path)) {
    if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
    drop_torn_tail();
    f_ = std::fopen(path_.c_str(), "ab");
    if (!f_) throw IoError("cannot open " + path_.string() + " for append");
  }
  ~JsonLinesLog() {
    if (f_) std::fclose(f_);
  }
  JsonLinesLog(const JsonLinesLog&) = delete;
  JsonLinesLog& operator=(const JsonLinesLog&) = delete;

  void append(const Json& row) {
    const auto line = row.dump() + "\n";
    std::lock_guard lock(mu_);
    if (std::fwrite(line.data(), 1, line.size(), f_) != line.size() || std::fflush(f_) != 0 || ::fsync(fileno(f_)) != 0)
      throw IoError("append to " + path_.string() + " failed");
  }

  const std::filesystem::path& path() const { return path_; }

 private:
  // A crash mid-append leaves a line without its newline; cut it so the next row starts clean.
  void drop_torn_tail() {
    if (!std::filesystem::exists(path_)) return;
    std::FILE* f = std::fopen(path_.c_str(), "rb");
    if (!f) throw IoError("cannot open " + path_.string());
    std::string data;
    char buf[65536];
    for (std::size_t n; (n = std::fread(buf, 1, sizeof buf, f)) > 0;) data.append(buf, n);
    std::fclose(f);
    if (data.empty() || data.back() == '\n') return;
    const auto keep = data.rfind('\n');
    std::filesystem::resize_file(path_, keep == std::string::npos ? 0 : keep + 1);
  }

  std::filesystem::path path_;
  std::FILE* f_ = nullptr;
  std::mutex mu_;
};

// Reads all rows; a torn final line (crash mid-write) is ignored.
inline std::vector<Json> read_json_lines(const std::filesystem::path& path) {
  std::vector<Json> rows;
  if (!std::filesystem::exists(path)) return rows;
  const auto lines = csv::read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    try {
      rows.push_back(Json::parse(lines[i]));
    } catch (const Json::parse_error& e) {
      if (i + 1 == lines.size()) break;
      throw ParseError(path.string() + " line " + std::to_string(i + 1) + ": " + e.what());
    }
  }
  return rows;
}

}  // namespace paraug
