#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "paraug/csv.hpp"
#include "paraug/error.hpp"

namespace paraug {

using Label = std::int8_t;

enum class Split { train, test };
enum class Origin { real, synthetic };

inline std::string_view to_string(Split s) { return s == Split::train ? "train" : "test"; }
inline std::string_view to_string(Origin o) { return o == Origin::real ? "real" : "synthetic"; }

inline Split parse_split(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "test") return Split::test;
  throw ParseError("unknown split '" + std::string(s) + "'");
}

inline Origin parse_origin(std::string_view s) {
  if (s == "real") return Origin::real;
  if (s == "synthetic") return Origin::synthetic;
  throw ParseError("unknown origin '" + std::string(s) + "'");
}

inline constexpr bool is_positive(Label v) { return v >= 1; }
inline constexpr bool in_alphabet(int v) { return v >= -1 && v <= 3; }

// Tag matching: "foo-" is a prefix, "-foo" a suffix, anything else a substring.
inline bool matches_tag(std::string_view name, std::string_view tag) {
  if (tag.empty()) return false;
  if (tag.back() == '-') return name.starts_with(tag);
  if (tag.front() == '-') return name.ends_with(tag);
  return name.find(tag) != std::string_view::npos;
}

struct AttributeSchema {
  std::vector<std::string> names;
  std::vector<std::string> excluded_tags{"action-", "-Others", "-Other"};

  AttributeSchema() = default;
  explicit AttributeSchema(std::vector<std::string> n) : names(std::move(n)) { validate(); }

  std::size_t size() const { return names.size(); }

  void validate() const {
    if (names.empty()) throw ValidationError("schema has no attributes");
    std::unordered_set<std::string_view> seen;
    for (const auto& n : names) {
      if (n.empty()) throw ValidationError("empty attribute name in schema");
      if (!seen.insert(n).second) throw ValidationError("duplicate attribute '" + n + "'");
    }
  }

  std::optional<std::size_t> find(std::string_view name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return i;
    return std::nullopt;
  }

  std::size_t index_of(std::string_view name) const {
    if (auto i = find(name)) return *i;
    throw ValidationError("unknown attribute '" + std::string(name) + "'");
  }

  bool is_excluded(std::string_view name) const {
    return std::any_of(excluded_tags.begin(), excluded_tags.end(),
                       [&](const std::string& t) { return matches_tag(name, t); });
  }

  bool operator==(const AttributeSchema&) const = default;
};

struct ImageRecord {
  std::string id;
  std::string path;
  Split split = Split::train;
  Origin origin = Origin::real;
  std::vector<Label> labels;
  std::optional<std::string> batch_ref;

  bool operator==(const ImageRecord&) const = default;
};

struct DatasetManifest {
  AttributeSchema schema;
  std::vector<ImageRecord> records;
  std::string dataset_name;

  bool operator==(const DatasetManifest&) const = default;
};

struct SplitStats {
  std::size_t total_train = 0;
  std::size_t total_test = 0;
  std::vector<std::size_t> per_attribute_positive_train;
  std::vector<std::size_t> per_attribute_positive_test;
};

namespace detail {
inline std::string where(const ImageRecord& r, std::string_view column) {
  return " (record '" + r.id + "', column '" + std::string(column) + "')";
}
}  // namespace detail

// Checks the synthetic label rules alone: only {-1,1,3}, exactly one 1.
inline void validate_synthetic_labels(const std::vector<Label>& labels, std::string_view id = {}) {
  int ones = 0;
  for (Label v : labels) {
    if (v == 1) ++ones;
    else if (v != -1 && v != 3)
      throw ValidationError("synthetic record '" + std::string(id) + "' carries label " + std::to_string(v));
  }
  if (ones != 1)
    throw ValidationError("synthetic record '" + std::string(id) + "' has " + std::to_string(ones) +
                          " labels equal to 1, expected exactly one");
}

inline void validate_record(const AttributeSchema& schema, const ImageRecord& r) {
  if (r.id.empty()) throw ValidationError("record with empty id");
  if (r.labels.size() != schema.size())
    throw ValidationError("length mismatch: " + std::to_string(r.labels.size()) + " labels, schema has " +
                          std::to_string(schema.size()) + detail::where(r, "labels"));
  for (std::size_t m = 0; m < r.labels.size(); ++m) {
    const int v = r.labels[m];
    if (!in_alphabet(v)) throw ValidationError("label outside alphabet: " + std::to_string(v) + detail::where(r, schema.names[m]));
    if (r.origin == Origin::real && v != 0 && v != 1 && v != 2)
      throw ValidationError("real record label " + std::to_string(v) + " not in {0,1,2}" + detail::where(r, schema.names[m]));
  }
  if (r.origin == Origin::synthetic) {
    if (r.split != Split::train) throw ValidationError("synthetic record in test split" + detail::where(r, "split"));
    validate_synthetic_labels(r.labels, r.id);
  } else if (r.batch_ref) {
    throw ValidationError("real record with batch_ref" + detail::where(r, "batch_ref"));
  }
}

inline void validate(const DatasetManifest& m) {
  m.schema.validate();
  std::unordered_set<std::string_view> ids;
  ids.reserve(m.records.size());
  for (const auto& r : m.records) {
    validate_record(m.schema, r);
    if (!ids.insert(r.id).second) throw ValidationError("duplicate record id '" + r.id + "'");
  }
}

inline constexpr std::string_view kManifestPrefix[] = {"id", "path", "split", "origin", "batch_ref"};
inline constexpr std::string_view kDatasetComment = "# dataset: ";

inline std::string manifest_header(const AttributeSchema& schema) {
  std::vector<std::string> cols(std::begin(kManifestPrefix), std::end(kManifestPrefix));
  cols.insert(cols.end(), schema.names.begin(), schema.names.end());
  return csv::join(cols);
}

inline AttributeSchema parse_schema_header(const std::string& line) {
  auto cols = csv::split(line);
  constexpr std::size_t P = std::size(kManifestPrefix);
  if (cols.size() <= P) throw ParseError("malformed header: expected " + std::to_string(P) + " prefix columns and at least one attribute");
  for (std::size_t i = 0; i < P; ++i)
    if (cols[i] != kManifestPrefix[i])
      throw ParseError("malformed header: column " + std::to_string(i + 1) + " is '" + cols[i] + "', expected '" +
                       std::string(kManifestPrefix[i]) + "'");
  AttributeSchema s;
  s.names.assign(cols.begin() + P, cols.end());
  try {
    s.validate();
  } catch (const ValidationError& e) {
    throw ParseError(std::string("malformed header: ") + e.what());
  }
  return s;
}

inline DatasetManifest parse_manifest(const std::vector<std::string>& lines, std::string default_name = {}) {
  DatasetManifest m;
  m.dataset_name = std::move(default_name);
  std::size_t i = 0;
  bool has_header = false;
  for (; i < lines.size(); ++i) {
    const auto& l = lines[i];
    if (l.starts_with(kDatasetComment)) {
      m.dataset_name = l.substr(kDatasetComment.size());
      continue;
    }
    if (l.empty() || l.front() == '#') continue;
    m.schema = parse_schema_header(l);
    has_header = true;
    ++i;
    break;
  }
  if (!has_header) throw ParseError("malformed header: file has no header line");
  const std::size_t P = std::size(kManifestPrefix);
  const std::size_t M = m.schema.size();
  for (; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    auto f = csv::split(lines[i]);
    ImageRecord r;
    r.id = f.empty() ? std::string{} : f[0];
    if (f.size() != P + M)
      throw ValidationError("length mismatch: " + std::to_string(f.size()) + " fields, expected " + std::to_string(P + M) +
                            detail::where(r, "line " + std::to_string(i + 1)));
    r.path = f[1];
    try {
      r.split = parse_split(f[2]);
      r.origin = parse_origin(f[3]);
    } catch (const ParseError& e) {
      throw ParseError(e.what() + detail::where(r, "split/origin"));
    }
    if (!f[4].empty()) r.batch_ref = f[4];
    r.labels.resize(M);
    for (std::size_t m_ = 0; m_ < M; ++m_) {
      const auto& cell = f[P + m_];
      int v = 0;
      try {
        v = csv::parse_int(cell, m.schema.names[m_]);
      } catch (const ParseError&) {
        throw ValidationError("label outside alphabet: '" + cell + "'" + detail::where(r, m.schema.names[m_]));
      }
      if (!in_alphabet(v)) throw ValidationError("label outside alphabet: " + cell + detail::where(r, m.schema.names[m_]));
      r.labels[m_] = static_cast<Label>(v);
    }
    m.records.push_back(std::move(r));
  }
  validate(m);
  return m;
}

inline DatasetManifest load_manifest(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("manifest not found: " + path.string());
  return parse_manifest(csv::read_lines(path), path.stem().string());
}

inline AttributeSchema load_schema(const std::filesystem::path& path) {
  for (const auto& l : csv::read_lines(path))
    if (!l.empty() && l.front() != '#') return parse_schema_header(l);
  throw ParseError("malformed header: " + path.string() + " has no header line");
}

inline std::string format_manifest(const DatasetManifest& m) {
  std::string out;
  if (!m.dataset_name.empty()) out.append(kDatasetComment).append(m.dataset_name).push_back('\n');
  out += manifest_header(m.schema);
  out.push_back('\n');
  std::vector<std::string> row;
  for (const auto& r : m.records) {
    row.clear();
    row.push_back(r.id);
    row.push_back(r.path);
    row.emplace_back(to_string(r.split));
    row.emplace_back(to_string(r.origin));
    row.push_back(r.batch_ref.value_or(""));
    for (Label v : r.labels) row.push_back(std::to_string(static_cast<int>(v)));
    out += csv::join(row);
    out.push_back('\n');
  }
  return out;
}

inline void save_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
  validate(m);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  csv::write_atomic(path, format_manifest(m));
}

inline SplitStats split_stats(const DatasetManifest& m) {
  const std::size_t M = m.schema.size();
  SplitStats s;
  s.per_attribute_positive_train.assign(M, 0);
  s.per_attribute_positive_test.assign(M, 0);
  for (const auto& r : m.records) {
    const bool train = r.split == Split::train;
    (train ? s.total_train : s.total_test)++;
    auto& counts = train ? s.per_attribute_positive_train : s.per_attribute_positive_test;
    for (std::size_t a = 0; a < M && a < r.labels.size(); ++a)
      if (is_positive(r.labels[a])) ++counts[a];
  }
  return s;
}

inline DatasetManifest filter_origin(const DatasetManifest& m, Origin o) {
  DatasetManifest out{m.schema, {}, m.dataset_name};
  std::copy_if(m.records.begin(), m.records.end(), std::back_inserter(out.records),
               [o](const ImageRecord& r) { return r.origin == o; });
  return out;
}

inline DatasetManifest filter_split(const DatasetManifest& m, Split s) {
  DatasetManifest out{m.schema, {}, m.dataset_name};
  std::copy_if(m.records.begin(), m.records.end(), std::back_inserter(out.records),
               [s](const ImageRecord& r) { return r.split == s; });
  return out;
}

}  // namespace paraug
