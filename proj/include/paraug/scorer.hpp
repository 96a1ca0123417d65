#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "paraug/csv.hpp"
#include "paraug/dataset.hpp"
#include "paraug/error.hpp"
#include "paraug/metrics.hpp"

namespace paraug {

struct CriteriaThresholds {
  double low_train_fraction = 0.03;
  double test_high = 80;
  double test_low = 50;
  double drop_small = 15;
  double drop_big = 30;

  void validate() const {
    if (!(low_train_fraction > 0 && low_train_fraction < 1)) throw ValidationError("low_train_fraction must be in (0,1)");
    if (!(test_low < test_high)) throw ValidationError("test_low must be below test_high");
    if (!(drop_small < drop_big)) throw ValidationError("drop_small must be below drop_big");
  }
};

struct ScoreEvidence {
  double train_f1 = 0, test_f1 = 0;
  std::size_t positive_train_count = 0, total_train = 0;
};

struct AttributeScore {
  std::string attribute;
  int low_train_score = 0;
  int test_score = 0;
  int drop_score = 0;
  int total = 0;
  ScoreEvidence evidence;
};

inline AttributeScore score_attribute(std::string attribute, double train_f1, double test_f1, std::size_t pos_train,
                                      std::size_t total_train, const CriteriaThresholds& t = {}) {
  if (!std::isfinite(train_f1) || !std::isfinite(test_f1))
    throw ValidationError("non-finite F1 for attribute '" + attribute + "'");
  if (total_train == 0) throw ValidationError("total_train must be positive");
  if (pos_train > total_train) throw ValidationError("positive count exceeds total for '" + attribute + "'");
  AttributeScore s;
  s.attribute = std::move(attribute);
  s.evidence = {train_f1, test_f1, pos_train, total_train};
  s.low_train_score = double(pos_train) / double(total_train) < t.low_train_fraction ? 0 : 2;
  s.test_score = test_f1 > t.test_high ? 2 : (test_f1 >= t.test_low ? 1 : 0);
  const double drop = train_f1 - test_f1;
  s.drop_score = drop < t.drop_small ? 2 : (drop <= t.drop_big ? 1 : 0);
  s.total = s.low_train_score + s.test_score + s.drop_score;
  return s;
}

struct ScorerInputRow {
  std::string attribute;
  double train_f1 = 0, test_f1 = 0;
  std::size_t pos_train = 0, total_train = 0;
};

inline std::vector<ScorerInputRow> load_scorer_input(const std::filesystem::path& path) {
  auto lines = csv::read_lines(path);
  if (lines.empty()) throw ParseError("empty scorer input " + path.string());
  csv::Header h(csv::split(lines[0]));
  const auto ia = h.index("attribute"), itr = h.index("train_f1"), ite = h.index("test_f1");
  const bool has_counts = h.has("pos_train") && h.has("total_train");
  std::vector<ScorerInputRow> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    auto f = csv::split(lines[i]);
    if (f.size() != h.size()) throw ParseError(path.string() + " line " + std::to_string(i + 1) + ": wrong field count");
    ScorerInputRow r{f[ia], csv::parse_double(f[itr], "train_f1"), csv::parse_double(f[ite], "test_f1")};
    if (has_counts) {
      r.pos_train = std::size_t(csv::parse_count(f[h.index("pos_train")], "pos_train"));
      r.total_train = std::size_t(csv::parse_count(f[h.index("total_train")], "total_train"));
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

// Builds scorer input from separate train/test metric reports, with counts taken from a manifest.
inline std::vector<ScorerInputRow> scorer_input_from_reports(const std::vector<MetricsRow>& train,
                                                             const std::vector<MetricsRow>& test,
                                                             const DatasetManifest& manifest) {
  const auto st = split_stats(manifest);
  std::map<std::string, double, std::less<>> test_f1;
  for (const auto& r : test) test_f1[r.attribute] = r.f1;
  std::vector<ScorerInputRow> rows;
  for (const auto& r : train) {
    auto it = test_f1.find(r.attribute);
    if (it == test_f1.end()) throw ValidationError("attribute '" + r.attribute + "' missing from test metrics");
    const auto a = manifest.schema.index_of(r.attribute);
    rows.push_back({r.attribute, r.f1, it->second, st.per_attribute_positive_train[a], st.total_train});
  }
  return rows;
}

// Fills counts from the manifest for rows whose input had none.
inline void attach_counts(std::vector<ScorerInputRow>& rows, const DatasetManifest& manifest) {
  const auto st = split_stats(manifest);
  for (auto& r : rows) {
    r.pos_train = st.per_attribute_positive_train[manifest.schema.index_of(r.attribute)];
    r.total_train = st.total_train;
  }
}

inline std::vector<AttributeScore> score_all(const std::vector<ScorerInputRow>& rows, const CriteriaThresholds& t = {}) {
  t.validate();
  std::vector<AttributeScore> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(score_attribute(r.attribute, r.train_f1, r.test_f1, r.pos_train, r.total_train, t));
  return out;
}

inline std::string format_scores(const std::vector<AttributeScore>& scores) {
  std::string out = "attribute,low,test,drop,total\n";
  for (const auto& s : scores)
    out += csv::escape(s.attribute) + "," + std::to_string(s.low_train_score) + "," + std::to_string(s.test_score) + "," +
           std::to_string(s.drop_score) + "," + std::to_string(s.total) + "\n";
  return out;
}

struct RankedAttribute {
  std::string attribute;
  int total = 0;
  std::size_t index = 0;  // position in the input (schema order)
};

struct RankingReport {
  std::string dataset;
  std::vector<RankedAttribute> ranked;  // full ordering after exclusion
  std::size_t top_k = 0;
  std::vector<std::string> excluded;

  std::vector<RankedAttribute> top() const {
    return {ranked.begin(), ranked.begin() + std::ptrdiff_t(std::min(top_k, ranked.size()))};
  }
};

inline RankingReport rank_attributes(const std::vector<AttributeScore>& scores, const std::vector<std::string>& exclude,
                                     std::size_t k, std::string dataset = {}) {
  RankingReport rep;
  rep.dataset = std::move(dataset);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const auto& name = scores[i].attribute;
    const bool ex = std::any_of(exclude.begin(), exclude.end(), [&](const std::string& t) { return matches_tag(name, t); });
    if (ex) rep.excluded.push_back(name);
    else rep.ranked.push_back({name, scores[i].total, i});
  }
  if (k > rep.ranked.size())
    throw ValidationError("k=" + std::to_string(k) + " exceeds " + std::to_string(rep.ranked.size()) + " remaining attributes");
  std::stable_sort(rep.ranked.begin(), rep.ranked.end(),
                   [](const RankedAttribute& a, const RankedAttribute& b) { return a.total < b.total; });
  rep.top_k = k;
  return rep;
}

inline std::string format_ranking(const RankingReport& r) {
  std::string out = "rank,attribute,total\n";
  const auto top = r.top();
  for (std::size_t i = 0; i < top.size(); ++i)
    out += std::to_string(i + 1) + "," + csv::escape(top[i].attribute) + "," + std::to_string(top[i].total) + "\n";
  return out;
}

struct Appearance {
  std::string attribute;
  std::size_t count = 0;
};

// Attributes are identified by exact name; first-seen order across reports is the tie-break.
inline std::vector<Appearance> aggregate_cross_dataset(const std::vector<RankingReport>& reports, std::size_t k) {
  if (reports.empty()) throw ValidationError("aggregate_cross_dataset needs at least one report");
  std::vector<Appearance> out;
  std::map<std::string, std::size_t, std::less<>> slot;
  auto touch = [&](const std::string& name) -> Appearance& {
    auto [it, fresh] = slot.try_emplace(name, out.size());
    if (fresh) out.push_back({name, 0});
    return out[it->second];
  };
  for (const auto& rep : reports) {
    std::vector<RankedAttribute> by_index = rep.ranked;
    std::sort(by_index.begin(), by_index.end(), [](auto& a, auto& b) { return a.index < b.index; });
    for (const auto& a : by_index) touch(a.attribute);
    for (std::size_t i = 0; i < std::min(k, rep.ranked.size()); ++i) touch(rep.ranked[i].attribute).count++;
  }
  std::stable_sort(out.begin(), out.end(), [](const Appearance& a, const Appearance& b) { return a.count > b.count; });
  return out;
}

// Compares a reference top-k list to ours band by band: bands fully inside the cut must match as sets;
// the band straddling the cut must contain every reference item at that score.
struct BandCheck {
  bool ok = true;
  std::vector<std::string> problems;
};

inline BandCheck check_bands(const RankingReport& ours, const std::vector<std::string>& reference) {
  BandCheck bc;
  std::map<std::string, int, std::less<>> total_of;
  for (const auto& r : ours.ranked) total_of[r.attribute] = r.total;
  std::map<int, std::vector<std::string>> ref_bands, our_bands, full_bands;
  for (const auto& n : reference) {
    auto it = total_of.find(n);
    if (it == total_of.end()) {
      bc.ok = false;
      bc.problems.push_back("reference attribute '" + n + "' is excluded or unknown");
      continue;
    }
    ref_bands[it->second].push_back(n);
  }
  for (const auto& r : ours.ranked) full_bands[r.total].push_back(r.attribute);
  const auto k = std::min(reference.size(), ours.ranked.size());
  for (std::size_t i = 0; i < k; ++i) our_bands[ours.ranked[i].total].push_back(ours.ranked[i].attribute);
  const int cut = k ? ours.ranked[k - 1].total : 0;
  for (auto& [score, names] : our_bands) {
    auto ref = ref_bands[score];
    std::sort(ref.begin(), ref.end());
    if (score < cut) {
      auto mine = names;
      std::sort(mine.begin(), mine.end());
      if (mine != ref) {
        bc.ok = false;
        bc.problems.push_back("band " + std::to_string(score) + " differs");
      }
    } else {
      auto full = full_bands[score];
      std::sort(full.begin(), full.end());
      if (!std::includes(full.begin(), full.end(), ref.begin(), ref.end())) {
        bc.ok = false;
        bc.problems.push_back("cut band " + std::to_string(score) + " misses reference items");
      }
      if (ref.size() != names.size()) {
        bc.ok = false;
        bc.problems.push_back("cut band " + std::to_string(score) + " count " + std::to_string(ref.size()) + " vs " +
                              std::to_string(names.size()));
      }
    }
  }
  for (const auto& [score, names] : ref_bands)
    if (score > cut) {
      bc.ok = false;
      bc.problems.push_back("reference lists score " + std::to_string(score) + " above our cut " + std::to_string(cut));
    }
  return bc;
}

}  // namespace paraug
