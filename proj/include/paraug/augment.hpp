#pragma once

#include <algorithm>
#include <filesystem>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include "paraug/dataset.hpp"
#include "paraug/json_util.hpp"
#include "paraug/orchestrator.hpp"
#include "paraug/prompt.hpp"

namespace paraug {

inline std::vector<Label> annotate_synthetic(const PromptSpec& spec, const AttributeSchema& schema) {
  std::vector<Label> labels(schema.size(), Label{-1});
  for (const auto& a : implied_attributes(spec)) {
    const auto i = schema.find(a);
    if (!i) throw ValidationError("prompt implies attribute '" + a + "' which is not in the schema");
    labels[*i] = 3;
  }
  labels[schema.index_of(spec.target_attribute)] = 1;
  return labels;
}

struct DiscardList {
  std::string batch;
  std::set<std::size_t> rejected;
  bool operator==(const DiscardList&) const = default;
};

inline Json to_json(const DiscardList& d) {
  return Json{{"batch", d.batch}, {"rejected", std::vector<std::size_t>(d.rejected.begin(), d.rejected.end())}};
}

inline std::string format_discards(const DiscardList& d) { return to_json(d).dump() + "\n"; }

inline DiscardList discards_from_json(const Json& j) {
  DiscardList d;
  try {
    j.at("batch").get_to(d.batch);
    for (const auto& v : j.at("rejected")) {
      if (!v.is_number_unsigned()) throw ParseError("discard list: rejected index " + v.dump() + " is not a non-negative integer");
      d.rejected.insert(v.get<std::size_t>());
    }
  } catch (const Json::exception& e) {
    throw ParseError(std::string("discard list: ") + e.what());
  }
  return d;
}

inline DiscardList load_discards(const std::filesystem::path& p) { return discards_from_json(read_json_file(p)); }

inline std::vector<std::size_t> apply_discards(const BatchLedger& ledger, const DiscardList& d) {
  if (d.batch != ledger.plan.batch_id)
    throw ValidationError("discard list for batch '" + d.batch + "' applied to batch '" + ledger.plan.batch_id + "'");
  const auto range = std::max(ledger.plan.candidates(), ledger.rows.empty() ? 0 : ledger.rows.rbegin()->first + 1);
  for (auto i : d.rejected)
    if (i >= range) throw ValidationError("rejected index " + std::to_string(i) + " outside batch of " + std::to_string(range));
  std::vector<std::size_t> out;
  for (const auto& [i, r] : ledger.rows) {
    if (out.size() >= ledger.plan.n_images) break;
    if (r.status == JobStatus::pending_review && !d.rejected.count(i)) out.push_back(i);
  }
  return out;
}

struct AcceptedImage {
  std::string path;
  std::vector<Label> labels;
  std::string batch;
  std::size_t index = 0;
};

inline std::string synthetic_id(std::string_view batch, std::size_t index) {
  return std::string(batch) + "-" + std::to_string(index);
}

inline DatasetManifest merge_manifests(const DatasetManifest& base, const std::vector<AcceptedImage>& accepted) {
  DatasetManifest out = base;
  std::unordered_set<std::string> ids;
  for (const auto& r : base.records) ids.insert(r.id);
  for (const auto& a : accepted) {
    ImageRecord r{synthetic_id(a.batch, a.index), a.path, Split::train, Origin::synthetic, a.labels, a.batch};
    validate_record(out.schema, r);
    if (!ids.insert(r.id).second) throw ValidationError("id collision on merge: '" + r.id + "'");
    out.records.push_back(std::move(r));
  }
  return out;
}

struct MergeOutcome {
  DatasetManifest manifest;
  std::size_t accepted = 0;
  std::size_t required = 0;
  std::size_t shortfall() const { return required > accepted ? required - accepted : 0; }
};

// Accepted images of a batch directory, labelled from their recorded prompts.
inline std::vector<AcceptedImage> accepted_images(const std::filesystem::path& batch_dir, const BatchLedger& ledger,
                                                  const DiscardList& d, const AttributeSchema& schema) {
  std::vector<AcceptedImage> out;
  for (auto i : apply_discards(ledger, d)) {
    const auto& row = ledger.rows.at(i);
    out.push_back({(batch_dir / row.image).generic_string(), annotate_synthetic(row.spec, schema), ledger.plan.batch_id, i});
  }
  return out;
}

inline MergeOutcome merge_batch(const DatasetManifest& base, const std::filesystem::path& batch_dir, const DiscardList& d) {
  const auto ledger = load_batch(batch_dir);
  const auto acc = accepted_images(batch_dir, ledger, d, base.schema);
  return {merge_manifests(base, acc), acc.size(), ledger.plan.n_images};
}

}  // namespace paraug
