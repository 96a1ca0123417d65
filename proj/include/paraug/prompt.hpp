#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "paraug/csv.hpp"
#include "paraug/dataset.hpp"
#include "paraug/error.hpp"
#include "paraug/prng.hpp"

namespace paraug {

struct WildcardEntry {
  std::string phrase;
  double weight = 1.0;
  std::set<std::string> implied;
  bool operator==(const WildcardEntry&) const = default;
};

namespace detail {
inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline void add_implied(std::set<std::string>& into, std::string_view list) {
  for (auto& part : csv::split(list)) {
    auto t = trim(part);
    if (!t.empty()) into.insert(std::move(t));
  }
}
}  // namespace detail

class WildcardTable {
 public:
  using List = std::vector<WildcardEntry>;

  static WildcardTable parse(std::string_view text) {
    WildcardTable t;
    std::string section;
    std::size_t lineno = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
      const auto nl = text.find('\n', pos);
      std::string_view raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
      pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
      ++lineno;
      const std::string line = detail::trim(raw);
      if (line.empty() || raw.front() == '#') continue;
      const auto here = " at line " + std::to_string(lineno);
      if (line.front() == '[') {
        if (line.back() != ']' || line.size() < 3) throw ParseError("malformed section header" + here);
        section = detail::trim(std::string_view(line).substr(1, line.size() - 2));
        if (t.lists_.count(section)) throw ParseError("duplicate section [" + section + "]" + here);
        t.lists_[section];
        t.order_.push_back(section);
        continue;
      }
      if (section.empty()) throw ParseError("phrase outside any section" + here);
      auto fields = csv::split(line, '|');
      if (fields.size() > 3) throw ParseError("too many '|' fields" + here);
      WildcardEntry e;
      std::string phrase = detail::trim(fields[0]);
      if (auto m = phrase.rfind("#("); m != std::string::npos && phrase.back() == ')') {
        detail::add_implied(e.implied, std::string_view(phrase).substr(m + 2, phrase.size() - m - 3));
        phrase = detail::trim(std::string_view(phrase).substr(0, m));
      }
      if (phrase.empty()) throw ParseError("empty phrase" + here);
      e.phrase = std::move(phrase);
      if (fields.size() >= 2) {
        const auto w = detail::trim(fields[1]);
        if (!w.empty()) e.weight = csv::parse_double(w, "weight" + here);
        if (!(e.weight > 0) || !std::isfinite(e.weight)) throw ParseError("weight must be positive" + here);
      }
      if (fields.size() == 3) detail::add_implied(e.implied, fields[2]);
      t.lists_[section].push_back(std::move(e));
    }
    for (const auto& [name, list] : t.lists_)
      if (list.empty()) throw ValidationError("wildcard list [" + name + "] is empty");
    return t;
  }

  static WildcardTable load(const std::filesystem::path& path) {
    std::string text;
    for (const auto& l : csv::read_lines(path)) text += l + "\n";
    return parse(text);
  }

  bool has(std::string_view name) const { return lists_.find(name) != lists_.end(); }

  const List& list(std::string_view name) const {
    auto it = lists_.find(name);
    if (it == lists_.end()) throw ValidationError("no wildcard list named '" + std::string(name) + "'");
    return it->second;
  }

  List& mutable_list(const std::string& name) {
    if (!lists_.count(name)) order_.push_back(name);
    return lists_[name];
  }

  const std::vector<std::string>& names() const { return order_; }

  // Every implied attribute must be a schema member.
  void validate(const AttributeSchema& schema) const {
    for (const auto& [name, list] : lists_)
      for (const auto& e : list)
        for (const auto& a : e.implied)
          if (!schema.find(a))
            throw ValidationError("wildcard [" + name + "] phrase '" + e.phrase + "' implies unknown attribute '" + a + "'");
  }

 private:
  std::map<std::string, List, std::less<>> lists_;
  std::vector<std::string> order_;
};

struct AttributeOverride {
  std::string negative_suffix;
  std::map<std::string, std::string> list_substitutions;  // slot -> alternate list name
};

inline constexpr std::string_view kPositiveBody =
    "A highly detailed, ultra high definition image of a single pedestrian __poses__ on __backgrounds__, with the "
    "pedestrian fully visible and centered in the frame. The pedestrian is visible from head to toe and is the primary "
    "focus, and the scene features realistic, natural colors. We have __views__. The subject is wearing a __styles__. "
    "__colors__. It can also be seen how the pedestrian __attributes__.";

inline constexpr std::string_view kNegativeBody =
    "bad quality, poor quality, Partial figures, cropped bodies, cut-off limbs, headless or footless pedestrians, "
    "close-up shots, extreme zoom, obscured views, hidden or partially visible subjects, cropped at the knees or waist, "
    "off-frame figures, incomplete visibility, overly zoomed-in perspectives";

inline constexpr std::string_view kShortSkirtSuffix = ", no pants, no long skirts, no oversized clothing.";

struct PromptTemplate {
  std::string positive_body{kPositiveBody};
  std::string negative_body{kNegativeBody};
  std::map<std::string, AttributeOverride> attribute_suffix_overrides{
      {"lb-ShortSkirt", {std::string(kShortSkirtSuffix), {{"styles", "styles.skirt"}}}}};

  // Slot names in order of appearance.
  std::vector<std::string> slots() const {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while ((pos = positive_body.find("__", pos)) != std::string::npos) {
      const auto end = positive_body.find("__", pos + 2);
      if (end == std::string::npos) throw ParseError("unterminated slot in template");
      out.push_back(positive_body.substr(pos + 2, end - pos - 2));
      pos = end + 2;
    }
    return out;
  }

  std::string list_for(std::string_view slot, std::string_view target) const {
    if (auto it = attribute_suffix_overrides.find(std::string(target)); it != attribute_suffix_overrides.end())
      if (auto s = it->second.list_substitutions.find(std::string(slot)); s != it->second.list_substitutions.end())
        return s->second;
    return std::string(slot);
  }

  void validate(const WildcardTable& table) const {
    for (const auto& s : slots())
      if (!table.has(s)) throw ValidationError("template slot __" + s + "__ has no wildcard list");
    for (const auto& [attr, o] : attribute_suffix_overrides)
      for (const auto& [slot, list] : o.list_substitutions)
        if (!table.has(list)) throw ValidationError("override for '" + attr + "' names missing list '" + list + "'");
  }
};

inline constexpr std::string_view kAttributesSlot = "attributes";

struct PromptSpec {
  std::string positive;
  std::string negative;
  std::uint64_t seed = 0;
  std::map<std::string, std::size_t> choices;  // slot -> index in the list used for that slot
  std::string target_attribute;
  std::set<std::string> implied;

  bool operator==(const PromptSpec&) const = default;
};

inline void to_json(nlohmann::json& j, const PromptSpec& s) {
  j = nlohmann::json{{"positive", s.positive}, {"negative", s.negative}, {"seed", s.seed},
                     {"choices", s.choices},   {"target_attribute", s.target_attribute}, {"implied", s.implied}};
}

inline void from_json(const nlohmann::json& j, PromptSpec& s) {
  j.at("positive").get_to(s.positive);
  j.at("negative").get_to(s.negative);
  j.at("seed").get_to(s.seed);
  j.at("choices").get_to(s.choices);
  j.at("target_attribute").get_to(s.target_attribute);
  j.at("implied").get_to(s.implied);
}

inline std::string to_json_line(const PromptSpec& s) { return nlohmann::json(s).dump(); }

struct SeedPlan {
  std::uint64_t initial_seed = 123456789;
  std::uint64_t batch_size = 1;
  std::uint64_t batch_number = 1;
};

inline std::uint64_t seed_for(const SeedPlan& p, std::uint64_t index_in_batch) {
  if (p.batch_size < 1) throw ValidationError("batch_size must be at least 1");
  if (p.batch_number < 1) throw ValidationError("batch_number is 1-based");
  if (index_in_batch >= p.batch_size)
    throw ValidationError("index " + std::to_string(index_in_batch) + " outside batch of " + std::to_string(p.batch_size));
  return p.initial_seed + p.batch_size * (p.batch_number - 1) + index_in_batch;
}

// Indices into the attributes list whose phrase asserts `target` first.
inline std::vector<std::size_t> attribute_candidates(const WildcardTable& table, std::string_view target) {
  std::vector<std::size_t> out;
  const auto& list = table.list(kAttributesSlot);
  for (std::size_t i = 0; i < list.size(); ++i)
    if (list[i].implied.count(std::string(target))) out.push_back(i);
  return out;
}

namespace detail {
inline std::string substitute(const std::string& body, const std::map<std::string, std::string>& fill) {
  std::string out;
  std::size_t pos = 0;
  for (;;) {
    const auto b = body.find("__", pos);
    if (b == std::string::npos) break;
    const auto e = body.find("__", b + 2);
    if (e == std::string::npos) throw ParseError("unterminated slot in template");
    out.append(body, pos, b - pos);
    const auto name = body.substr(b + 2, e - b - 2);
    auto it = fill.find(name);
    if (it == fill.end()) throw ValidationError("slot __" + name + "__ left unfilled");
    out += it->second;
    pos = e + 2;
  }
  out.append(body, pos);
  return out;
}
}  // namespace detail

inline std::string render_positive(const PromptTemplate& tpl, const WildcardTable& table, const PromptSpec& spec) {
  std::map<std::string, std::string> fill;
  for (const auto& [slot, idx] : spec.choices) {
    const auto& list = table.list(tpl.list_for(slot, spec.target_attribute));
    if (idx >= list.size()) throw ValidationError("choice index out of range for slot " + slot);
    fill[slot] = list[idx].phrase;
  }
  return detail::substitute(tpl.positive_body, fill);
}

inline std::set<std::string> implied_attributes(const PromptSpec& spec) { return spec.implied; }

inline std::set<std::string> implied_attributes(const PromptTemplate& tpl, const WildcardTable& table, const PromptSpec& spec) {
  std::set<std::string> out;
  for (const auto& [slot, idx] : spec.choices) {
    const auto& e = table.list(tpl.list_for(slot, spec.target_attribute)).at(idx);
    out.insert(e.implied.begin(), e.implied.end());
  }
  out.erase(spec.target_attribute);
  return out;
}

inline PromptSpec compile_prompt(const PromptTemplate& tpl, const WildcardTable& table, std::string_view target,
                                 std::uint64_t seed) {
  const auto candidates = attribute_candidates(table, target);
  if (candidates.empty()) throw ValidationError("no attribute phrase for target '" + std::string(target) + "'");
  SplitMix64 rng(seed);
  PromptSpec spec;
  spec.seed = seed;
  spec.target_attribute = std::string(target);
  for (const auto& slot : tpl.slots()) {
    if (spec.choices.count(slot)) continue;
    const auto& list = table.list(tpl.list_for(slot, target));
    if (list.empty()) throw ValidationError("wildcard list for slot '" + slot + "' is empty");
    if (slot == kAttributesSlot) {
      std::vector<double> w;
      for (auto i : candidates) w.push_back(list[i].weight);
      spec.choices[slot] = candidates[weighted_index(rng, w)];
    } else {
      std::vector<double> w;
      w.reserve(list.size());
      for (const auto& e : list) w.push_back(e.weight);
      spec.choices[slot] = weighted_index(rng, w);
    }
  }
  spec.positive = render_positive(tpl, table, spec);
  spec.negative = tpl.negative_body;
  if (auto it = tpl.attribute_suffix_overrides.find(spec.target_attribute); it != tpl.attribute_suffix_overrides.end())
    spec.negative += it->second.negative_suffix;
  spec.implied = implied_attributes(tpl, table, spec);
  return spec;
}

inline std::vector<PromptSpec> batch_prompts(const PromptTemplate& tpl, const WildcardTable& table, std::string_view target,
                                             const SeedPlan& plan) {
  std::vector<PromptSpec> out;
  out.reserve(plan.batch_size);
  for (std::uint64_t i = 0; i < plan.batch_size; ++i) out.push_back(compile_prompt(tpl, table, target, seed_for(plan, i)));
  return out;
}

inline std::filesystem::path default_wildcards_path() {
#ifdef PARAUG_DATA_DIR
  return std::filesystem::path(PARAUG_DATA_DIR) / "wildcards.txt";
#else
  return "data/wildcards.txt";
#endif
}

}  // namespace paraug
