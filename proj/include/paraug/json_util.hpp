#pragma once

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <type_traits>

#include "json.hpp"
#include "paraug/error.hpp"

namespace paraug {

using Json = nlohmann::json;

// Reads fields of a JSON object, tracking which keys were consumed so that
// leftovers can be rejected with their full key path.
class StrictObject {
 public:
  StrictObject(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ValidationError("config key '" + shown() + "' must be an object");
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
      if (!it->is_number_unsigned()) throw ValidationError("config key '" + child(key) + "' must be a non-negative integer");
    }
    try {
      it->get_to(out);
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("config key '" + child(key) + "': " + e.what());
    }
  }

  // Returns nullptr when the key is absent.
  const Json* sub(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ValidationError("unknown config key '" + child(it.key()) + "'");
  }

 private:
  std::string shown() const { return path_.empty() ? "<root>" : path_; }
  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline Json read_json_file(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw IoError("cannot open " + p.string());
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(p.string() + ": " + e.what());
  }
}

}  // namespace paraug
