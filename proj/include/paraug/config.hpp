#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "paraug/degrade.hpp"
#include "paraug/json_util.hpp"
#include "paraug/orchestrator.hpp"
#include "paraug/scorer.hpp"
#include "paraug/services.hpp"

namespace paraug {

struct ServiceEndpoints {
  std::string diffusion = "mock://diffusion";
  std::string detector = "mock://detector";
};

struct PipelineConfig {
  std::map<std::string, std::string> datasets;  // name -> manifest path
  CriteriaThresholds thresholds{};
  DegradeParams degrade{};
  ServiceEndpoints services{};
  JobDefaults job{};
  double weight_augmented = 0.5;
  unsigned parallelism = 1;
  std::uint64_t initial_seed = 123456789;
  std::size_t batch_size = 100;
  double oversample_factor = 1.3;
  std::string wildcards;   // empty -> shipped table
  std::string batch_root = "batches";
  int retry_attempts = 5;
  int retry_initial_ms = 100;
  int retry_max_ms = 2000;

  RetryPolicy retry() const {
    RetryPolicy r;
    r.max_attempts = retry_attempts;
    r.initial_backoff = std::chrono::milliseconds(retry_initial_ms);
    r.max_backoff = std::chrono::milliseconds(retry_max_ms);
    return r;
  }
};

inline PipelineConfig parse_config(const Json& j) {
  PipelineConfig c;
  StrictObject root(j, "");
  root.get("datasets", c.datasets);
  if (const auto* t = root.sub("thresholds")) {
    StrictObject o(*t, "thresholds");
    o.get("low_train_fraction", c.thresholds.low_train_fraction);
    o.get("test_high", c.thresholds.test_high);
    o.get("test_low", c.thresholds.test_low);
    o.get("drop_small", c.thresholds.drop_small);
    o.get("drop_big", c.thresholds.drop_big);
    o.finish();
    try {
      c.thresholds.validate();
    } catch (const ValidationError& e) {
      throw ValidationError(std::string("config key 'thresholds': ") + e.what());
    }
  }
  if (const auto* d = root.sub("degrade")) {
    try {
      from_json(*d, c.degrade, "degrade");
    } catch (const ValidationError& e) {
      const std::string msg = e.what();
      throw ValidationError(msg.starts_with("unknown config key") || msg.starts_with("config key") ? msg
                                                                                                     : "config key 'degrade': " + msg);
    }
  }
  if (const auto* s = root.sub("services")) {
    StrictObject o(*s, "services");
    o.get("diffusion", c.services.diffusion);
    o.get("detector", c.services.detector);
    o.finish();
  }
  if (const auto* jb = root.sub("job")) {
    StrictObject o(*jb, "job");
    o.get("width", c.job.width);
    o.get("height", c.job.height);
    o.get("steps", c.job.steps);
    o.get("cfg", c.job.cfg);
    o.get("sampler", c.job.sampler);
    o.get("scheduler", c.job.scheduler);
    o.get("shift", c.job.shift);
    o.get("denoise", c.job.denoise);
    o.finish();
    if (c.job.width < 1 || c.job.height < 1) throw ValidationError("config key 'job': canvas must be at least 1x1");
    if (c.job.steps < 1) throw ValidationError("config key 'job.steps' must be at least 1");
  }
  if (const auto* r = root.sub("retry")) {
    StrictObject o(*r, "retry");
    o.get("max_attempts", c.retry_attempts);
    o.get("initial_backoff_ms", c.retry_initial_ms);
    o.get("max_backoff_ms", c.retry_max_ms);
    o.finish();
    if (c.retry_attempts < 1) throw ValidationError("config key 'retry.max_attempts' must be at least 1");
  }
  root.get("weight_augmented", c.weight_augmented);
  root.get("parallelism", c.parallelism);
  root.get("initial_seed", c.initial_seed);
  root.get("batch_size", c.batch_size);
  root.get("oversample_factor", c.oversample_factor);
  root.get("wildcards", c.wildcards);
  root.get("batch_root", c.batch_root);
  root.finish();
  if (!(c.weight_augmented >= 0 && c.weight_augmented <= 1)) throw ValidationError("config key 'weight_augmented' must be in [0,1]");
  if (c.parallelism < 1) throw ValidationError("config key 'parallelism' must be at least 1");
  if (c.batch_size < 1) throw ValidationError("config key 'batch_size' must be at least 1");
  if (!(c.oversample_factor >= 1)) throw ValidationError("config key 'oversample_factor' must be at least 1");
  return c;
}

inline PipelineConfig load_config(const std::filesystem::path& p) {
  auto c = parse_config(read_json_file(p));
  // Relative paths in the file are relative to the file.
  const auto base = p.parent_path();
  auto fix = [&](std::string& s) {
    if (!s.empty() && std::filesystem::path(s).is_relative() && !base.empty()) s = (base / s).string();
  };
  for (auto& [k, v] : c.datasets) fix(v);
  fix(c.wildcards);
  fix(c.batch_root);
  return c;
}

}  // namespace paraug
