#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "paraug/dataset.hpp"
#include "paraug/degrade.hpp"
#include "paraug/image.hpp"
#include "paraug/journal.hpp"
#include "paraug/prompt.hpp"
#include "paraug/services.hpp"

namespace paraug {

struct AugmentationPlan {
  std::string target;
  unsigned pct = 100;
  std::size_t base_count = 0;
  std::size_t n_images = 0;
  std::size_t batch_size = 100;
  double oversample_factor = 1.3;
  std::uint64_t initial_seed = 123456789;
  std::string batch_id;

  std::size_t candidates() const {
    return static_cast<std::size_t>(std::ceil(double(n_images) * oversample_factor - 1e-9));
  }

  bool operator==(const AugmentationPlan&) const = default;
};

// Round half up of base * pct / 100 in exact integer arithmetic.
inline std::size_t augmentation_count(std::size_t base, unsigned pct) { return (base * pct + 50) / 100; }

inline std::string default_batch_id(std::string_view target, std::uint64_t seed) {
  std::string id;
  for (char c : target) id.push_back(std::isalnum(static_cast<unsigned char>(c)) || c == '-' ? c : '_');
  return id + "-" + std::to_string(seed);
}

inline AugmentationPlan plan_augmentation(std::size_t base_count, std::string_view target, unsigned pct,
                                          std::size_t batch_size = 100, double oversample_factor = 1.3,
                                          std::uint64_t initial_seed = 123456789) {
  if (base_count == 0) throw ValidationError("target '" + std::string(target) + "' has no positive training images");
  if (pct == 0) throw ValidationError("augmentation percentage must be positive");
  if (batch_size == 0) throw ValidationError("batch_size must be at least 1");
  if (!(oversample_factor >= 1)) throw ValidationError("oversample_factor must be at least 1");
  AugmentationPlan p;
  p.target = std::string(target);
  p.pct = pct;
  p.base_count = base_count;
  p.n_images = augmentation_count(base_count, pct);
  p.batch_size = batch_size;
  p.oversample_factor = oversample_factor;
  p.initial_seed = initial_seed;
  p.batch_id = default_batch_id(target, initial_seed);
  return p;
}

inline AugmentationPlan plan_augmentation(const DatasetManifest& m, std::string_view target, unsigned pct,
                                          std::size_t batch_size = 100, double oversample_factor = 1.3,
                                          std::uint64_t initial_seed = 123456789) {
  const auto a = m.schema.index_of(target);
  return plan_augmentation(split_stats(m).per_attribute_positive_train[a], target, pct, batch_size, oversample_factor,
                           initial_seed);
}

inline Json to_json(const AugmentationPlan& p) {
  return Json{{"target", p.target},         {"pct", p.pct},
              {"base_count", p.base_count}, {"n_images", p.n_images},
              {"batch_size", p.batch_size}, {"oversample_factor", p.oversample_factor},
              {"initial_seed", p.initial_seed}, {"batch_id", p.batch_id}};
}

inline AugmentationPlan plan_from_json(const Json& j) {
  AugmentationPlan p;
  j.at("target").get_to(p.target);
  j.at("pct").get_to(p.pct);
  j.at("base_count").get_to(p.base_count);
  j.at("n_images").get_to(p.n_images);
  j.at("batch_size").get_to(p.batch_size);
  j.at("oversample_factor").get_to(p.oversample_factor);
  j.at("initial_seed").get_to(p.initial_seed);
  j.at("batch_id").get_to(p.batch_id);
  return p;
}

// Seed of candidate i: batch number and in-batch index follow from the plan's batch size.
inline std::uint64_t candidate_seed(const AugmentationPlan& p, std::size_t i) {
  SeedPlan sp{p.initial_seed, p.batch_size, i / p.batch_size + 1};
  return seed_for(sp, i % p.batch_size);
}

struct JobDefaults {
  std::size_t width = 2784;
  std::size_t height = 1024;
  int steps = 28;
  double cfg = 4.5;
  std::string sampler = "dpmpp_2m";
  std::string scheduler = "sgm_uniform";
  double shift = 3.0;
  double denoise = 1.0;
};

inline std::string job_id(const AugmentationPlan& p, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06zu", i);
  return p.batch_id + "-" + buf;
}

inline std::vector<GenerationJob> plan_jobs(const AugmentationPlan& p, const PromptTemplate& tpl, const WildcardTable& table,
                                            const JobDefaults& d = {}) {
  std::vector<GenerationJob> jobs;
  const auto n = p.candidates();
  jobs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    GenerationJob j{compile_prompt(tpl, table, p.target, candidate_seed(p, i)), d.width, d.height, d.steps, d.cfg,
                    d.sampler, d.scheduler, d.shift, d.denoise, job_id(p, i)};
    jobs.push_back(std::move(j));
  }
  return jobs;
}

struct SubmitResult {
  ImageBuffer image;
  std::vector<std::uint8_t> png;
  int attempts = 0;
};

inline SubmitResult submit_job(const GenerationJob& job, DiffusionService& service, const RetryPolicy& retry = {},
                               int* attempts = nullptr) {
  SubmitResult r;
  int local = 0;
  int* counter = attempts ? attempts : &local;
  r.png = with_retry(retry, [&] { return service.generate(job); }, counter);
  r.attempts = *counter;
  try {
    r.image = decode_png(r.png);
  } catch (const ParseError& e) {
    throw ServiceError(ServiceErrorKind::malformed_response, e.what());
  }
  if (r.image.width != job.width || r.image.height != job.height)
    throw ServiceError(ServiceErrorKind::dimension_mismatch,
                       "expected " + std::to_string(job.width) + "x" + std::to_string(job.height) + ", got " +
                           std::to_string(r.image.width) + "x" + std::to_string(r.image.height));
  return r;
}

// Highest confidence wins; ties go to the larger area, then to the earlier box.
inline std::optional<DetectorBox> choose_box(const std::vector<DetectorBox>& boxes, std::size_t width, std::size_t height) {
  std::optional<DetectorBox> best;
  for (auto b : boxes) {
    const long x0 = std::clamp<long>(b.x, 0, long(width)), y0 = std::clamp<long>(b.y, 0, long(height));
    const long x1 = std::clamp<long>(b.x + b.w, 0, long(width)), y1 = std::clamp<long>(b.y + b.h, 0, long(height));
    b = {x0, y0, x1 - x0, y1 - y0, b.confidence};
    if (b.w < 1 || b.h < 1) continue;
    if (!best || b.confidence > best->confidence ||
        (b.confidence == best->confidence && b.w * b.h > best->w * best->h))
      best = b;
  }
  return best;
}

// nullopt means the detector found no usable person box.
inline std::optional<ImageBuffer> crop_person(const ImageBuffer& img, DetectorService& detector, const RetryPolicy& retry = {},
                                              const std::vector<std::uint8_t>* png = nullptr) {
  std::vector<std::uint8_t> own;
  if (!png) {
    own = encode_png(img);
    png = &own;
  }
  const auto boxes = with_retry(retry, [&] { return detector.detect(*png); });
  const auto b = choose_box(boxes, img.width, img.height);
  if (!b) return std::nullopt;
  return crop(img, std::size_t(b->x), std::size_t(b->y), std::size_t(b->w), std::size_t(b->h));
}

enum class JobStatus { pending_review, rejected_by_detector, failed };

inline std::string_view to_string(JobStatus s) {
  switch (s) {
    case JobStatus::pending_review: return "pending-review";
    case JobStatus::rejected_by_detector: return "rejected-by-detector";
    case JobStatus::failed: return "failed";
  }
  return "failed";
}

inline JobStatus parse_job_status(std::string_view s) {
  if (s == "pending-review") return JobStatus::pending_review;
  if (s == "rejected-by-detector") return JobStatus::rejected_by_detector;
  if (s == "failed") return JobStatus::failed;
  throw ParseError("unknown job status '" + std::string(s) + "'");
}

struct LedgerRow {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  std::string job_id;
  JobStatus status = JobStatus::failed;
  std::string image;  // relative to the batch dir; empty unless pending-review
  int attempts = 0;
  std::string error;
  PromptSpec spec;
};

inline Json to_json(const LedgerRow& r) {
  Json j{{"index", r.index},   {"seed", r.seed},         {"job_id", r.job_id}, {"status", to_string(r.status)},
         {"image", r.image},   {"attempts", r.attempts}, {"spec", r.spec}};
  if (!r.error.empty()) j["error"] = r.error;
  return j;
}

inline LedgerRow ledger_row_from_json(const Json& j) {
  LedgerRow r;
  j.at("index").get_to(r.index);
  j.at("seed").get_to(r.seed);
  j.at("job_id").get_to(r.job_id);
  r.status = parse_job_status(j.at("status").get<std::string>());
  j.at("image").get_to(r.image);
  j.at("attempts").get_to(r.attempts);
  if (j.contains("error")) j.at("error").get_to(r.error);
  j.at("spec").get_to(r.spec);
  return r;
}

struct BatchLedger {
  AugmentationPlan plan;
  std::map<std::size_t, LedgerRow> rows;  // last row per index wins
  std::size_t executed = 0;               // jobs run by the call that produced this value

  std::vector<std::size_t> indices_with(JobStatus s) const {
    std::vector<std::size_t> out;
    for (const auto& [i, r] : rows)
      if (r.status == s) out.push_back(i);
    return out;
  }
};

inline constexpr const char* kPlanFile = "plan.json";
inline constexpr const char* kLedgerFile = "ledger.jsonl";
inline constexpr const char* kImagesDir = "images";

inline std::string image_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06zu.png", index);
  return buf;
}

inline BatchLedger load_batch(const std::filesystem::path& dir) {
  BatchLedger b;
  b.plan = plan_from_json(read_json_file(dir / kPlanFile).at("plan"));
  for (const auto& j : read_json_lines(dir / kLedgerFile)) {
    auto r = ledger_row_from_json(j);
    b.rows[r.index] = std::move(r);
  }
  return b;
}

struct BatchOptions {
  unsigned parallelism = 1;
  unsigned degrade_threads = 1;
  RetryPolicy retry{};
  JobDefaults job{};
  std::function<void(const LedgerRow&)> on_row;  // progress hook
  std::optional<std::size_t> stop_after;          // run at most this many jobs (interruption testing)
};

inline LedgerRow run_one(const GenerationJob& job, std::size_t index, DiffusionService& diffusion,
                         DetectorService& detector, DegradeParams params, const std::filesystem::path& dir,
                         const BatchOptions& opt) {
  LedgerRow row{index, job.spec.seed, job.job_id, JobStatus::failed, {}, 0, {}, job.spec};
  try {
    auto sub = submit_job(job, diffusion, opt.retry, &row.attempts);
    auto person = crop_person(sub.image, detector, opt.retry, &sub.png);
    if (!person) {
      row.status = JobStatus::rejected_by_detector;
      return row;
    }
    params.noise_seed = job.spec.seed;
    const auto out = degrade_chain(*person, params, opt.degrade_threads);
    const auto rel = std::filesystem::path(kImagesDir) / image_name(index);
    save_png(out, dir / rel);
    row.image = rel.generic_string();
    row.status = JobStatus::pending_review;
  } catch (const ServiceError& e) {
    row.status = JobStatus::failed;
    row.error = e.what();
  } catch (const Error& e) {
    row.status = JobStatus::failed;
    row.error = e.what();
  }
  return row;
}

inline BatchLedger run_generation_batch(const AugmentationPlan& plan, const PromptTemplate& tpl, const WildcardTable& table,
                                        DiffusionService& diffusion, DetectorService& detector, const DegradeParams& params,
                                        const std::filesystem::path& out_dir, const BatchOptions& opt = {}) {
  params.validate();
  tpl.validate(table);
  std::filesystem::create_directories(out_dir / kImagesDir);
  const auto plan_path = out_dir / kPlanFile;
  const Json plan_doc{{"plan", to_json(plan)}, {"degrade", to_json(params)},
                      {"job", {{"width", opt.job.width}, {"height", opt.job.height}, {"steps", opt.job.steps},
                               {"cfg", opt.job.cfg}, {"sampler", opt.job.sampler}, {"scheduler", opt.job.scheduler},
                               {"shift", opt.job.shift}, {"denoise", opt.job.denoise}}}};
  if (std::filesystem::exists(plan_path)) {
    const auto prev = read_json_file(plan_path);
    if (plan_from_json(prev.at("plan")).batch_id != plan.batch_id)
      throw ValidationError("batch dir " + out_dir.string() + " belongs to batch " + prev.at("plan").at("batch_id").dump());
  }
  csv::write_atomic(plan_path, plan_doc.dump(2) + "\n");

  BatchLedger ledger;
  ledger.plan = plan;
  for (const auto& j : read_json_lines(out_dir / kLedgerFile)) {
    auto r = ledger_row_from_json(j);
    ledger.rows[r.index] = std::move(r);
  }
  const auto jobs = plan_jobs(plan, tpl, table, opt.job);
  std::vector<std::size_t> todo;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    auto it = ledger.rows.find(i);
    if (it == ledger.rows.end() || it->second.status == JobStatus::failed) todo.push_back(i);
  }
  if (opt.stop_after && todo.size() > *opt.stop_after) todo.resize(*opt.stop_after);

  JsonLinesLog log(out_dir / kLedgerFile);
  std::mutex mu;
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const auto k = next.fetch_add(1);
      if (k >= todo.size()) return;
      const auto i = todo[k];
      auto row = run_one(jobs[i], i, diffusion, detector, params, out_dir, opt);
      log.append(to_json(row));
      std::lock_guard lock(mu);
      if (opt.on_row) opt.on_row(row);
      ledger.rows[i] = std::move(row);
      ++ledger.executed;
    }
  };
  const unsigned n = std::max(1u, std::min<unsigned>(opt.parallelism, unsigned(std::max<std::size_t>(1, todo.size()))));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < n; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return ledger;
}

}  // namespace paraug
