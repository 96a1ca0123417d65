#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "httplib.h"
#include "paraug/error.hpp"
#include "paraug/image.hpp"
#include "paraug/json_util.hpp"
#include "paraug/prompt.hpp"

namespace paraug {

struct GenerationJob {
  PromptSpec spec;
  std::size_t width = 2784;
  std::size_t height = 1024;
  int steps = 28;
  double cfg = 4.5;
  std::string sampler = "dpmpp_2m";
  std::string scheduler = "sgm_uniform";
  double shift = 3.0;
  double denoise = 1.0;
  std::string job_id;

  std::uint64_t seed() const { return spec.seed; }
};

inline Json to_json(const GenerationJob& j) {
  return Json{{"job_id", j.job_id},   {"spec", j.spec},           {"seed", j.spec.seed},
              {"width", j.width},     {"height", j.height},       {"steps", j.steps},
              {"cfg", j.cfg},         {"sampler", j.sampler},     {"scheduler", j.scheduler},
              {"shift", j.shift},     {"denoise", j.denoise}};
}

inline GenerationJob job_from_json(const Json& j) {
  GenerationJob g;
  j.at("job_id").get_to(g.job_id);
  j.at("spec").get_to(g.spec);
  j.at("width").get_to(g.width);
  j.at("height").get_to(g.height);
  j.at("steps").get_to(g.steps);
  j.at("cfg").get_to(g.cfg);
  j.at("sampler").get_to(g.sampler);
  j.at("scheduler").get_to(g.scheduler);
  j.at("shift").get_to(g.shift);
  j.at("denoise").get_to(g.denoise);
  return g;
}

struct DetectorBox {
  long x = 0, y = 0, w = 0, h = 0;
  double confidence = 0;
  bool operator==(const DetectorBox&) const = default;
};

enum class ServiceErrorKind { connection, service, dimension_mismatch, malformed_response };

inline std::string_view to_string(ServiceErrorKind k) {
  switch (k) {
    case ServiceErrorKind::connection: return "connection";
    case ServiceErrorKind::service: return "service";
    case ServiceErrorKind::dimension_mismatch: return "dimension-mismatch";
    case ServiceErrorKind::malformed_response: return "malformed-response";
  }
  return "unknown";
}

class ServiceError : public Error {
 public:
  ServiceError(ServiceErrorKind kind, const std::string& msg, bool transient = false)
      : Error(std::string(to_string(kind)) + ": " + msg), kind_(kind), transient_(transient) {}
  ServiceErrorKind kind() const { return kind_; }
  bool transient() const { return transient_; }

 private:
  ServiceErrorKind kind_;
  bool transient_;
};

class DiffusionService {
 public:
  virtual ~DiffusionService() = default;
  // Returns encoded PNG bytes.
  virtual std::vector<std::uint8_t> generate(const GenerationJob& job) = 0;
};

class DetectorService {
 public:
  virtual ~DetectorService() = default;
  virtual std::vector<DetectorBox> detect(const std::vector<std::uint8_t>& png) = 0;
};

struct RetryPolicy {
  int max_attempts = 5;
  std::chrono::milliseconds initial_backoff{100};
  std::chrono::milliseconds max_backoff{2000};
  std::function<void(std::chrono::milliseconds)> sleep = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
};

// Calls fn until it succeeds or a non-transient error / the attempt budget ends.
template <typename Fn>
auto with_retry(const RetryPolicy& policy, Fn&& fn, int* attempts_out = nullptr) -> decltype(fn()) {
  auto backoff = policy.initial_backoff;
  for (int attempt = 1;; ++attempt) {
    if (attempts_out) *attempts_out = attempt;
    try {
      return fn();
    } catch (const ServiceError& e) {
      if (!e.transient() || attempt >= policy.max_attempts) throw;
    }
    if (policy.sleep) policy.sleep(backoff);
    backoff = std::min(policy.max_backoff, backoff * 2);
  }
}

namespace detail {
inline std::string service_message(const httplib::Result& r) {
  try {
    auto j = Json::parse(r->body);
    if (j.is_object() && j.contains("error")) return j["error"].dump();
  } catch (const Json::exception&) {
  }
  return r->body.substr(0, 200);
}

inline void check_http(const httplib::Result& r, const std::string& what) {
  if (!r) throw ServiceError(ServiceErrorKind::connection, what + ": " + httplib::to_string(r.error()), true);
  if (r->status >= 500)
    throw ServiceError(ServiceErrorKind::service, what + " returned " + std::to_string(r->status) + ": " + service_message(r), true);
  if (r->status >= 400)
    throw ServiceError(ServiceErrorKind::service, what + " returned " + std::to_string(r->status) + ": " + service_message(r));
}

inline std::vector<std::uint8_t> bytes_of(const std::string& s) { return {s.begin(), s.end()}; }
}  // namespace detail

class HttpDiffusionClient : public DiffusionService {
 public:
  explicit HttpDiffusionClient(std::string endpoint, std::chrono::milliseconds poll = std::chrono::milliseconds(200),
                               int max_polls = 3000)
      : endpoint_(std::move(endpoint)), poll_(poll), max_polls_(max_polls) {}

  std::vector<std::uint8_t> generate(const GenerationJob& job) override {
    httplib::Client cli(endpoint_);
    cli.set_connection_timeout(5);
    cli.set_read_timeout(600);
    auto r = cli.Post("/generate", to_json(job).dump(), "application/json");
    detail::check_http(r, "POST /generate");
    if (r->status == 202) {
      std::string id;
      try {
        id = Json::parse(r->body).at("id").get<std::string>();
      } catch (const Json::exception& e) {
        throw ServiceError(ServiceErrorKind::malformed_response, std::string("202 without job id: ") + e.what());
      }
      for (int i = 0; i < max_polls_; ++i) {
        auto g = cli.Get("/result/" + id);
        detail::check_http(g, "GET /result/" + id);
        if (g->status == 200) return detail::bytes_of(g->body);
        std::this_thread::sleep_for(poll_);
      }
      throw ServiceError(ServiceErrorKind::service, "job " + id + " did not finish", true);
    }
    if (r->status != 200) throw ServiceError(ServiceErrorKind::malformed_response, "unexpected status " + std::to_string(r->status));
    return detail::bytes_of(r->body);
  }

 private:
  std::string endpoint_;
  std::chrono::milliseconds poll_;
  int max_polls_;
};

inline std::vector<DetectorBox> parse_detector_boxes(const std::string& body) {
  std::vector<DetectorBox> out;
  try {
    auto j = Json::parse(body);
    const Json& arr = j.is_object() ? j.at("boxes") : j;
    if (!arr.is_array()) throw ServiceError(ServiceErrorKind::malformed_response, "detector reply is not a list of boxes");
    for (const auto& b : arr) {
      DetectorBox d;
      d.x = std::lround(b.at("x").get<double>());
      d.y = std::lround(b.at("y").get<double>());
      d.w = std::lround(b.at("w").get<double>());
      d.h = std::lround(b.at("h").get<double>());
      d.confidence = b.at("confidence").get<double>();
      if (!(d.confidence >= 0 && d.confidence <= 1))
        throw ServiceError(ServiceErrorKind::malformed_response, "box confidence outside [0,1]");
      out.push_back(d);
    }
  } catch (const Json::exception& e) {
    throw ServiceError(ServiceErrorKind::malformed_response, std::string("detector reply: ") + e.what());
  }
  return out;
}

class HttpDetectorClient : public DetectorService {
 public:
  explicit HttpDetectorClient(std::string endpoint) : endpoint_(std::move(endpoint)) {}

  std::vector<DetectorBox> detect(const std::vector<std::uint8_t>& png) override {
    httplib::Client cli(endpoint_);
    cli.set_connection_timeout(5);
    cli.set_read_timeout(120);
    auto r = cli.Post("/detect", std::string(png.begin(), png.end()), "image/png");
    detail::check_http(r, "POST /detect");
    return parse_detector_boxes(r->body);
  }

 private:
  std::string endpoint_;
};

// Deterministic stand-in for the diffusion service: a seed-dependent gradient
// with a darker upright figure in the middle third.
inline ImageBuffer mock_gradient(std::uint64_t seed, std::size_t w, std::size_t h) {
  ImageBuffer img(w, h);
  const double phase = double(seed % 997) / 997.0;
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const double u = double(x) / double(w), v = double(y) / double(h);
      const bool figure = u > 0.45 && u < 0.55 && v > 0.08 && v < 0.92;
      const double k = figure ? 0.35 : 1.0;
      img.at(x, y, 0) = float(k * std::fmod(u + phase, 1.0));
      img.at(x, y, 1) = float(k * v);
      img.at(x, y, 2) = float(k * (1.0 - 0.5 * (u + v) * phase));
    }
  return img;
}

class MockDiffusion : public DiffusionService {
 public:
  // size 0 means "use the job's canvas".
  explicit MockDiffusion(std::size_t force_w = 0, std::size_t force_h = 0, int transient_failures = 0)
      : force_w_(force_w), force_h_(force_h), failures_left_(transient_failures) {}

  std::vector<std::uint8_t> generate(const GenerationJob& job) override {
    if (failures_left_.fetch_sub(1) > 0) throw ServiceError(ServiceErrorKind::connection, "mock transient failure", true);
    calls_.fetch_add(1);
    const auto w = force_w_ ? force_w_ : job.width, h = force_h_ ? force_h_ : job.height;
    return encode_png(mock_gradient(job.spec.seed, w, h));
  }

  int calls() const { return calls_.load(); }

 private:
  std::size_t force_w_, force_h_;
  std::atomic<int> failures_left_;
  std::atomic<int> calls_{0};
};

// Detector stand-in driven by a callback on the decoded image.
class MockDetector : public DetectorService {
 public:
  using Fn = std::function<std::vector<DetectorBox>(const ImageBuffer&)>;
  explicit MockDetector(Fn fn) : fn_(std::move(fn)) {}

  std::vector<DetectorBox> detect(const std::vector<std::uint8_t>& png) override { return fn_(decode_png(png)); }

  static Fn full_frame() {
    return [](const ImageBuffer& img) { return std::vector<DetectorBox>{{0, 0, long(img.width), long(img.height), 0.99}}; };
  }
  static Fn fixed(DetectorBox b) {
    return [b](const ImageBuffer&) { return std::vector<DetectorBox>{b}; };
  }
  static Fn none() {
    return [](const ImageBuffer&) { return std::vector<DetectorBox>{}; };
  }
  // Box around the figure painted by mock_gradient.
  static Fn centre_figure() {
    return [](const ImageBuffer& img) {
      const double W = double(img.width), H = double(img.height);
      return std::vector<DetectorBox>{{std::lround(0.45 * W), std::lround(0.08 * H), std::lround(0.10 * W),
                                       std::lround(0.84 * H), 0.9}};
    };
  }

 private:
  Fn fn_;
};

// "mock://..." endpoints resolve to in-process objects; anything else is treated as an HTTP base URL.
inline std::shared_ptr<DiffusionService> make_diffusion(const std::string& endpoint) {
  if (endpoint.starts_with("mock://")) return std::make_shared<MockDiffusion>();
  return std::make_shared<HttpDiffusionClient>(endpoint);
}

inline std::shared_ptr<DetectorService> make_detector(const std::string& endpoint) {
  if (endpoint == "mock://full") return std::make_shared<MockDetector>(MockDetector::full_frame());
  if (endpoint == "mock://none") return std::make_shared<MockDetector>(MockDetector::none());
  if (endpoint.starts_with("mock://")) return std::make_shared<MockDetector>(MockDetector::centre_figure());
  return std::make_shared<HttpDetectorClient>(endpoint);
}

}  // namespace paraug
