#pragma once

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "httplib.h"
#include "paraug/augment.hpp"
#include "paraug/journal.hpp"
#include "paraug/json_util.hpp"
#include "paraug/orchestrator.hpp"

namespace paraug {

enum class Verdict { accept, reject };

inline std::optional<Verdict> parse_verdict(std::string_view s) {
  if (s == "accept") return Verdict::accept;
  if (s == "reject") return Verdict::reject;
  return std::nullopt;
}

inline std::string_view to_string(Verdict v) { return v == Verdict::accept ? "accept" : "reject"; }

struct ReviewDecision {
  std::string batch;
  std::size_t index = 0;
  Verdict verdict = Verdict::accept;
  std::string timestamp;
  std::string reviewer;
};

inline Json to_json(const ReviewDecision& d) {
  return Json{{"batch", d.batch}, {"index", d.index}, {"verdict", to_string(d.verdict)}, {"timestamp", d.timestamp},
              {"reviewer", d.reviewer}};
}

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const auto t = std::chrono::system_clock::to_time_t(now);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday,
                tm.tm_hour, tm.tm_min, tm.tm_sec, int(ms));
  return buf;
}

struct Request {
  std::string method;
  std::string path;
  std::map<std::string, std::string> query;
  std::string body;
};

struct Response {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

inline constexpr const char* kDecisionsFile = "decisions.jsonl";

class ReviewService {
 public:
  explicit ReviewService(std::filesystem::path batch_root, std::filesystem::path static_dir = {})
      : root_(std::move(batch_root)), static_dir_(std::move(static_dir)) {
    std::unique_lock lock(mu_);
    rescan_locked();
  }

  Response handle(const Request& rq) {
    try {
      return route(rq);
    } catch (const Error& e) {
      return error(500, e.what());
    }
  }

  void rescan() {
    std::unique_lock lock(mu_);
    rescan_locked();
  }

 private:
  struct BatchState {
    std::filesystem::path dir;
    BatchLedger ledger;
    std::map<std::size_t, Verdict> effective;
    std::vector<ReviewDecision> history;
    std::unique_ptr<JsonLinesLog> journal;
  };

  static Response error(int status, const std::string& msg) { return {status, "application/json", Json{{"error", msg}}.dump()}; }
  static Response json(const Json& j, int status = 200) { return {status, "application/json", j.dump()}; }

  static std::vector<std::string> segments(const std::string& path) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (pos < path.size()) {
      if (path[pos] == '/') {
        ++pos;
        continue;
      }
      const auto e = path.find('/', pos);
      out.push_back(path.substr(pos, e == std::string::npos ? std::string::npos : e - pos));
      if (e == std::string::npos) break;
      pos = e + 1;
    }
    return out;
  }

  static std::optional<std::size_t> parse_index(const std::string& s) {
    if (s.empty() || s.size() > 12) return std::nullopt;
    std::size_t v = 0;
    for (char c : s) {
      if (c < '0' || c > '9') return std::nullopt;
      v = v * 10 + std::size_t(c - '0');
    }
    return v;
  }

  void rescan_locked() {
    if (!std::filesystem::is_directory(root_)) return;
    std::vector<std::filesystem::path> dirs;
    for (const auto& e : std::filesystem::directory_iterator(root_))
      if (e.is_directory() && std::filesystem::exists(e.path() / kPlanFile)) dirs.push_back(e.path());
    std::sort(dirs.begin(), dirs.end());
    for (const auto& d : dirs) {
      auto ledger = load_batch(d);
      const auto id = ledger.plan.batch_id;
      auto it = batches_.find(id);
      if (it != batches_.end()) {
        it->second.ledger = std::move(ledger);
        continue;
      }
      BatchState st;
      st.dir = d;
      st.ledger = std::move(ledger);
      for (const auto& j : read_json_lines(d / kDecisionsFile)) {
        ReviewDecision rd;
        rd.batch = j.at("batch").get<std::string>();
        rd.index = j.at("index").get<std::size_t>();
        rd.verdict = parse_verdict(j.at("verdict").get<std::string>()).value_or(Verdict::accept);
        rd.timestamp = j.value("timestamp", "");
        rd.reviewer = j.value("reviewer", "");
        st.effective[rd.index] = rd.verdict;
        st.history.push_back(std::move(rd));
      }
      st.journal = std::make_unique<JsonLinesLog>(d / kDecisionsFile);
      batches_.emplace(id, std::move(st));
    }
  }

  static bool reviewable(const BatchState& b, std::size_t index) {
    auto it = b.ledger.rows.find(index);
    return it != b.ledger.rows.end() && it->second.status == JobStatus::pending_review;
  }

  static std::string review_status(const BatchState& b, std::size_t index) {
    auto it = b.effective.find(index);
    if (it == b.effective.end()) return "pending";
    return it->second == Verdict::accept ? "accepted" : "rejected";
  }

  static Json counts(const BatchState& b) {
    std::size_t pending = 0, accepted = 0, rejected = 0, det = 0, failed = 0;
    for (const auto& [i, r] : b.ledger.rows) {
      if (r.status == JobStatus::rejected_by_detector) ++det;
      else if (r.status == JobStatus::failed) ++failed;
      else {
        const auto s = review_status(b, i);
        (s == "pending" ? pending : s == "accepted" ? accepted : rejected)++;
      }
    }
    return Json{{"id", b.ledger.plan.batch_id},   {"target", b.ledger.plan.target}, {"n_images", b.ledger.plan.n_images},
                {"candidates", b.ledger.plan.candidates()}, {"pending", pending},   {"accepted", accepted},
                {"rejected", rejected},             {"rejected_by_detector", det},  {"failed", failed}};
  }

  static DiscardList discards(const BatchState& b) {
    DiscardList d{b.ledger.plan.batch_id, {}};
    for (const auto& [i, v] : b.effective)
      if (v == Verdict::reject) d.rejected.insert(i);
    return d;
  }

  Response list_images(const BatchState& b, const Request& rq) const {
    const auto q = rq.query.find("status");
    const std::string want = q == rq.query.end() ? "pending" : q->second;
    if (want != "pending" && want != "accepted" && want != "rejected" && want != "all")
      return error(400, "status must be pending, accepted, rejected or all");
    std::size_t page = 0, page_size = 50;
    if (auto p = rq.query.find("page"); p != rq.query.end()) {
      auto v = parse_index(p->second);
      if (!v) return error(400, "bad page");
      page = *v;
    }
    if (auto p = rq.query.find("page_size"); p != rq.query.end()) {
      auto v = parse_index(p->second);
      if (!v || *v == 0) return error(400, "bad page_size");
      page_size = *v;
    }
    std::vector<Json> items;
    for (const auto& [i, r] : b.ledger.rows) {
      if (r.status != JobStatus::pending_review) continue;
      const auto s = review_status(b, i);
      if (want != "all" && s != want) continue;
      items.push_back(Json{{"index", i},
                           {"status", s},
                           {"url", "/img/" + b.ledger.plan.batch_id + "/" + std::to_string(i) + ".png"},
                           {"seed", r.seed},
                           {"target", r.spec.target_attribute},
                           {"choices", r.spec.choices},
                           {"implied", r.spec.implied},
                           {"positive", r.spec.positive}});
    }
    const std::size_t total = items.size();
    const std::size_t from = std::min(total, page * page_size), to = std::min(total, from + page_size);
    return json(Json{{"items", std::vector<Json>(items.begin() + std::ptrdiff_t(from), items.begin() + std::ptrdiff_t(to))},
                     {"total", total},
                     {"page", page},
                     {"page_size", page_size}});
  }

  Response image(const BatchState& b, const std::string& file) const {
    if (!file.ends_with(".png")) return error(404, "not found");
    auto idx = parse_index(file.substr(0, file.size() - 4));
    if (!idx || !reviewable(b, *idx)) return error(404, "unknown image");
    const auto p = b.dir / b.ledger.rows.at(*idx).image;
    std::ifstream in(p, std::ios::binary);
    if (!in) return error(404, "image file missing");
    return {200, "image/png", std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>())};
  }

  Response post_decision(BatchState& b, const Request& rq) {
    Json j;
    try {
      j = Json::parse(rq.body);
    } catch (const Json::parse_error&) {
      return error(400, "malformed JSON body");
    }
    if (!j.is_object() || !j.contains("index") || !j["index"].is_number_unsigned())
      return error(400, "body needs a non-negative integer 'index'");
    const auto index = j["index"].get<std::size_t>();
    if (!reviewable(b, index)) return error(404, "no reviewable image at index " + std::to_string(index));
    const auto vs = j.contains("verdict") && j["verdict"].is_string() ? j["verdict"].get<std::string>() : std::string{};
    const auto v = parse_verdict(vs);
    if (!v) return error(409, "verdict must be 'accept' or 'reject'");
    ReviewDecision d{b.ledger.plan.batch_id, index, *v, utc_timestamp(),
                     j.contains("reviewer") && j["reviewer"].is_string() ? j["reviewer"].get<std::string>() : ""};
    b.journal->append(to_json(d));
    b.effective[index] = *v;
    b.history.push_back(std::move(d));
    return json(counts(b));
  }

  Response static_file(const std::string& path) const {
    if (static_dir_.empty()) return error(404, "not found");
    auto rel = std::filesystem::path(path == "/" ? "index.html" : path.substr(1)).lexically_normal();
    if (rel.empty() || rel.is_absolute() || rel.begin()->string() == "..") return error(404, "not found");
    const auto p = static_dir_ / rel;
    std::ifstream in(p, std::ios::binary);
    if (!in || std::filesystem::is_directory(p)) return error(404, "not found");
    const auto ext = p.extension().string();
    const std::string type = ext == ".html" ? "text/html" : ext == ".js" ? "text/javascript" : ext == ".css" ? "text/css"
                             : ext == ".png" ? "image/png" : ext == ".json" ? "application/json" : "application/octet-stream";
    return {200, type, std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>())};
  }

  Response route(const Request& rq) {
    const auto seg = segments(rq.path);
    if (seg.size() >= 2 && seg[0] == "api" && seg[1] == "batches") {
      if (seg.size() == 2) {
        if (rq.method != "GET") return error(405, "method not allowed");
        std::unique_lock lock(mu_);
        rescan_locked();
        Json arr = Json::array();
        for (const auto& [id, b] : batches_) arr.push_back(counts(b));
        return json(arr);
      }
      if (seg.size() != 4) return error(404, "not found");
      if (rq.method == "POST" && seg[3] == "decisions") {
        std::unique_lock lock(mu_);
        auto it = batches_.find(seg[2]);
        if (it == batches_.end()) return error(404, "unknown batch '" + seg[2] + "'");
        return post_decision(it->second, rq);
      }
      if (rq.method != "GET") return error(405, "method not allowed");
      std::shared_lock lock(mu_);
      auto it = batches_.find(seg[2]);
      if (it == batches_.end()) return error(404, "unknown batch '" + seg[2] + "'");
      const auto& b = it->second;
      if (seg[3] == "images") return list_images(b, rq);
      if (seg[3] == "discards") return {200, "application/json", format_discards(discards(b))};
      if (seg[3] == "decisions") {
        Json arr = Json::array();
        for (const auto& d : b.history) arr.push_back(to_json(d));
        return json(arr);
      }
      if (seg[3] == "summary") return json(counts(b));
      return error(404, "not found");
    }
    if (seg.size() == 3 && seg[0] == "img") {
      if (rq.method != "GET") return error(405, "method not allowed");
      std::shared_lock lock(mu_);
      auto it = batches_.find(seg[1]);
      if (it == batches_.end()) return error(404, "unknown batch '" + seg[1] + "'");
      return image(it->second, seg[2]);
    }
    if (rq.method == "GET") return static_file(rq.path);
    return error(404, "not found");
  }

  std::filesystem::path root_;
  std::filesystem::path static_dir_;
  std::map<std::string, BatchState> batches_;
  mutable std::shared_mutex mu_;
};

// Serves a ReviewService over HTTP. Blocks until stop() is called from another thread.
class ReviewHttpServer {
 public:
  explicit ReviewHttpServer(ReviewService& svc) : svc_(svc) {
    auto adapt = [this](const httplib::Request& hr, httplib::Response& res) {
      Request rq{hr.method, hr.path, {}, hr.body};
      for (const auto& [k, v] : hr.params) rq.query[k] = v;
      const auto r = svc_.handle(rq);
      res.status = r.status;
      res.set_content(r.body, r.content_type);
    };
    server_.Get(".*", adapt);
    server_.Post(".*", adapt);
  }

  bool bind(const std::string& host, int port) { return server_.bind_to_port(host, port); }
  int bind_any(const std::string& host) { return server_.bind_to_any_port(host); }
  bool listen() { return server_.listen_after_bind(); }
  void stop() { server_.stop(); }
  void wait_until_ready() { server_.wait_until_ready(); }

 private:
  ReviewService& svc_;
  httplib::Server server_;
};

}  // namespace paraug
