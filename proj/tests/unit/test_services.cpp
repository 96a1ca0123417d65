#include <gtest/gtest.h>

#include <atomic>
#include <thread>

#include "httplib.h"
#include "paraug/orchestrator.hpp"
#include "testing.hpp"

using namespace paraug;

namespace {

// httplib server on an ephemeral loopback port, torn down with the object.
struct Loopback {
  httplib::Server server;
  int port = 0;
  std::thread th;

  void start() {
    port = server.bind_to_any_port("127.0.0.1");
    ASSERT_GT(port, 0);
    th = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port); }
  ~Loopback() {
    server.stop();
    if (th.joinable()) th.join();
  }
};

RetryPolicy no_sleep(int n = 5) {
  RetryPolicy r;
  r.max_attempts = n;
  r.sleep = nullptr;
  return r;
}

GenerationJob small_job(std::uint64_t seed = 9) {
  GenerationJob j;
  j.spec.seed = seed;
  j.width = 96;
  j.height = 32;
  j.job_id = "b-000001";
  return j;
}

std::string gradient_png(const Json& job) {
  const auto bytes = encode_png(mock_gradient(job.at("seed").get<std::uint64_t>(), job.at("width").get<std::size_t>(),
                                              job.at("height").get<std::size_t>()));
  return {bytes.begin(), bytes.end()};
}

ServiceErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const ServiceError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no ServiceError";
  return ServiceErrorKind::connection;
}

}  // namespace

TEST(HttpDiffusion, SynchronousReply) {
  Loopback lb;
  Json seen;
  lb.server.Post("/generate", [&](const httplib::Request& rq, httplib::Response& res) {
    seen = Json::parse(rq.body);
    res.set_content(gradient_png(seen), "image/png");
  });
  lb.start();
  HttpDiffusionClient c(lb.url());
  const auto r = submit_job(small_job(), c, no_sleep());
  EXPECT_EQ(r.image.width, 96u);
  EXPECT_EQ(r.image.height, 32u);
  EXPECT_EQ(r.png, encode_png(mock_gradient(9, 96, 32)));
  EXPECT_EQ(seen["steps"], 28);
  EXPECT_EQ(seen["cfg"], 4.5);
  EXPECT_EQ(seen["sampler"], "dpmpp_2m");
  EXPECT_EQ(seen["scheduler"], "sgm_uniform");
  EXPECT_EQ(seen["job_id"], "b-000001");
  EXPECT_EQ(seen["seed"], 9);
}

TEST(HttpDiffusion, AcceptedThenPolled) {
  Loopback lb;
  Json job;
  std::atomic<int> polls{0};
  lb.server.Post("/generate", [&](const httplib::Request& rq, httplib::Response& res) {
    job = Json::parse(rq.body);
    res.status = 202;
    res.set_content(R"({"id": "j1"})", "application/json");
  });
  lb.server.Get("/result/j1", [&](const httplib::Request&, httplib::Response& res) {
    if (polls.fetch_add(1) < 2) {
      res.status = 202;
      return;
    }
    res.set_content(gradient_png(job), "image/png");
  });
  lb.start();
  HttpDiffusionClient c(lb.url(), std::chrono::milliseconds(1));
  const auto r = submit_job(small_job(4), c, no_sleep());
  EXPECT_EQ(r.png, encode_png(mock_gradient(4, 96, 32)));
  EXPECT_EQ(polls.load(), 3);
}

TEST(HttpDiffusion, ServerErrorsAreRetried) {
  Loopback lb;
  std::atomic<int> calls{0};
  lb.server.Post("/generate", [&](const httplib::Request& rq, httplib::Response& res) {
    if (calls.fetch_add(1) < 2) {
      res.status = 503;
      res.set_content(R"({"error": "busy"})", "application/json");
      return;
    }
    res.set_content(gradient_png(Json::parse(rq.body)), "image/png");
  });
  lb.start();
  HttpDiffusionClient c(lb.url());
  const auto r = submit_job(small_job(), c, no_sleep());
  EXPECT_EQ(r.attempts, 3);
}

TEST(HttpDiffusion, ClientErrorIsNotRetried) {
  Loopback lb;
  std::atomic<int> calls{0};
  lb.server.Post("/generate", [&](const httplib::Request&, httplib::Response& res) {
    calls++;
    res.status = 422;
    res.set_content(R"({"error": "bad sampler"})", "application/json");
  });
  lb.start();
  HttpDiffusionClient c(lb.url());
  try {
    submit_job(small_job(), c, no_sleep());
    FAIL();
  } catch (const ServiceError& e) {
    EXPECT_EQ(e.kind(), ServiceErrorKind::service);
    EXPECT_NE(std::string(e.what()).find("bad sampler"), std::string::npos);
  }
  EXPECT_EQ(calls.load(), 1);
}

TEST(HttpDiffusion, MalformedReplies) {
  Loopback lb;
  lb.server.Post("/generate", [&](const httplib::Request& rq, httplib::Response& res) {
    const auto j = Json::parse(rq.body);
    if (j["job_id"] == "notpng") res.set_content("hello", "text/plain");
    if (j["job_id"] == "noid") {
      res.status = 202;
      res.set_content("{}", "application/json");
    }
    if (j["job_id"] == "wrongsize") {
      auto k = j;
      k["width"] = 10;
      res.set_content(gradient_png(k), "image/png");
    }
  });
  lb.start();
  HttpDiffusionClient c(lb.url());
  auto job = small_job();
  job.job_id = "notpng";
  EXPECT_EQ(kind_of([&] { submit_job(job, c, no_sleep()); }), ServiceErrorKind::malformed_response);
  job.job_id = "noid";
  EXPECT_EQ(kind_of([&] { submit_job(job, c, no_sleep()); }), ServiceErrorKind::malformed_response);
  job.job_id = "wrongsize";
  EXPECT_EQ(kind_of([&] { submit_job(job, c, no_sleep()); }), ServiceErrorKind::dimension_mismatch);
}

TEST(HttpDiffusion, ConnectionRefused) {
  int port;
  {
    Loopback lb;
    lb.start();
    port = lb.port;
  }
  HttpDiffusionClient c("http://127.0.0.1:" + std::to_string(port));
  int attempts = 0;
  try {
    submit_job(small_job(), c, no_sleep(3), &attempts);
    FAIL();
  } catch (const ServiceError& e) {
    EXPECT_EQ(e.kind(), ServiceErrorKind::connection);
    EXPECT_TRUE(e.transient());
  }
  EXPECT_EQ(attempts, 3);
}

TEST(HttpDetector, BoxesAndCrop) {
  Loopback lb;
  std::string content_type;
  lb.server.Post("/detect", [&](const httplib::Request& rq, httplib::Response& res) {
    content_type = rq.get_header_value("Content-Type");
    const auto img = decode_png(std::vector<std::uint8_t>(rq.body.begin(), rq.body.end()));
    res.set_content(Json::array({Json{{"x", 2}, {"y", 1}, {"w", 5}, {"h", 7}, {"confidence", 0.4}},
                                 Json{{"x", 10}, {"y", 3}, {"w", 20}, {"h", long(img.height)}, {"confidence", 0.8}}})
                        .dump(),
                    "application/json");
  });
  lb.start();
  HttpDetectorClient d(lb.url());
  const auto img = mock_gradient(3, 96, 32);
  const auto out = crop_person(img, d, no_sleep());
  ASSERT_TRUE(out);
  // Box runs past the bottom edge and is clamped.
  EXPECT_EQ(out->width, 20u);
  EXPECT_EQ(out->height, 29u);
  EXPECT_EQ(out->at(0, 0, 0), img.at(10, 3, 0));
  EXPECT_EQ(content_type, "image/png");
}

TEST(HttpDetector, EmptyAndMalformed) {
  Loopback lb;
  std::atomic<int> mode{0};
  lb.server.Post("/detect", [&](const httplib::Request&, httplib::Response& res) {
    const char* bodies[] = {R"({"boxes": []})", R"([{"x": 1}])", "nope", R"({"x": 1})",
                            R"([{"x":0,"y":0,"w":1,"h":1,"confidence":2}])"};
    res.set_content(bodies[mode.load()], "application/json");
  });
  lb.start();
  HttpDetectorClient d(lb.url());
  const auto img = mock_gradient(3, 16, 16);
  EXPECT_FALSE(crop_person(img, d, no_sleep()));
  for (int m = 1; m <= 4; ++m) {
    mode = m;
    EXPECT_EQ(kind_of([&] { crop_person(img, d, no_sleep()); }), ServiceErrorKind::malformed_response) << m;
  }
}

TEST(HttpPipeline, BatchAgainstLoopbackServices) {
  Loopback diff, det;
  diff.server.Post("/generate", [&](const httplib::Request& rq, httplib::Response& res) {
    res.set_content(gradient_png(Json::parse(rq.body)), "image/png");
  });
  det.server.Post("/detect", [&](const httplib::Request& rq, httplib::Response& res) {
    const auto img = decode_png(std::vector<std::uint8_t>(rq.body.begin(), rq.body.end()));
    Json boxes = Json::array();
    for (const auto& b : MockDetector::centre_figure()(img))
      boxes.push_back(Json{{"x", b.x}, {"y", b.y}, {"w", b.w}, {"h", b.h}, {"confidence", b.confidence}});
    res.set_content(Json{{"boxes", boxes}}.dump(), "application/json");
  });
  diff.start();
  det.start();
  fx::TempDir a, b;
  const auto plan = plan_augmentation(3, "hs-BaldHead", 100, 100, 1.0);
  BatchOptions o;
  o.retry = no_sleep();
  o.job.width = 348;
  o.job.height = 128;
  DegradeParams p;
  p.noise_width = p.noise_height = 64;
  const auto table = WildcardTable::load(default_wildcards_path());
  auto hd = make_diffusion(diff.url());
  auto hdet = make_detector(det.url());
  const auto l = run_generation_batch(plan, PromptTemplate{}, table, *hd, *hdet, p, a.path(), o);
  EXPECT_EQ(l.indices_with(JobStatus::pending_review).size(), 3u);
  MockDiffusion md;
  MockDetector mdet(MockDetector::centre_figure());
  run_generation_batch(plan, PromptTemplate{}, table, md, mdet, p, b.path(), o);
  for (std::size_t i = 0; i < 3; ++i)
    EXPECT_EQ(read_file_bytes(a.path() / "images" / image_name(i)), read_file_bytes(b.path() / "images" / image_name(i)));
}
