#include <gtest/gtest.h>

#include <chartrl/http_clients.hpp>

#include <atomic>
#include <functional>
#include <thread>

namespace {

using namespace chartrl;

// In-process HTTP server on an ephemeral port, stopped on destruction.
class FakeServer {
 public:
  FakeServer() { port_ = server_.bind_to_any_port("127.0.0.1"); }
  ~FakeServer() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  httplib::Server& server() { return server_; }

  void start() {
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  std::string url(const std::string& path = {}) const { return "http://127.0.0.1:" + std::to_string(port_) + path; }

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
};

ImageBytes tiny_png() {
  Raster r(3, 2);
  r.set(1, 1, 10, 20, 30);
  return encode_png(r);
}

class RendererService : public ::testing::Test {
 protected:
  void SetUp() override {
    fake.server().Post("/svc/render", [this](const httplib::Request& req, httplib::Response& res) {
      last_request = nlohmann::json::parse(req.body);
      const std::string code = last_request["code"];
      nlohmann::json body;
      if (code == "ok") {
        body = {{"outcome", "ok"}, {"image_b64", base64_encode(tiny_png())}, {"duration_ms", 12}};
      } else if (code == "loop") {
        body = {{"outcome", "timeout"}, {"error_message", nullptr}, {"duration_ms", 20000}};
      } else if (code == "crash") {
        body = {{"outcome", "runtime_error"}, {"error_message", "NameError: name 'q' is not defined"}};
      } else if (code == "syntax") {
        body = {{"outcome", "parse_error"}, {"error_message", "SyntaxError"}};
      } else if (code == "500") {
        res.status = 500;
        return;
      } else if (code == "html") {
        res.set_content("<html>oops</html>", "text/html");
        return;
      } else if (code == "weird") {
        body = {{"outcome", "exploded"}};
      } else if (code == "noimage") {
        body = {{"outcome", "ok"}};
      } else if (code == "badb64") {
        body = {{"outcome", "ok"}, {"image_b64", "@@@"}};
      }
      res.set_content(body.dump(), "application/json");
    });
    fake.server().Get("/svc/health", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(R"({"status":"ok","workers":4,"version":"1.2.0"})", "application/json");
    });
    fake.start();
  }

  HttpRenderer renderer(int timeout_ms = 20000) { return HttpRenderer(RendererConfig{fake.url("/svc/"), timeout_ms, 120}); }

  FakeServer fake;
  nlohmann::json last_request;
};

TEST_F(RendererService, OkCarriesTheDecodedPng) {
  auto r = renderer(5000);
  const RenderStatus st = r.render(PlotScript{"ok"});
  ASSERT_TRUE(st.ok());
  EXPECT_EQ(*st.image, tiny_png());
  EXPECT_EQ(st.duration_ms, 12);
  EXPECT_EQ(last_request["timeout_ms"], 5000);
  EXPECT_EQ(last_request["dpi"], 120);
  EXPECT_EQ(decode_png(*st.image).width, 3);
}

TEST_F(RendererService, ScriptFailuresAreStatusesNotErrors) {
  auto r = renderer();
  const auto t = r.render(PlotScript{"loop"});
  EXPECT_EQ(t.outcome, RenderOutcome::timeout);
  EXPECT_FALSE(t.image.has_value());
  EXPECT_EQ(t.duration_ms, 20000);
  const auto c = r.render(PlotScript{"crash"});
  EXPECT_EQ(c.outcome, RenderOutcome::runtime_error);
  EXPECT_NE(c.error_message.find("NameError"), std::string::npos);
  EXPECT_EQ(r.render(PlotScript{"syntax"}).outcome, RenderOutcome::parse_error);
}

TEST_F(RendererService, ProtocolFailuresAreInfrastructureErrors) {
  auto r = renderer();
  for (const char* code : {"500", "html", "weird", "noimage", "badb64"}) {
    EXPECT_THROW(r.render(PlotScript{code}), RendererUnavailable) << code;
  }
}

TEST_F(RendererService, Health) {
  const auto h = renderer().health();
  EXPECT_EQ(h.status, "ok");
  EXPECT_EQ(h.workers, 4);
  EXPECT_EQ(h.version, "1.2.0");
}

TEST(RendererClient, UnreachableAndBadConfig) {
  // Nothing listens on port 1, so connections are refused at once.
  HttpRenderer r(RendererConfig{"http://127.0.0.1:1", 1000, 100});
  EXPECT_THROW(r.render(PlotScript{"ok"}), RendererUnavailable);
  EXPECT_THROW(r.health(), RendererUnavailable);
  EXPECT_THROW(HttpRenderer(RendererConfig{"http://x", 500, 100}), ValidationError);
  EXPECT_THROW(HttpRenderer(RendererConfig{"http://x", 200000, 100}), ValidationError);
  EXPECT_THROW(HttpRenderer(RendererConfig{"http://x", 1000, 0}), ValidationError);
}

TEST(SplitUrl, Shapes) {
  auto e = split_url("http://host:8080/base/");
  EXPECT_EQ(e.origin, "http://host:8080");
  EXPECT_EQ(e.path, "/base");
  e = split_url("https://judge.example");
  EXPECT_EQ(e.origin, "https://judge.example");
  EXPECT_EQ(e.path, "");
  EXPECT_THROW(split_url("host:8080"), ValidationError);
  EXPECT_THROW(split_url("ftp://host"), ValidationError);
  EXPECT_THROW(split_url("http://"), ValidationError);
  EXPECT_THROW(split_url(""), ValidationError);
}

class JudgeEndpoint : public ::testing::Test {
 protected:
  void SetUp() override {
    fake.server().Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      ++hits;
      last_body = req.body;
      const auto payload = nlohmann::json::parse(req.body);
      const std::string model = payload["model"];
      if (model == "down") {
        res.status = 503;
      } else if (model == "raw") {
        res.set_content(verdict_json({1, 2, 3, 4, 5, 6}), "text/plain");
      } else if (model == "slow") {
        std::this_thread::sleep_for(std::chrono::milliseconds(600));
        res.set_content("late", "text/plain");
      } else {
        const nlohmann::json reply = {
            {"choices", {{{"message", {{"role", "assistant"}, {"content", "Scores: " + verdict_json({9, 8, 7, 6, 5, 4})}}}}}}};
        res.set_content(reply.dump(), "application/json");
      }
    });
    fake.server().Post("/quality", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(R"({"choices":[{"message":{"content":"{\"quality\": 8}"}}]})", "application/json");
    });
    fake.start();
  }

  JudgeConfig cfg(const std::string& model) {
    JudgeConfig c;
    c.endpoint = fake.url("/v1/chat/completions");
    c.model_name = model;
    c.max_retries = 1;
    return c;
  }

  FakeServer fake;
  std::atomic<int> hits{0};
  std::string last_body;
  ImageBytes img = tiny_png();
};

TEST_F(JudgeEndpoint, ChatCompletionRoundTrip) {
  HttpJudgeClient client(cfg("judge-large"));
  const auto c = cfg("judge-large");
  const VisualResult r = visual_reward(img, RenderStatus::success(img), client, c);
  ASSERT_TRUE(r.reward.has_value());
  EXPECT_DOUBLE_EQ(*r.reward, 39.0 / 60.0);
  EXPECT_EQ(last_body, build_judge_prompt(img, img, c).payload);
  const auto body = nlohmann::json::parse(last_body);
  EXPECT_EQ(body["model"], "judge-large");
}

TEST_F(JudgeEndpoint, RawBodyFallsThroughToTheParser) {
  HttpJudgeClient client(cfg("raw"));
  EXPECT_EQ(parse_judge_response(client.complete(build_judge_prompt(img, img, cfg("raw")))).sum(), 21);
}

TEST_F(JudgeEndpoint, ServerErrorsRetryThenLeaveUnscored) {
  HttpJudgeClient client(cfg("down"));
  EXPECT_THROW(client.complete(build_judge_prompt(img, img, cfg("down"))), JudgeUnavailable);
  hits = 0;
  const VisualResult r = visual_reward(img, RenderStatus::success(img), client, cfg("down"));
  EXPECT_TRUE(r.unscored());
  EXPECT_EQ(hits.load(), 2);
}

TEST_F(JudgeEndpoint, RequestTimeoutIsUnavailable) {
  auto c = cfg("slow");
  c.request_timeout_ms = 150;
  HttpJudgeClient client(c);
  EXPECT_THROW(client.complete(build_judge_prompt(img, img, c)), JudgeUnavailable);
}

TEST_F(JudgeEndpoint, QualityJudgeOverHttp) {
  JudgeConfig c;
  c.endpoint = fake.url("/quality");
  HttpJudgeClient client(c);
  ClientQualityJudge q(client, c);
  EXPECT_DOUBLE_EQ(q.quality(img, "rec1"), 0.8);
}

TEST(JudgeClient, UnreachableEndpoint) {
  JudgeConfig c;
  c.endpoint = "http://127.0.0.1:1/v1";
  c.request_timeout_ms = 500;
  HttpJudgeClient client(c);
  EXPECT_THROW(client.complete(JudgeRequest{"{}", {}, {}}), JudgeUnavailable);
  c.endpoint = "not a url";
  EXPECT_THROW(HttpJudgeClient{c}, ValidationError);
}

}  // namespace
