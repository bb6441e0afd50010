#include <gtest/gtest.h>

#include <atomic>
#include <fstream>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "kgfr/embedding.hpp"
#include "kgfr/error.hpp"
#include "kgfr/llm_client.hpp"
#include "oracles.hpp"

namespace kgfr {
namespace {

TEST(ScriptedLlm, FirstUnconsumedMatch) {
  ScriptedLlm llm({{"alpha", "one", "", false}, {"alpha", "two", "", false}, {"", "any", "", true}});
  EXPECT_EQ(llm.complete("alpha?"), "one");
  EXPECT_EQ(llm.complete("alpha!"), "two");
  EXPECT_EQ(llm.complete("alpha."), "any");
  EXPECT_EQ(llm.complete("beta"), "any");
  EXPECT_EQ(llm.calls(), 4u);
  EXPECT_EQ(llm.remaining(), 0u);
}

TEST(ScriptedLlm, ErrorsAndExhaustion) {
  ScriptedLlm llm({{"x", "", "down", false}});
  EXPECT_THROW(llm.complete("x"), LlmError);
  EXPECT_THROW(llm.complete("x"), LlmError);  // consumed; nothing left
}

TEST(ScriptedLlm, LoadsTranscript) {
  testing::TempDir dir;
  {
    std::ofstream out(dir / "t.jsonl");
    out << R"({"match": "Task: answer", "reply": "ok"})" << "\n\n"
        << R"({"match": "", "error": "nope", "repeat": true})" << "\n";
  }
  auto llm = ScriptedLlm::load(dir / "t.jsonl");
  EXPECT_EQ(llm.complete("Task: answer it"), "ok");
  EXPECT_THROW(llm.complete("Task: answer it"), LlmError);
  {
    std::ofstream out(dir / "bad.jsonl");
    out << R"({"match": "x"})" << "\n";
  }
  EXPECT_THROW(ScriptedLlm::load(dir / "bad.jsonl"), ParseError);
}

TEST(InFlightLimiter, BoundsConcurrency) {
  InFlightLimiter limiter(2);
  std::atomic<int> active{0}, peak{0};
  std::vector<std::thread> ts;
  for (int i = 0; i < 8; ++i)
    ts.emplace_back([&] {
      InFlightLimiter::Slot slot(limiter);
      const int now = ++active;
      int p = peak.load();
      while (now > p && !peak.compare_exchange_weak(p, now)) {
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
      --active;
    });
  for (auto& t : ts) t.join();
  EXPECT_LE(peak.load(), 2);
}

// Local chat/embedding endpoint that fails a configurable number of times.
class FakeServer {
 public:
  explicit FakeServer(int failures) : failures_(failures) {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      ++requests_;
      last_auth_ = req.get_header_value("Authorization");
      if (failures_-- > 0) {
        res.status = 503;
        return;
      }
      const auto body = nlohmann::json::parse(req.body);
      const std::string content = "echo: " + body["messages"][0]["content"].get<std::string>();
      res.set_content(nlohmann::json{{"choices", {{{"message", {{"role", "assistant"}, {"content", content}}}}}}}.dump(),
                      "application/json");
    });
    server_.Post("/v1/embeddings", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(R"({"data": [{"embedding": [0.5, 0.5, 0.5, 0.5]}]})", "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeServer() {
    server_.stop();
    thread_.join();
  }
  std::string base() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }
  int requests() const { return requests_; }
  std::string last_auth() const { return last_auth_; }

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<int> failures_;
  std::atomic<int> requests_{0};
  std::string last_auth_;
};

RemoteLlm::Config config_for(const FakeServer& s) {
  RemoteLlm::Config c;
  c.base_url = s.base();
  c.model = "test-model";
  c.api_key = "secret";
  c.timeout = std::chrono::milliseconds(2000);
  c.backoff = std::chrono::milliseconds(1);
  return c;
}

TEST(RemoteLlm, RetriesServerErrors) {
  FakeServer s(2);
  RemoteLlm llm(config_for(s));
  EXPECT_EQ(llm.complete("hi"), "echo: hi");
  EXPECT_EQ(s.requests(), 3);
  EXPECT_EQ(s.last_auth(), "Bearer secret");
}

TEST(RemoteLlm, GivesUpAfterBudget) {
  FakeServer s(10);
  RemoteLlm llm(config_for(s));
  EXPECT_THROW(llm.complete("hi"), LlmError);
  EXPECT_EQ(s.requests(), 3);
}

TEST(RemoteLlm, TransportFailureIsLlmError) {
  RemoteLlm::Config c;
  c.base_url = "http://127.0.0.1:1/v1";
  c.model = "m";
  c.max_retries = 0;
  c.timeout = std::chrono::milliseconds(300);
  RemoteLlm llm(c);
  EXPECT_THROW(llm.complete("hi"), LlmError);
}

TEST(RemoteLlm, RequiresConfig) { EXPECT_THROW(RemoteLlm(RemoteLlm::Config{}), ConfigError); }

TEST(RemoteEncoder, ParsesEmbeddingResponse) {
  FakeServer s(0);
  RemoteEncoder enc({s.base() + "/embeddings", "enc", "", std::chrono::milliseconds(2000), 2}, 4);
  EXPECT_EQ(enc.encode("x").vector, (std::vector<float>{0.5f, 0.5f, 0.5f, 0.5f}));
  RemoteEncoder wrong({s.base() + "/embeddings", "enc", "", std::chrono::milliseconds(2000), 2}, 8);
  EXPECT_THROW(wrong.encode("x"), ConfigError);
}

TEST(RemoteEncoder, TransportFailureIsRetryable) {
  RemoteEncoder enc({"http://127.0.0.1:1/embed", "enc", "", std::chrono::milliseconds(300), 1}, 4);
  try {
    enc.encode("x");
    FAIL();
  } catch (const ProviderError& e) {
    EXPECT_TRUE(e.retryable());
  }
}

}  // namespace
}  // namespace kgfr
