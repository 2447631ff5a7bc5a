#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <thread>

#include <httplib.h>

#include "fire/generation.hpp"
#include "fire/remote_model.hpp"

using namespace fire;

namespace {

// Scripted completions server on loopback. Continuation after the prompt
// decides the returned top logprobs.
class FakeServer {
 public:
  std::atomic<int> failures_before_success{0};
  std::atomic<int> requests{0};
  std::atomic<bool> array_format{false};
  std::string last_auth;
  nlohmann::json last_body;
  std::mutex mutex;

  FakeServer() {
    server_.Post("/v1/completions", [this](const httplib::Request& req, httplib::Response& res) {
      ++requests;
      {
        std::lock_guard lock(mutex);
        last_auth = req.get_header_value("Authorization");
        last_body = nlohmann::json::parse(req.body);
      }
      if (failures_before_success > 0) {
        --failures_before_success;
        res.status = 503;
        return;
      }
      const std::string prompt = nlohmann::json::parse(req.body)["prompt"];
      std::vector<std::pair<std::string, double>> top;
      if (prompt.size() < 6) {
        top = {{" yes", std::log(0.6)}, {" no", std::log(0.3)}, {"<|endoftext|>", std::log(0.1)}};
      } else {
        top = {{"<|endoftext|>", 0.0}};
      }
      nlohmann::json logprobs;
      if (array_format) {
        nlohmann::json content = nlohmann::json::array();
        for (const auto& [t, lp] : top) content.push_back({{"token", t}, {"logprob", lp}});
        logprobs = {{"content", {{{"token", top[0].first}, {"top_logprobs", content}}}}};
      } else {
        nlohmann::json obj = nlohmann::json::object();
        for (const auto& [t, lp] : top) obj[t] = lp;
        logprobs = {{"top_logprobs", {obj}}};
      }
      res.set_content(nlohmann::json{{"choices", {{{"text", top[0].first}, {"logprobs", logprobs}}}}}.dump(),
                      "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeServer() {
    server_.stop();
    thread_.join();
  }

  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1/completions"; }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

RemoteOptions options_for(const FakeServer& s) {
  RemoteOptions o;
  o.url = s.url();
  o.timeout = std::chrono::milliseconds(2000);
  return o;
}

}  // namespace

TEST(RemoteModel, ReturnedSetIsTheVocabulary) {
  FakeServer server;
  const RemoteModel model(options_for(server));
  const auto prompt = model.tokenize("Q:");
  const auto logits = model.next_logits(prompt);
  EXPECT_EQ(logits.kept_count(), 3u);
  EXPECT_FALSE(logits.is_kept(prompt[0]));
  const auto d = build_distribution(logits, SamplingConfig{});
  EXPECT_NEAR(d[model.end_token()], 0.1, 1e-12);
  EXPECT_EQ(model.token_text(model.end_token()), "<|endoftext|>");

  std::lock_guard lock(server.mutex);
  EXPECT_EQ(server.last_body["prompt"], "Q:");
  EXPECT_EQ(server.last_body["max_tokens"], 1);
  EXPECT_EQ(server.last_body["logprobs"], 20);
  EXPECT_EQ(server.last_body["temperature"], 1.0);
  EXPECT_TRUE(server.last_auth.empty());
}

TEST(RemoteModel, ArrayResponseFormat) {
  FakeServer server;
  server.array_format = true;
  const RemoteModel model(options_for(server));
  const auto logits = model.next_logits(model.tokenize("Q:"));
  EXPECT_EQ(logits.kept_count(), 3u);
}

TEST(RemoteModel, GenerationIsDeterministic) {
  FakeServer server;
  const RemoteModel a(options_for(server));
  const RemoteModel b(options_for(server));
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto ra = generate(a, a.tokenize("Q:"), FirePolicy{}, seed, 8);
    const auto rb = generate(b, b.tokenize("Q:"), FirePolicy{}, seed, 8);
    EXPECT_EQ(ra.text, rb.text);
    EXPECT_EQ(ra.finish, FinishReason::end_token);
  }
}

TEST(RemoteModel, RetriesThenSucceeds) {
  FakeServer server;
  server.failures_before_success = 2;
  const RemoteModel model(options_for(server));
  EXPECT_NO_THROW(model.next_logits(model.tokenize("Q:")));
  EXPECT_EQ(server.requests.load(), 3);
}

TEST(RemoteModel, TransportErrorAfterRetries) {
  FakeServer server;
  server.failures_before_success = 100;
  RemoteOptions o = options_for(server);
  o.max_attempts = 2;
  const RemoteModel model(o);
  try {
    generate(model, model.tokenize("Q:"), FirePolicy{}, 0, 4);
    FAIL() << "expected TransportError";
  } catch (const TransportError& e) {
    EXPECT_EQ(e.attempts(), 2);
    EXPECT_EQ(e.step(), 0u);
    EXPECT_NE(std::string(e.what()).find("503"), std::string::npos);
  }
}

TEST(RemoteModel, UnreachableServer) {
  RemoteOptions o;
  o.url = "http://127.0.0.1:1/v1/completions";
  o.max_attempts = 1;
  o.timeout = std::chrono::milliseconds(300);
  const RemoteModel model(o);
  EXPECT_THROW(model.next_logits(model.tokenize("x")), TransportError);
}

TEST(RemoteModel, AuthHeader) {
  FakeServer server;
  RemoteOptions o = options_for(server);
  o.auth_token = "sekrit";
  const RemoteModel model(o);
  model.next_logits(model.tokenize("Q:"));
  std::lock_guard lock(server.mutex);
  EXPECT_EQ(server.last_auth, "Bearer sekrit");
}

TEST(RemoteModel, OptionValidation) {
  RemoteOptions o;
  o.url = "127.0.0.1:8000";
  EXPECT_THROW(RemoteModel{o}, ConfigError);
  o.url = "http://127.0.0.1:8000";
  o.width = 0;
  EXPECT_THROW(RemoteModel{o}, ConfigError);
  o.width = 5;
  o.max_in_flight = 0;
  EXPECT_THROW(RemoteModel{o}, ConfigError);
}

TEST(RemoteModel, ConcurrentPool) {
  FakeServer server;
  RemoteOptions o = options_for(server);
  o.max_in_flight = 2;
  const RemoteModel model(o);
  PoolOptions po;
  po.workers = 6;
  const auto prompt = model.tokenize("Q:");
  const auto pool = generate_pool(model, prompt, FirePolicy{}, 9, 24, 8, po);
  const auto serial = generate_pool(model, prompt, FirePolicy{}, 9, 24, 8);
  for (std::size_t i = 0; i < pool.size(); ++i) {
    EXPECT_TRUE(pool.records[i].error.empty()) << pool.records[i].error;
    EXPECT_EQ(pool.records[i].text, serial.records[i].text);
  }
}
