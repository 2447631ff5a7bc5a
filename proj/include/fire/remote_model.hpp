#pragma once

/*
 * Model source backed by a completions-style HTTP server.
 *
 * Each step sends one request asking for a single token with temperature 1,
 * top_p 1 and `width` top logprobs, then treats the returned logprob set as
 * the whole vocabulary for that step; every other known token is masked.
 * All filtering and sampling stays on the client. The hot stage's effective
 * top-k is therefore min(k, width): this is an approximation of sampling
 * from full-vocabulary logits.
 *
 * Request  (POST <url>):
 *   {"prompt": "...", "max_tokens": 1, "logprobs": W, "temperature": 1.0,
 *    "top_p": 1.0, "n": 1, "stream": false [, "model": "..."]}
 * Accepted response shapes for the first choice:
 *   choices[0].logprobs.top_logprobs[0]          = {"tok": lp, ...}
 *   choices[0].logprobs.content[0].top_logprobs  = [{"token": "tok", "logprob": lp}, ...]
 */

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <utility>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "fire/errors.hpp"
#include "fire/logit_pipeline.hpp"
#include "fire/model_source.hpp"

namespace fire {

struct RemoteOptions {
  std::string url;  // e.g. http://127.0.0.1:8000/v1/completions
  std::chrono::milliseconds timeout{30000};
  std::optional<std::string> auth_token;
  int width = 20;
  int max_attempts = 3;
  int max_in_flight = 4;
  std::string model;  // optional "model" field
  std::string end_text = "<|endoftext|>";
};

class RemoteModel : public ModelSource {
 public:
  explicit RemoteModel(RemoteOptions options)
      : options_(std::move(options)), in_flight_(std::clamp(options_.max_in_flight, 1, kMaxInFlight)) {
    if (options_.width < 1) throw ConfigError("remote logprobs width must be >= 1");
    if (options_.max_attempts < 1) throw ConfigError("remote max_attempts must be >= 1");
    if (options_.max_in_flight < 1 || options_.max_in_flight > kMaxInFlight)
      throw ConfigError("remote max_in_flight must be in [1, 1024]");
    split_url(options_.url);
    intern(options_.end_text);
  }

  LogitVector next_logits(std::span<const TokenId> context) const override {
    std::string prompt;
    for (TokenId t : context) prompt += token_text(t);

    nlohmann::json body = {{"prompt", prompt},       {"max_tokens", 1}, {"logprobs", options_.width},
                           {"temperature", 1.0},     {"top_p", 1.0},    {"n", 1},
                           {"stream", false}};
    if (!options_.model.empty()) body["model"] = options_.model;

    const auto top = parse_top_logprobs(post(body.dump()));

    std::vector<std::pair<TokenId, double>> scored;
    scored.reserve(top.size());
    for (const auto& [text, logprob] : top) {
      if (!std::isfinite(logprob)) throw SourceError("remote returned non-finite logprob for '" + text + "'");
      scored.emplace_back(intern(text), logprob);
    }
    const std::size_t width = vocab_size();
    std::vector<double> scores(width, 0.0);
    std::vector<std::uint8_t> kept(width, 0);
    for (const auto& [id, lp] : scored) {
      scores[id] = lp;
      kept[id] = 1;
    }
    return LogitVector(std::move(scores), std::move(kept));
  }

  std::size_t vocab_size() const override {
    std::lock_guard lock(mutex_);
    return vocab_.size();
  }
  std::string token_text(TokenId id) const override {
    std::lock_guard lock(mutex_);
    return vocab_.at(id);
  }
  TokenId end_token() const override { return 0; }
  std::string separator() const override { return ""; }

  // The whole prompt becomes a single context token.
  std::vector<TokenId> tokenize(std::string_view text) const override {
    if (text.empty()) return {};
    return {intern(std::string(text))};
  }

 private:
  static constexpr int kMaxInFlight = 1024;

  void split_url(const std::string& url) {
    const auto scheme = url.find("://");
    if (scheme == std::string::npos) throw ConfigError("remote url must include a scheme: " + url);
    const auto path = url.find('/', scheme + 3);
    base_ = path == std::string::npos ? url : url.substr(0, path);
    path_ = path == std::string::npos ? "/v1/completions" : url.substr(path);
  }

  TokenId intern(const std::string& text) const {
    std::lock_guard lock(mutex_);
    auto [it, inserted] = index_.emplace(text, static_cast<TokenId>(vocab_.size()));
    if (inserted) vocab_.push_back(text);
    return it->second;
  }

  std::string post(const std::string& payload) const {
    in_flight_.acquire();
    struct Release {
      std::counting_semaphore<kMaxInFlight>& s;
      ~Release() { s.release(); }
    } release{in_flight_};

    httplib::Client client(base_);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(options_.timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(options_.timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());
    httplib::Headers headers;
    if (options_.auth_token) headers.emplace("Authorization", "Bearer " + *options_.auth_token);

    std::string last_error;
    for (int attempt = 1; attempt <= options_.max_attempts; ++attempt) {
      auto res = client.Post(path_, headers, payload, "application/json");
      if (!res) {
        last_error = "transport error: " + httplib::to_string(res.error());
      } else if (res->status == 200) {
        return res->body;
      } else if (res->status == 429 || res->status >= 500) {
        last_error = "server returned HTTP " + std::to_string(res->status);
      } else {
        throw SourceError("remote model rejected request: HTTP " + std::to_string(res->status) + ": " +
                          res->body.substr(0, 200));
      }
      if (attempt < options_.max_attempts)
        std::this_thread::sleep_for(std::chrono::milliseconds(50 * attempt));
    }
    throw TransportError(last_error, 0, options_.max_attempts);
  }

  static std::vector<std::pair<std::string, double>> parse_top_logprobs(const std::string& body) {
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception& e) {
      throw SourceError(std::string("remote response is not JSON: ") + e.what());
    }
    std::vector<std::pair<std::string, double>> out;
    try {
      const auto& logprobs = doc.at("choices").at(0).at("logprobs");
      if (logprobs.contains("top_logprobs") && !logprobs["top_logprobs"].is_null()) {
        for (const auto& item : logprobs["top_logprobs"].at(0).items())
          out.emplace_back(item.key(), item.value().get<double>());
      } else {
        for (const auto& entry : logprobs.at("content").at(0).at("top_logprobs"))
          out.emplace_back(entry.at("token").get<std::string>(), entry.at("logprob").get<double>());
      }
    } catch (const nlohmann::json::exception& e) {
      throw SourceError(std::string("remote response lacks top logprobs: ") + e.what());
    }
    if (out.empty()) throw SourceError("remote response has an empty top-logprobs set");
    // Object iteration order is alphabetical; fix a stable order by token text.
    std::sort(out.begin(), out.end());
    return out;
  }

  RemoteOptions options_;
  std::string base_;
  std::string path_;
  mutable std::mutex mutex_;
  mutable std::vector<std::string> vocab_;
  mutable std::unordered_map<std::string, TokenId> index_;
  mutable std::counting_semaphore<kMaxInFlight> in_flight_;
};

}  // namespace fire
