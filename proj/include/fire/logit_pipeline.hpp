#pragma once

/*
 * Logit transforms: raw scores -> normalized sampling distribution.
 *
 * The only supported order is
 *
 *   temperature -> top-k -> softmax -> top-p -> min-p -> renormalize
 *
 * Filtered tokens are tracked with an explicit mask rather than -inf, so no
 * arithmetic ever touches an infinity or NaN. Ties at a top-k / top-p cut go
 * to the lower token index.
 */

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fire/errors.hpp"

namespace fire {

using TokenId = std::uint32_t;

class LogitVector {
 public:
  LogitVector() = default;

  // All tokens kept. Throws SourceError on empty input or non-finite scores.
  explicit LogitVector(std::vector<double> scores)
      : scores_(std::move(scores)), kept_(scores_.size(), 1) {
    validate();
  }

  // kept[i] == 0 marks token i as masked. Masked scores are ignored (stored as 0).
  LogitVector(std::vector<double> scores, std::vector<std::uint8_t> kept)
      : scores_(std::move(scores)), kept_(std::move(kept)) {
    if (kept_.size() != scores_.size()) throw SourceError("logit mask length mismatch");
    for (std::size_t i = 0; i < scores_.size(); ++i)
      if (!kept_[i]) scores_[i] = 0.0;
    validate();
  }

  std::size_t size() const noexcept { return scores_.size(); }
  double score(std::size_t i) const { return scores_[i]; }
  bool is_kept(std::size_t i) const { return kept_[i] != 0; }
  std::span<const double> scores() const noexcept { return scores_; }
  std::span<const std::uint8_t> kept() const noexcept { return kept_; }

  std::size_t kept_count() const noexcept {
    return static_cast<std::size_t>(std::count(kept_.begin(), kept_.end(), std::uint8_t{1}));
  }

  void mask(std::size_t i) {
    kept_[i] = 0;
    scores_[i] = 0.0;
  }

  friend bool operator==(const LogitVector&, const LogitVector&) = default;

 private:
  void validate() const {
    if (scores_.empty()) throw SourceError("logit vector must have at least one entry");
    bool any = false;
    for (std::size_t i = 0; i < scores_.size(); ++i) {
      if (!std::isfinite(scores_[i]))
        throw SourceError("non-finite logit at index " + std::to_string(i));
      any = any || kept_[i];
    }
    if (!any) throw SourceError("logit vector has every token masked");
  }

  std::vector<double> scores_;
  std::vector<std::uint8_t> kept_;
};

struct SamplingConfig {
  double temperature = 1.0;
  std::optional<std::size_t> top_k;  // nullopt = disabled
  std::optional<double> top_p;       // nullopt = disabled
  double min_p = 0.0;                // 0 = disabled

  void validate() const {
    if (!std::isfinite(temperature) || temperature <= 0.0)
      throw ConfigError("temperature must be a positive finite number, got " +
                        std::to_string(temperature));
    if (top_k && *top_k == 0) throw ConfigError("top_k must be >= 1 when enabled");
    if (top_p && !(*top_p > 0.0 && *top_p <= 1.0))
      throw ConfigError("top_p must lie in (0, 1], got " + std::to_string(*top_p));
    if (!(min_p >= 0.0 && min_p < 1.0))
      throw ConfigError("min_p must lie in [0, 1), got " + std::to_string(min_p));
  }

  friend bool operator==(const SamplingConfig&, const SamplingConfig&) = default;
};

class Distribution {
 public:
  // Tolerance used when accepting caller-built distributions.
  static constexpr double kInputTolerance = 1e-9;

  // Validates: non-empty, entries finite and >= 0, sum within kInputTolerance of 1.
  static Distribution from_probs(std::vector<double> probs) {
    if (probs.empty()) throw ArgumentError("distribution must be non-empty");
    double sum = 0.0;
    bool any = false;
    for (double p : probs) {
      if (!std::isfinite(p) || p < 0.0)
        throw ArgumentError("distribution entries must be finite and non-negative");
      sum += p;
      any = any || p > 0.0;
    }
    if (!any) throw ArgumentError("distribution has empty support");
    if (std::abs(sum - 1.0) > kInputTolerance)
      throw ArgumentError("distribution does not sum to 1 (sum = " + std::to_string(sum) + ")");
    return Distribution(std::move(probs));
  }

  std::size_t size() const noexcept { return probs_.size(); }
  double operator[](std::size_t i) const { return probs_[i]; }
  std::span<const double> probs() const noexcept { return probs_; }

  std::vector<TokenId> support() const {
    std::vector<TokenId> out;
    for (std::size_t i = 0; i < probs_.size(); ++i)
      if (probs_[i] > 0.0) out.push_back(static_cast<TokenId>(i));
    return out;
  }

  friend bool operator==(const Distribution&, const Distribution&) = default;

 private:
  explicit Distribution(std::vector<double> probs) : probs_(std::move(probs)) {}

  friend Distribution softmax(const LogitVector&);
  friend Distribution renormalized(std::vector<double>);

  std::vector<double> probs_;
};

// Divides the kept entries by the sum; used after every filtering stage.
inline Distribution renormalized(std::vector<double> probs) {
  double sum = 0.0;
  for (double p : probs) sum += p;
  if (!(sum > 0.0)) throw InvariantError("renormalization of an empty support");
  for (double& p : probs) p /= sum;
  return Distribution(std::move(probs));
}

inline LogitVector apply_temperature(LogitVector logits, double temperature) {
  if (!std::isfinite(temperature) || temperature <= 0.0)
    throw ConfigError("temperature must be a positive finite number, got " +
                      std::to_string(temperature));
  std::vector<double> scaled(logits.scores().begin(), logits.scores().end());
  for (std::size_t i = 0; i < scaled.size(); ++i)
    if (logits.is_kept(i)) scaled[i] /= temperature;
  return LogitVector(std::move(scaled), {logits.kept().begin(), logits.kept().end()});
}

namespace detail {

// Kept token indices, highest score first, lower index first among ties.
inline std::vector<std::size_t> ranked_kept(const LogitVector& logits) {
  std::vector<std::size_t> order;
  order.reserve(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i)
    if (logits.is_kept(i)) order.push_back(i);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return logits.score(a) > logits.score(b);
  });
  return order;
}

}  // namespace detail

inline LogitVector top_k_filter(LogitVector logits, std::size_t k) {
  if (k == 0) throw ConfigError("top_k must be >= 1");
  if (k >= logits.kept_count()) return logits;
  const auto order = detail::ranked_kept(logits);
  for (std::size_t r = k; r < order.size(); ++r) logits.mask(order[r]);
  return logits;
}

// Max-subtracted softmax over kept tokens; masked tokens get probability 0.
inline Distribution softmax(const LogitVector& logits) {
  double max_score = -HUGE_VAL;
  for (std::size_t i = 0; i < logits.size(); ++i)
    if (logits.is_kept(i)) max_score = std::max(max_score, logits.score(i));

  std::vector<double> probs(logits.size(), 0.0);
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (!logits.is_kept(i)) continue;
    probs[i] = std::exp(logits.score(i) - max_score);
    sum += probs[i];
  }
  for (double& p : probs) p /= sum;
  return Distribution(std::move(probs));
}

inline Distribution top_p_filter(const Distribution& dist, double p) {
  if (!(p > 0.0 && p <= 1.0)) throw ConfigError("top_p must lie in (0, 1], got " + std::to_string(p));
  if (p == 1.0) return dist;

  const auto probs = dist.probs();
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < probs.size(); ++i)
    if (probs[i] > 0.0) order.push_back(i);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return probs[a] > probs[b]; });

  std::vector<double> kept(probs.size(), 0.0);
  double cumulative = 0.0;
  for (std::size_t idx : order) {
    kept[idx] = probs[idx];
    cumulative += probs[idx];
    if (cumulative >= p) break;
  }
  return renormalized(std::move(kept));
}

inline Distribution min_p_filter(const Distribution& dist, double min_p) {
  if (!(min_p >= 0.0 && min_p < 1.0))
    throw ConfigError("min_p must lie in [0, 1), got " + std::to_string(min_p));
  if (min_p == 0.0) return dist;

  const auto probs = dist.probs();
  const double threshold = min_p * *std::max_element(probs.begin(), probs.end());
  std::vector<double> kept(probs.begin(), probs.end());
  for (double& q : kept)
    if (q < threshold) q = 0.0;
  return renormalized(std::move(kept));
}

inline Distribution build_distribution(const LogitVector& logits, const SamplingConfig& config) {
  config.validate();
  LogitVector scaled = apply_temperature(logits, config.temperature);
  if (config.top_k) scaled = top_k_filter(std::move(scaled), *config.top_k);
  Distribution dist = softmax(scaled);
  if (config.top_p) dist = top_p_filter(dist, *config.top_p);
  dist = min_p_filter(dist, config.min_p);
  return renormalized({dist.probs().begin(), dist.probs().end()});
}

}  // namespace fire
