#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fire/errors.hpp"
#include "fire/fire_policy.hpp"
#include "fire/generation_record.hpp"
#include "fire/logit_pipeline.hpp"
#include "fire/model_source.hpp"
#include "fire/parallel.hpp"
#include "fire/rng.hpp"
#include "fire/sample_pool.hpp"

namespace fire {

struct GenerateOptions {
  // Emitted verbatim before any sampling; counts toward max_tokens and the
  // generated text, consumes no randomness.
  std::vector<TokenId> forced;
  bool trace = false;
};

// Inverse CDF over the support in token-index order. `u` must lie in [0, 1).
inline TokenId sample_token(const Distribution& dist, double u) {
  const auto probs = dist.probs();
  double cumulative = 0.0;
  std::size_t last = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    cumulative += probs[i];
    last = i;
    if (u < cumulative) return static_cast<TokenId>(i);
  }
  return static_cast<TokenId>(last);  // u landed in the rounding gap below 1
}

// Consumes exactly one value from the stream.
inline TokenId sample_token(const Distribution& dist, RngStream& rng) {
  return sample_token(dist, rng.next_double());
}

inline GenerationRecord generate(const ModelSource& model, std::span<const TokenId> prompt,
                                 const FirePolicy& policy, std::uint64_t seed,
                                 std::size_t max_tokens = kDefaultMaxTokens,
                                 const GenerateOptions& options = {}) {
  if (max_tokens == 0) throw ArgumentError("max_tokens must be >= 1");
  for (TokenId t : options.forced) {
    if (t == model.end_token()) throw ArgumentError("forced prefix may not contain the end token");
    if (t >= model.vocab_size()) throw ArgumentError("forced prefix token out of range");
  }
  policy.validate();

  GenerationRecord rec;
  rec.prompt.assign(prompt.begin(), prompt.end());
  rec.seed = seed;

  std::vector<TokenId> context(prompt.begin(), prompt.end());
  RngStream rng(seed);
  TriggerState state;
  const std::string sep = model.separator();

  auto emit = [&](TokenId token, Stage stage) {
    rec.tokens.push_back(token);
    rec.stages.push_back(stage);
    if (token == model.end_token()) return;
    if (!rec.text.empty()) rec.text += sep;
    rec.text += model.token_text(token);
    context.push_back(token);
  };

  for (std::size_t step = 0; step < max_tokens; ++step) {
    if (step < options.forced.size()) {
      emit(options.forced[step], Stage::forced);
      if (options.trace) rec.trace.emplace_back();
      continue;
    }

    const Stage stage = stage_for_step(policy, state, step, rec.text);
    const SamplingConfig& config = stage == Stage::hot ? policy.initial : policy.regular;

    LogitVector logits;
    try {
      logits = model.next_logits(context);
    } catch (const TransportError& e) {
      throw TransportError(e.detail(), step, e.attempts());
    }
    Distribution dist = build_distribution(logits, config);
    const TokenId token = sample_token(dist, rng);
    if (options.trace) rec.trace.emplace_back(std::move(dist));

    if (stage == Stage::hot) {
      state = mark_fired(policy, state);
      rec.hot_step = step;
    }
    emit(token, stage);
    if (token == model.end_token()) {
      rec.finish = FinishReason::end_token;
      break;
    }
  }
  rec.trigger_unfired = !std::holds_alternative<Never>(policy.trigger) && !state.consumed;
  return rec;
}

struct PoolOptions {
  std::size_t workers = 1;
  GenerateOptions generate;
};

// N generations; sample i uses stream derive_seed(base_seed, i), so it is the
// same record whether produced here or by a lone generate() call. Failed
// samples stay in place with finish == error and the message in `error`.
// The returned pool is unscored and has an empty problem id.
inline SamplePool generate_pool(const ModelSource& model, std::span<const TokenId> prompt,
                                const FirePolicy& policy, std::uint64_t base_seed, std::size_t count,
                                std::size_t max_tokens = kDefaultMaxTokens,
                                const PoolOptions& options = {}) {
  if (count == 0) throw ArgumentError("pool size must be >= 1");
  policy.validate();
  SamplePool pool;
  auto& records = pool.records;
  records.resize(count);
  parallel_for(count, options.workers, [&](std::size_t i) {
    const std::uint64_t seed = derive_seed(base_seed, i);
    try {
      records[i] = generate(model, prompt, policy, seed, max_tokens, options.generate);
    } catch (const std::exception& e) {
      GenerationRecord failed;
      failed.prompt.assign(prompt.begin(), prompt.end());
      failed.seed = seed;
      failed.finish = FinishReason::error;
      failed.error = e.what();
      records[i] = std::move(failed);
    }
  });
  return pool;
}

}  // namespace fire
