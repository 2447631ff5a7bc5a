#pragma once

/*
 * FIRE policy: one "hot" decoding step sampled under a high-temperature
 * initial config, every other step under the regular config.
 *
 * Trigger kinds
 *   first_token            hot at step 0
 *   sentence_start(n)      hot at the first step whose generated text so far
 *                          contains at least n-1 '.' characters
 *                          (n = 1 behaves exactly like first_token)
 *   flagged_position(s)    hot at step s (caller-supplied position, e.g. the
 *                          first step a reward model flagged as wrong)
 *   never                  regular baseline
 *
 * Sentence boundaries are the literal '.' character; decimals and
 * abbreviations are not special-cased.
 */

#include <algorithm>
#include <cstddef>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "fire/errors.hpp"
#include "fire/logit_pipeline.hpp"

namespace fire {

struct FirstToken {
  friend bool operator==(const FirstToken&, const FirstToken&) = default;
};
struct SentenceStart {
  std::size_t sentence = 1;  // 1-based
  friend bool operator==(const SentenceStart&, const SentenceStart&) = default;
};
struct FlaggedPosition {
  std::size_t step = 0;
  friend bool operator==(const FlaggedPosition&, const FlaggedPosition&) = default;
};
struct Never {
  friend bool operator==(const Never&, const Never&) = default;
};

using TriggerRule = std::variant<FirstToken, SentenceStart, FlaggedPosition, Never>;

inline std::string describe(const TriggerRule& rule) {
  struct Visitor {
    std::string operator()(const FirstToken&) const { return "first_token"; }
    std::string operator()(const SentenceStart& s) const {
      return "sentence_start(" + std::to_string(s.sentence) + ")";
    }
    std::string operator()(const FlaggedPosition& f) const {
      return "flagged_position(" + std::to_string(f.step) + ")";
    }
    std::string operator()(const Never&) const { return "never"; }
  };
  return std::visit(Visitor{}, rule);
}

// Hot stage default: temperature 30 with top-k 16, no nucleus/min-p.
inline SamplingConfig default_initial_config() {
  SamplingConfig c;
  c.temperature = 30.0;
  c.top_k = 16;
  return c;
}

struct FirePolicy {
  TriggerRule trigger = FirstToken{};
  SamplingConfig initial = default_initial_config();
  SamplingConfig regular{};

  // Throws ConfigError on invalid stage configs; returns soft warnings.
  std::vector<std::string> validate() const {
    initial.validate();
    regular.validate();
    if (const auto* s = std::get_if<SentenceStart>(&trigger); s && s->sentence == 0)
      throw ConfigError("sentence_start trigger is 1-based; got 0");
    std::vector<std::string> warnings;
    if (!std::holds_alternative<Never>(trigger) && initial.temperature < regular.temperature)
      warnings.push_back("initial temperature " + std::to_string(initial.temperature) +
                         " is below regular temperature " + std::to_string(regular.temperature));
    return warnings;
  }

  static FirePolicy regular_only(const SamplingConfig& regular) {
    return FirePolicy{Never{}, default_initial_config(), regular};
  }
};

// Per-generation trigger state. Owned by exactly one generation.
struct TriggerState {
  bool consumed = false;
  friend bool operator==(const TriggerState&, const TriggerState&) = default;
};

// Idempotent; a `never` policy stays unconsumed.
inline TriggerState mark_fired(const FirePolicy& policy, TriggerState state) {
  if (!std::holds_alternative<Never>(policy.trigger)) state.consumed = true;
  return state;
}

inline bool trigger_condition(const TriggerRule& rule, std::size_t step, std::string_view text_so_far) {
  struct Visitor {
    std::size_t step;
    std::string_view text;
    bool operator()(const FirstToken&) const { return step == 0; }
    bool operator()(const SentenceStart& s) const {
      const auto dots = static_cast<std::size_t>(std::count(text.begin(), text.end(), '.'));
      return dots + 1 >= s.sentence;
    }
    bool operator()(const FlaggedPosition& f) const { return step == f.step; }
    bool operator()(const Never&) const { return false; }
  };
  return std::visit(Visitor{step, text_so_far}, rule);
}

enum class Stage { regular, hot, forced };

inline const char* to_string(Stage s) {
  switch (s) {
    case Stage::hot: return "hot";
    case Stage::forced: return "forced";
    case Stage::regular: break;
  }
  return "regular";
}

inline Stage stage_for_step(const FirePolicy& policy, const TriggerState& state, std::size_t step,
                            std::string_view text_so_far) {
  if (state.consumed) return Stage::regular;
  return trigger_condition(policy.trigger, step, text_so_far) ? Stage::hot : Stage::regular;
}

// `step` counts tokens generated so far (0 = first generated token);
// `text_so_far` is the rendered generated text, prompt excluded.
inline const SamplingConfig& config_for_step(const FirePolicy& policy, const TriggerState& state,
                                             std::size_t step, std::string_view text_so_far) {
  return stage_for_step(policy, state, step, text_so_far) == Stage::hot ? policy.initial
                                                                        : policy.regular;
}

}  // namespace fire
