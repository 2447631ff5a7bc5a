#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fire/fire_policy.hpp"
#include "fire/logit_pipeline.hpp"

namespace fire {

inline constexpr std::size_t kDefaultMaxTokens = 512;

enum class FinishReason { end_token, max_tokens, error };

inline const char* to_string(FinishReason r) {
  switch (r) {
    case FinishReason::end_token: return "end_token";
    case FinishReason::max_tokens: return "max_tokens";
    case FinishReason::error: break;
  }
  return "error";
}

struct GenerationRecord {
  std::vector<TokenId> prompt;
  std::vector<TokenId> tokens;  // everything emitted, including a final end token
  std::vector<Stage> stages;    // aligned with tokens
  std::string text;             // rendered tokens, end token excluded
  std::uint64_t seed = 0;
  std::optional<std::size_t> hot_step;
  bool trigger_unfired = false;  // trigger configured but its position was never reached
  FinishReason finish = FinishReason::max_tokens;
  std::string error;

  // Filled only when GenerateOptions::trace is set; nullopt on forced steps.
  std::vector<std::optional<Distribution>> trace;

  std::size_t hot_steps() const {
    return static_cast<std::size_t>(std::count(stages.begin(), stages.end(), Stage::hot));
  }

  bool operator==(const GenerationRecord&) const = default;
};

}  // namespace fire
