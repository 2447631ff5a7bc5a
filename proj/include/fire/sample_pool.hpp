#pragma once

#include <algorithm>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fire/errors.hpp"
#include "fire/generation_record.hpp"

namespace fire {

enum class Verdict { correct, incorrect, error };

inline const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::correct: return "correct";
    case Verdict::incorrect: return "incorrect";
    case Verdict::error: break;
  }
  return "error";
}

inline Verdict verdict_from_string(std::string_view s) {
  if (s == "correct") return Verdict::correct;
  if (s == "incorrect") return Verdict::incorrect;
  if (s == "error") return Verdict::error;
  throw ArgumentError("unknown verdict '" + std::string(s) + "'");
}

// N generations for one problem. After scoring, `answers` and `verdicts` are
// aligned 1:1 with `records`; nullopt answers are unparseable.
struct SamplePool {
  std::string problem_id;
  std::vector<GenerationRecord> records;
  std::vector<std::optional<std::string>> answers;
  std::vector<Verdict> verdicts;

  std::size_t size() const noexcept { return records.size(); }
  bool scored() const noexcept {
    return answers.size() == records.size() && verdicts.size() == records.size();
  }
  // Error verdicts count as incorrect.
  std::size_t correct_count() const {
    return static_cast<std::size_t>(std::count(verdicts.begin(), verdicts.end(), Verdict::correct));
  }
  std::size_t error_count() const {
    return static_cast<std::size_t>(std::count(verdicts.begin(), verdicts.end(), Verdict::error));
  }
};

}  // namespace fire
