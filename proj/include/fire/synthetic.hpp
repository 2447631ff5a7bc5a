#pragma once

/*
 * Table-model benchmarks with exactly known behaviour.
 *
 * Mode benchmark: the first generated token picks one of `modes` solution
 * modes, the second token is the answer that mode leads to, then <eos>.
 * Every problem has exactly two correct modes. Mode 0 gets a large first-step
 * logit, so regular sampling keeps returning to it, but it is correct only on
 * "easy" problems. Wrong mode i always answers i + 1, correct modes answer 42.
 *
 * Sentence benchmark: three sentences "sK_<choice> ." followed by the answer.
 * Each sentence offers one correct choice and `wrong_choices` wrong ones; the
 * answer is 42 only if all three choices were correct. The reference solution
 * "s1_ok . s2_ok . s3_ok . 42" supplies guaranteed-correct prefixes.
 */

#include <cstddef>
#include <string>
#include <vector>

#include "fire/errors.hpp"
#include "fire/grid.hpp"
#include "fire/logit_pipeline.hpp"
#include "fire/model_source.hpp"

namespace fire::synthetic {

struct Benchmark {
  TableModel model;
  std::vector<Problem> problems;
};

namespace detail {

// Logits over `vocab_size` with only `token` kept (probability 1).
inline LogitVector only(std::size_t vocab_size, TokenId token) {
  std::vector<double> scores(vocab_size, 0.0);
  std::vector<std::uint8_t> kept(vocab_size, 0);
  kept[token] = 1;
  return LogitVector(std::move(scores), std::move(kept));
}

}  // namespace detail

struct ModeBenchmarkOptions {
  std::size_t problems = 200;
  std::size_t modes = 8;
  double dominant_logit = 4.0;      // first-step logit of mode 0; other modes get 0
  std::size_t easy_period = 5;      // problem j is easy iff j % easy_period < easy_count
  std::size_t easy_count = 2;
};

inline std::string mode_name(std::size_t i) { return "mode_" + std::string(1, static_cast<char>('a' + i)); }

// Correct modes of problem j: {0, 1 + j % (modes-1)} when easy, otherwise the
// (j % C(modes-1, 2))-th pair drawn from modes 1..modes-1.
inline std::vector<std::size_t> correct_modes(const ModeBenchmarkOptions& o, std::size_t j) {
  if (j % o.easy_period < o.easy_count) return {0, 1 + j % (o.modes - 1)};
  std::vector<std::vector<std::size_t>> pairs;
  for (std::size_t a = 1; a < o.modes; ++a)
    for (std::size_t b = a + 1; b < o.modes; ++b) pairs.push_back({a, b});
  return pairs[j % pairs.size()];
}

inline Benchmark make_mode_benchmark(const ModeBenchmarkOptions& o = {}) {
  if (o.modes < 3 || o.modes > 26) throw ConfigError("mode benchmark needs 3..26 modes");
  if (o.problems == 0 || o.easy_period == 0 || o.easy_count > o.easy_period)
    throw ConfigError("invalid mode benchmark options");

  std::vector<std::string> vocab{"<eos>"};
  const TokenId first_mode = static_cast<TokenId>(vocab.size());
  for (std::size_t i = 0; i < o.modes; ++i) vocab.push_back(mode_name(i));
  const TokenId correct_answer = static_cast<TokenId>(vocab.size());
  vocab.push_back("42");
  const TokenId first_wrong = static_cast<TokenId>(vocab.size());
  for (std::size_t i = 0; i < o.modes; ++i) vocab.push_back(std::to_string(i + 1));
  const TokenId first_prompt = static_cast<TokenId>(vocab.size());
  for (std::size_t j = 0; j < o.problems; ++j) vocab.push_back("Q" + std::to_string(j));

  const std::size_t v = vocab.size();
  TableModel model(vocab, 0, detail::only(v, 0));

  std::vector<double> mode_scores(v, 0.0);
  std::vector<std::uint8_t> mode_kept(v, 0);
  for (std::size_t i = 0; i < o.modes; ++i) mode_kept[first_mode + i] = 1;
  mode_scores[first_mode] = o.dominant_logit;
  const LogitVector mode_logits(mode_scores, mode_kept);

  Benchmark bench{std::move(model), {}};
  for (std::size_t j = 0; j < o.problems; ++j) {
    const TokenId prompt = static_cast<TokenId>(first_prompt + j);
    bench.model.set({prompt}, mode_logits);
    const auto good = correct_modes(o, j);
    for (std::size_t i = 0; i < o.modes; ++i) {
      const bool ok = std::find(good.begin(), good.end(), i) != good.end();
      const TokenId answer = ok ? correct_answer : static_cast<TokenId>(first_wrong + i);
      bench.model.set({prompt, static_cast<TokenId>(first_mode + i)}, detail::only(v, answer));
    }
    Problem p;
    p.id = "mode-" + std::to_string(j);
    p.prompt = "Q" + std::to_string(j);
    p.answer = "42";
    bench.problems.push_back(std::move(p));
  }
  return bench;
}

struct SentenceBenchmarkOptions {
  std::size_t problems = 50;
  std::size_t wrong_choices = 3;
  double correct_logit = 2.5;  // wrong choices get 0
  // flagged_step of problem j cycles through these (0, 2, 4 = sentence starts).
  std::vector<std::size_t> flagged_steps{2, 4};
};

inline constexpr std::size_t kSentences = 3;

inline std::string sentence_choice(std::size_t sentence, std::size_t choice) {
  return "s" + std::to_string(sentence + 1) + "_" + (choice == 0 ? std::string("ok") : "bad" + std::to_string(choice));
}

inline Benchmark make_sentence_benchmark(const SentenceBenchmarkOptions& o = {}) {
  if (o.problems == 0 || o.wrong_choices == 0) throw ConfigError("invalid sentence benchmark options");
  const std::size_t choices = o.wrong_choices + 1;

  std::vector<std::string> vocab{"<eos>", ".", "42", "7"};
  const TokenId dot = 1, right = 2, wrong = 3;
  std::vector<std::vector<TokenId>> ids(kSentences);
  for (std::size_t s = 0; s < kSentences; ++s)
    for (std::size_t c = 0; c < choices; ++c) {
      ids[s].push_back(static_cast<TokenId>(vocab.size()));
      vocab.push_back(sentence_choice(s, c));
    }
  for (std::size_t j = 0; j < o.problems; ++j) vocab.push_back("S" + std::to_string(j));
  const std::size_t v = vocab.size();

  auto choice_logits = [&](std::size_t s) {
    std::vector<double> scores(v, 0.0);
    std::vector<std::uint8_t> kept(v, 0);
    for (std::size_t c = 0; c < choices; ++c) kept[ids[s][c]] = 1;
    scores[ids[s][0]] = o.correct_logit;
    return LogitVector(scores, kept);
  };

  TableModel model(vocab, 0, detail::only(v, 0));
  model.set({}, choice_logits(0));  // any prompt starts sentence 1
  for (std::size_t s = 0; s < kSentences; ++s) {
    for (std::size_t c = 0; c < choices; ++c) {
      model.set({ids[s][c]}, detail::only(v, dot));
      if (s + 1 < kSentences) model.set({ids[s][c], dot}, choice_logits(s + 1));
    }
  }
  // Answer depends on the full path.
  for (std::size_t a = 0; a < choices; ++a)
    for (std::size_t b = 0; b < choices; ++b)
      for (std::size_t c = 0; c < choices; ++c) {
        const bool ok = a == 0 && b == 0 && c == 0;
        model.set({ids[0][a], dot, ids[1][b], dot, ids[2][c], dot}, detail::only(v, ok ? right : wrong));
      }
  model.set({right}, detail::only(v, 0));
  model.set({wrong}, detail::only(v, 0));

  Benchmark bench{std::move(model), {}};
  for (std::size_t j = 0; j < o.problems; ++j) {
    Problem p;
    p.id = "sent-" + std::to_string(j);
    p.prompt = "S" + std::to_string(j);
    p.answer = "42";
    p.solution = "s1_ok . s2_ok . s3_ok . 42";
    if (!o.flagged_steps.empty()) p.flagged_step = o.flagged_steps[j % o.flagged_steps.size()];
    bench.problems.push_back(std::move(p));
  }
  return bench;
}

// Policies for the mid-sequence comparison: Regular, k-th sentence variants
// with forced correct prefixes, and the flagged-position variant.
inline std::vector<PolicySpec> mid_sequence_policies() {
  std::vector<PolicySpec> out{PolicySpec::regular()};
  for (std::size_t n = 1; n <= kSentences; ++n) {
    const char* names[] = {"1st-line", "2nd-line", "3rd-line"};
    out.push_back({names[n - 1], SentenceStart{n}, default_initial_config(), true});
  }
  out.push_back({"flagged-line", FlaggedPosition{0}, default_initial_config(), true});
  return out;
}

}  // namespace fire::synthetic
