#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "fire/evaluation.hpp"

using namespace fire;

namespace {

SamplePool pool_of(std::size_t total, std::size_t correct, std::string id = "p") {
  SamplePool pool;
  pool.problem_id = std::move(id);
  pool.records.resize(total);
  pool.answers.assign(total, std::nullopt);
  pool.verdicts.assign(total, Verdict::incorrect);
  for (std::size_t i = 0; i < correct; ++i) pool.verdicts[i] = Verdict::correct;
  return pool;
}

SamplePool pool_with_answers(std::vector<std::optional<std::string>> answers) {
  SamplePool pool = pool_of(answers.size(), 0);
  pool.answers = std::move(answers);
  return pool;
}

SamplePool pool_with_texts(std::vector<std::string> texts) {
  SamplePool pool;
  pool.problem_id = "q1";
  for (auto& t : texts) {
    GenerationRecord rec;
    rec.text = std::move(t);
    pool.records.push_back(std::move(rec));
  }
  return pool;
}

}  // namespace

TEST(PassAtNExact, Examples) {
  EXPECT_EQ(pass_at_n_exact(40, 0, 10), 0.0);
  EXPECT_EQ(pass_at_n_exact(40, 40, 1), 1.0);
  EXPECT_EQ(pass_at_n_exact(4, 1, 2), 0.5);
  // 1 - C(20,10)/C(40,10) = 1 - 184756/847660528 = 0.99978204010462074978... (40-digit evaluation)
  EXPECT_DOUBLE_EQ(pass_at_n_exact(40, 20, 10), 0.99978204010462074978);
}

TEST(PassAtNExact, ArgumentErrors) {
  EXPECT_THROW(pass_at_n_exact(4, 1, 0), ArgumentError);
  EXPECT_THROW(pass_at_n_exact(4, 1, 5), ArgumentError);
  EXPECT_THROW(pass_at_n_exact(4, 5, 2), ArgumentError);
  SamplePool unscored;
  unscored.records.resize(3);
  EXPECT_THROW(pass_at_n_exact(unscored, 1), ArgumentError);
}

TEST(PassAtNExact, NondecreasingAndMatchesEmpiricalAtN) {
  for (std::size_t total : {1u, 2u, 7u, 40u, 100u}) {
    for (std::size_t correct = 0; correct <= total; ++correct) {
      double prev = 0.0;
      for (std::size_t n = 1; n <= total; ++n) {
        const double v = pass_at_n_exact(total, correct, n);
        EXPECT_GE(v, prev);
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
        prev = v;
      }
      EXPECT_EQ(pass_at_n_exact(total, correct, total), correct > 0 ? 1.0 : 0.0);
    }
  }
}

TEST(PassAtNExact, MatchesSingleSampleRate) {
  EXPECT_DOUBLE_EQ(pass_at_n_exact(40, 13, 1), 13.0 / 40.0);
}

TEST(PassAtNResampled, DegeneratePools) {
  const auto all = pool_of(40, 40);
  const auto none = pool_of(40, 0);
  for (std::size_t n : {1u, 10u, 40u}) {
    const auto a = pass_at_n_resampled(all, n, 10, 1);
    EXPECT_EQ(a.mean, 1.0);
    EXPECT_EQ(a.stddev, 0.0);
    const auto z = pass_at_n_resampled(none, n, 10, 1);
    EXPECT_EQ(z.mean, 0.0);
    EXPECT_EQ(z.stddev, 0.0);
  }
}

TEST(PassAtNResampled, ConvergesToExact) {
  const auto pool = pool_of(40, 20);
  constexpr std::size_t reps = 10000;
  const double exact = pass_at_n_exact(40, 20, 10);
  const auto s = pass_at_n_resampled(pool, 10, reps, 77);
  const double sigma = std::sqrt(exact * (1 - exact) / reps);
  EXPECT_LT(std::abs(s.mean - exact), std::max(3 * sigma, 1.0 / reps));

  const auto low = pool_of(40, 2);
  const double exact_low = pass_at_n_exact(40, 2, 5);
  const auto sl = pass_at_n_resampled(low, 5, reps, 78);
  EXPECT_LT(std::abs(sl.mean - exact_low), 3 * sl.stddev / std::sqrt(static_cast<double>(reps)));
}

TEST(PassAtNResampled, Deterministic) {
  const auto pool = pool_of(40, 7);
  const auto a = pass_at_n_resampled(pool, 5, 100, 9);
  const auto b = pass_at_n_resampled(pool, 5, 100, 9);
  EXPECT_EQ(a.mean, b.mean);
  EXPECT_EQ(a.stddev, b.stddev);
  EXPECT_EQ(a.repetitions, 100u);
}

TEST(PassAtNResampled, ArgumentErrors) {
  const auto pool = pool_of(4, 1);
  EXPECT_THROW(pass_at_n_resampled(pool, 5, 10, 0), ArgumentError);
  EXPECT_THROW(pass_at_n_resampled(pool, 0, 10, 0), ArgumentError);
  EXPECT_THROW(pass_at_n_resampled(pool, 1, 0, 0), ArgumentError);
}

TEST(PassAtNReport, DatasetMean) {
  const std::vector<SamplePool> pools = {pool_of(4, 1, "a"), pool_of(4, 0, "b")};
  const std::vector<std::size_t> ns = {1, 2};
  const auto r = pass_at_n_report(pools, ns, PassMethod::exact);
  EXPECT_DOUBLE_EQ(r.by_n.at(1).mean, 0.125);
  EXPECT_DOUBLE_EQ(r.by_n.at(2).mean, 0.25);
  EXPECT_EQ(r.by_n.at(2).stddev, 0.0);
  const auto rr = pass_at_n_report(pools, ns, PassMethod::resampled, 10, 3);
  EXPECT_EQ(rr.by_n.at(1).repetitions, 10u);
}

TEST(EffectiveAnswers, Examples) {
  EXPECT_EQ(effective_answers(pool_with_answers({"3", "3", "4"})), 2u);
  EXPECT_EQ(effective_answers(pool_with_answers(std::vector<std::optional<std::string>>(40, "12"))), 1u);
  EXPECT_EQ(effective_answers(pool_with_answers({"3.0", "3", "4"})), 2u);
  EXPECT_EQ(effective_answers(pool_with_answers({std::nullopt, std::nullopt, "4"})), 2u);
  EXPECT_THROW(effective_answers(SamplePool{}), ArgumentError);
}

TEST(EffectiveAnswers, PermutationInvariantAndBounded) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::optional<std::string>> answers(1 + rng() % 40);
    for (auto& a : answers) {
      const auto r = rng() % 8;
      if (r == 7) a = std::nullopt;
      else a = std::to_string(r) + (rng() % 2 ? ".0" : "");
    }
    const auto ea = effective_answers(pool_with_answers(answers));
    EXPECT_GE(ea, 1u);
    EXPECT_LE(ea, answers.size());
    std::shuffle(answers.begin(), answers.end(), rng);
    EXPECT_EQ(effective_answers(pool_with_answers(answers)), ea);
  }
}

TEST(EffectiveAnswers, ReportMean) {
  std::vector<SamplePool> pools = {pool_with_answers({"1", "2"}), pool_with_answers({"1", "1"})};
  pools[0].problem_id = "a";
  pools[1].problem_id = "b";
  const auto r = effective_answers_report(pools);
  EXPECT_DOUBLE_EQ(r.mean, 1.5);
  EXPECT_EQ(r.per_problem[0], (std::pair<std::string, std::size_t>{"a", 2}));
}

TEST(Canonicalize, Numbers) {
  EXPECT_EQ(canonicalize_answer("3.0"), "3");
  EXPECT_EQ(canonicalize_answer("  +003.50 "), "3.5");
  EXPECT_EQ(canonicalize_answer("-0.0"), "0");
  EXPECT_EQ(canonicalize_answer(".5"), "0.5");
  EXPECT_EQ(canonicalize_answer("-12"), "-12");
  EXPECT_EQ(canonicalize_answer("1e5"), "1e5");
  EXPECT_EQ(canonicalize_answer(" x + 1 "), "x + 1");
  EXPECT_EQ(canonicalize_answer("."), ".");
}

TEST(AnswerExtractor, LastNumber) {
  const auto e = AnswerExtractor::last_number();
  EXPECT_EQ(e.extract("so 3 apples and 1,234.5 pears"), std::optional<std::string>("1234.5"));
  EXPECT_EQ(e.extract("answer: -7."), std::optional<std::string>("-7"));
  EXPECT_EQ(e.extract("no digits"), std::nullopt);
}

TEST(AnswerExtractor, Regex) {
  const auto e = AnswerExtractor::from_regex(R"(#### (\S+))");
  EXPECT_EQ(e.extract("work #### 5 then #### 6"), std::optional<std::string>("6"));
  EXPECT_EQ(e.extract("nothing"), std::nullopt);
  EXPECT_THROW(AnswerExtractor::from_regex("(a)(b)"), ConfigError);
  EXPECT_THROW(AnswerExtractor::from_regex("no group"), ConfigError);
  EXPECT_THROW(AnswerExtractor::from_regex("(unclosed"), ConfigError);
}

TEST(AnswerExtractor, Passthrough) {
  const auto e = AnswerExtractor::passthrough();
  EXPECT_EQ(e.extract("  def f(): pass \n"), std::optional<std::string>("def f(): pass"));
  EXPECT_EQ(e.extract("   "), std::nullopt);
}

TEST(ExactMatchChecker, PureFunctionOfCanonicalAnswer) {
  ExactMatchChecker c(std::map<std::string, std::string>{{"p1", "42"}, {"p2", "3.50"}});
  EXPECT_EQ(c.check("p1", "42"), Verdict::correct);
  EXPECT_EQ(c.check("p1", " 42.0 "), Verdict::correct);
  EXPECT_EQ(c.check("p1", "41"), Verdict::incorrect);
  EXPECT_EQ(c.check("p2", "3.5"), Verdict::correct);
  EXPECT_EQ(c.check("zz", "42"), Verdict::error);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(c.check("p1", "042"), Verdict::correct);
}

TEST(CommandChecker, ExitStatusVerdicts) {
  EXPECT_EQ(CommandChecker({"true"}).check("p", "1"), Verdict::correct);
  EXPECT_EQ(CommandChecker({"false"}).check("p", "1"), Verdict::incorrect);
  // sh -c script $0 $1 $2: answer arrives as $2.
  const CommandChecker script({"sh", "-c", "test \"$2\" = 7", "checker"});
  EXPECT_EQ(script.check("p", "7"), Verdict::correct);
  EXPECT_EQ(script.check("p", "8"), Verdict::incorrect);
}

TEST(CommandChecker, TimeoutIsError) {
  const CommandChecker slow({"sh", "-c", "sleep 5"}, std::chrono::milliseconds(100));
  const auto start = std::chrono::steady_clock::now();
  EXPECT_EQ(slow.check("p", "1"), Verdict::error);
  EXPECT_LT(std::chrono::steady_clock::now() - start, std::chrono::seconds(3));
}

TEST(CommandChecker, SignalIsError) {
  EXPECT_EQ(CommandChecker({"sh", "-c", "kill -9 $$"}).check("p", "1"), Verdict::error);
}

TEST(CommandChecker, PerProblemOverride) {
  CommandChecker c({"false"});
  c.set_command("good", {"true"});
  EXPECT_EQ(c.check("good", "x"), Verdict::correct);
  EXPECT_EQ(c.check("other", "x"), Verdict::incorrect);
}

TEST(CommandChecker, MissingBinaryThrows) {
  EXPECT_THROW(CommandChecker({"/nonexistent/checker-binary"}).check("p", "1"), CheckerError);
  EXPECT_THROW(CommandChecker({}).check("p", "1"), CheckerError);
  EXPECT_THROW(CommandChecker({"true"}, std::chrono::milliseconds(0)), ConfigError);
}

TEST(ScorePool, ExtractsAndChecks) {
  auto pool = pool_with_texts({"the answer is 42", "I think 41", "no idea", "42.0"});
  pool.records[2].error = "";
  GenerationRecord failed;
  failed.finish = FinishReason::error;
  failed.error = "boom";
  pool.records.push_back(failed);

  score_pool(pool, AnswerExtractor::last_number(), ExactMatchChecker(std::map<std::string, std::string>{{"q1", "42"}}), 3);
  ASSERT_TRUE(pool.scored());
  EXPECT_EQ(pool.verdicts,
            (std::vector<Verdict>{Verdict::correct, Verdict::incorrect, Verdict::incorrect, Verdict::correct,
                                  Verdict::error}));
  EXPECT_EQ(pool.answers[2], std::nullopt);
  EXPECT_EQ(pool.correct_count(), 2u);
  EXPECT_EQ(pool.error_count(), 1u);
  EXPECT_EQ(effective_answers(pool), 3u);
}
