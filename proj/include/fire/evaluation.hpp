#pragma once

#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <map>
#include <optional>
#include <regex>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_set>
#include <utility>
#include <vector>

#include <fcntl.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <boost/multiprecision/cpp_int.hpp>

#include "fire/errors.hpp"
#include "fire/parallel.hpp"
#include "fire/rng.hpp"
#include "fire/sample_pool.hpp"

extern char** environ;

namespace fire {

// ---------------------------------------------------------------------------
// Answers
// ---------------------------------------------------------------------------

inline std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n\f\v");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n\f\v");
  return std::string(s.substr(first, last - first + 1));
}

// Trims whitespace. Plain decimal numbers are rewritten to a canonical string
// without touching floating point: sign dropped for zero, leading integer
// zeros and trailing fraction zeros removed ("+003.50" -> "3.5", "3.0" -> "3").
inline std::string canonicalize_answer(std::string_view raw) {
  std::string s = trim(raw);
  static const std::regex numeric(R"(^([+-]?)(\d*)(?:\.(\d*))?$)");
  std::smatch m;
  if (!std::regex_match(s, m, numeric) || (m[2].length() == 0 && m[3].length() == 0)) return s;

  std::string integer = m[2].str();
  std::string fraction = m[3].str();
  integer.erase(0, std::min(integer.find_first_not_of('0'), integer.size()));
  if (integer.empty()) integer = "0";
  while (!fraction.empty() && fraction.back() == '0') fraction.pop_back();

  std::string out = integer;
  if (!fraction.empty()) out += "." + fraction;
  if (m[1].str() == "-" && out != "0") out = "-" + out;
  return out;
}

class AnswerExtractor {
 public:
  enum class Mode { regex, last_number, passthrough };

  // Pattern must have exactly one capture group; the last match wins.
  static AnswerExtractor from_regex(const std::string& pattern) {
    AnswerExtractor e(Mode::regex);
    try {
      e.pattern_ = std::regex(pattern);
    } catch (const std::regex_error& err) {
      throw ConfigError("invalid answer regex '" + pattern + "': " + err.what());
    }
    if (e.pattern_.mark_count() != 1)
      throw ConfigError("answer regex must have exactly one capture group: " + pattern);
    e.source_ = pattern;
    return e;
  }
  static AnswerExtractor last_number() { return AnswerExtractor(Mode::last_number); }
  static AnswerExtractor passthrough() { return AnswerExtractor(Mode::passthrough); }

  // nullopt = unparseable.
  std::optional<std::string> extract(std::string_view text) const {
    switch (mode_) {
      case Mode::passthrough: {
        std::string t = trim(text);
        if (t.empty()) return std::nullopt;
        return t;
      }
      case Mode::last_number: {
        static const std::regex number(R"([-+]?(?:\d{1,3}(?:,\d{3})+|\d+)(?:\.\d+)?)");
        std::optional<std::string> last;
        const std::string s(text);
        for (auto it = std::sregex_iterator(s.begin(), s.end(), number); it != std::sregex_iterator(); ++it) {
          std::string hit = it->str();
          std::erase(hit, ',');
          last = std::move(hit);
        }
        return last;
      }
      case Mode::regex: {
        std::optional<std::string> last;
        const std::string s(text);
        for (auto it = std::sregex_iterator(s.begin(), s.end(), pattern_); it != std::sregex_iterator(); ++it)
          last = (*it)[1].str();
        return last;
      }
    }
    return std::nullopt;
  }

  Mode mode() const noexcept { return mode_; }
  const std::string& pattern() const noexcept { return source_; }

 private:
  explicit AnswerExtractor(Mode mode) : mode_(mode) {}

  Mode mode_;
  std::regex pattern_;
  std::string source_;
};

// ---------------------------------------------------------------------------
// Checkers
// ---------------------------------------------------------------------------

class Checker {
 public:
  virtual ~Checker() = default;
  virtual Verdict check(const std::string& problem_id, const std::string& answer) const = 0;
};

// Compares canonicalized answers against canonicalized references.
// Unknown problem ids yield Verdict::error.
class ExactMatchChecker : public Checker {
 public:
  ExactMatchChecker() = default;
  explicit ExactMatchChecker(const std::map<std::string, std::string>& references) {
    for (const auto& [id, ref] : references) add(id, ref);
  }

  void add(const std::string& problem_id, const std::string& reference) {
    references_[problem_id] = canonicalize_answer(reference);
  }

  Verdict check(const std::string& problem_id, const std::string& answer) const override {
    auto it = references_.find(problem_id);
    if (it == references_.end()) return Verdict::error;
    return canonicalize_answer(answer) == it->second ? Verdict::correct : Verdict::incorrect;
  }

 private:
  std::map<std::string, std::string> references_;
};

inline constexpr std::chrono::milliseconds kDefaultCheckerTimeout{10000};

// Runs `argv... <problem_id> <answer>` without a shell; stdin/stdout/stderr are
// /dev/null. Exit status 0 = correct, other exit status = incorrect, killed by
// a signal or past the timeout = error. Per-problem commands override the default.
class CommandChecker : public Checker {
 public:
  explicit CommandChecker(std::vector<std::string> default_command,
                          std::chrono::milliseconds timeout = kDefaultCheckerTimeout)
      : default_(std::move(default_command)), timeout_(timeout) {
    if (timeout_.count() <= 0) throw ConfigError("checker timeout must be positive");
  }

  void set_command(const std::string& problem_id, std::vector<std::string> command) {
    overrides_[problem_id] = std::move(command);
  }

  Verdict check(const std::string& problem_id, const std::string& answer) const override {
    const std::vector<std::string>* command = &default_;
    if (auto it = overrides_.find(problem_id); it != overrides_.end()) command = &it->second;
    if (command->empty()) throw CheckerError("no checker command for problem '" + problem_id + "'");

    std::vector<std::string> args = *command;
    args.push_back(problem_id);
    args.push_back(answer);
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    argv.push_back(nullptr);

    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    for (int fd : {0, 1, 2})
      posix_spawn_file_actions_addopen(&actions, fd, "/dev/null", fd == 0 ? O_RDONLY : O_WRONLY, 0);
    pid_t pid = 0;
    const int rc = posix_spawnp(&pid, argv[0], &actions, nullptr, argv.data(), environ);
    posix_spawn_file_actions_destroy(&actions);
    if (rc != 0)
      throw CheckerError("cannot spawn checker '" + args[0] + "': " + std::strerror(rc));

    const auto deadline = std::chrono::steady_clock::now() + timeout_;
    int status = 0;
    for (;;) {
      const pid_t done = waitpid(pid, &status, WNOHANG);
      if (done == pid) break;
      if (done < 0) throw CheckerError("waitpid failed for checker '" + args[0] + "'");
      if (std::chrono::steady_clock::now() >= deadline) {
        kill(pid, SIGKILL);
        waitpid(pid, &status, 0);
        return Verdict::error;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(2));
    }
    if (WIFEXITED(status)) return WEXITSTATUS(status) == 0 ? Verdict::correct : Verdict::incorrect;
    return Verdict::error;
  }

 private:
  std::vector<std::string> default_;
  std::map<std::string, std::vector<std::string>> overrides_;
  std::chrono::milliseconds timeout_;
};

// Extracts answers and verdicts for every record. Failed generations get
// Verdict::error, unparseable answers Verdict::incorrect without a checker call.
inline void score_pool(SamplePool& pool, const AnswerExtractor& extractor, const Checker& checker,
                       std::size_t workers = 1) {
  pool.answers.assign(pool.records.size(), std::nullopt);
  pool.verdicts.assign(pool.records.size(), Verdict::incorrect);
  parallel_for(pool.records.size(), workers, [&](std::size_t i) {
    const auto& rec = pool.records[i];
    if (!rec.error.empty()) {
      pool.verdicts[i] = Verdict::error;
      return;
    }
    pool.answers[i] = extractor.extract(rec.text);
    if (pool.answers[i]) pool.verdicts[i] = checker.check(pool.problem_id, *pool.answers[i]);
  });
}

// ---------------------------------------------------------------------------
// pass@n
// ---------------------------------------------------------------------------

namespace detail {

inline boost::multiprecision::cpp_int binomial(std::size_t n, std::size_t k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  boost::multiprecision::cpp_int result = 1;
  for (std::size_t i = 1; i <= k; ++i) {
    result *= n - k + i;
    result /= i;
  }
  return result;
}

}  // namespace detail

// 1 - C(N-C, n) / C(N, n), evaluated exactly and rounded once to double.
inline double pass_at_n_exact(std::size_t total, std::size_t correct, std::size_t n) {
  if (correct > total) throw ArgumentError("correct count exceeds pool size");
  if (n == 0 || n > total)
    throw ArgumentError("n must be in [1, N]; got n = " + std::to_string(n) +
                        ", N = " + std::to_string(total));
  if (correct == 0) return 0.0;
  if (n > total - correct) return 1.0;
  using boost::multiprecision::cpp_rational;
  const cpp_rational miss(detail::binomial(total - correct, n), detail::binomial(total, n));
  return (cpp_rational(1) - miss).convert_to<double>();
}

inline double pass_at_n_exact(const SamplePool& pool, std::size_t n) {
  if (!pool.scored()) throw ArgumentError("pool '" + pool.problem_id + "' is not scored");
  return pass_at_n_exact(pool.size(), pool.correct_count(), n);
}

struct PassStat {
  double mean = 0.0;
  double stddev = 0.0;  // population stddev across repetitions; 0 for the exact method
  std::size_t repetitions = 0;
};

inline constexpr std::size_t kDefaultRepetitions = 10;

// Each repetition draws a uniform n-subset (without replacement) from every
// problem's pool, scores 1 if any member is correct, and averages over
// problems. Returns mean and population stddev of that dataset score across
// repetitions. Subset draws use stream derive_seed(derive_seed(seed, r), j).
inline PassStat pass_at_n_resampled(std::span<const SamplePool> pools, std::size_t n,
                                    std::size_t repetitions, std::uint64_t seed) {
  if (pools.empty()) throw ArgumentError("no pools to evaluate");
  if (repetitions == 0) throw ArgumentError("repetitions must be >= 1");
  for (const auto& pool : pools) {
    if (!pool.scored()) throw ArgumentError("pool '" + pool.problem_id + "' is not scored");
    if (n == 0 || n > pool.size())
      throw ArgumentError("n must be in [1, N]; got n = " + std::to_string(n) +
                          ", N = " + std::to_string(pool.size()));
  }

  std::vector<double> scores(repetitions);
  std::vector<std::size_t> index;
  for (std::size_t r = 0; r < repetitions; ++r) {
    const std::uint64_t rep_seed = derive_seed(seed, r);
    double hits = 0.0;
    for (std::size_t j = 0; j < pools.size(); ++j) {
      const auto& verdicts = pools[j].verdicts;
      index.resize(verdicts.size());
      for (std::size_t i = 0; i < index.size(); ++i) index[i] = i;
      RngStream rng(derive_seed(rep_seed, j));
      bool any = false;
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t pick = i + static_cast<std::size_t>(rng.next_below(index.size() - i));
        std::swap(index[i], index[pick]);
        any = any || verdicts[index[i]] == Verdict::correct;
      }
      hits += any ? 1.0 : 0.0;
    }
    scores[r] = hits / static_cast<double>(pools.size());
  }

  PassStat stat;
  stat.repetitions = repetitions;
  for (double s : scores) stat.mean += s;
  stat.mean /= static_cast<double>(repetitions);
  double var = 0.0;
  for (double s : scores) var += (s - stat.mean) * (s - stat.mean);
  stat.stddev = std::sqrt(var / static_cast<double>(repetitions));
  return stat;
}

inline PassStat pass_at_n_resampled(const SamplePool& pool, std::size_t n, std::size_t repetitions,
                                    std::uint64_t seed) {
  return pass_at_n_resampled(std::span<const SamplePool>(&pool, 1), n, repetitions, seed);
}

enum class PassMethod { exact, resampled };

inline const char* to_string(PassMethod m) { return m == PassMethod::exact ? "exact" : "resampled"; }

struct PassAtNReport {
  PassMethod method = PassMethod::exact;
  std::map<std::size_t, PassStat> by_n;
};

// Dataset-level pass@n for each n. Exact: mean over problems of the
// closed form (stddev 0, repetitions 0).
inline PassAtNReport pass_at_n_report(std::span<const SamplePool> pools, std::span<const std::size_t> ns,
                                      PassMethod method, std::size_t repetitions = kDefaultRepetitions,
                                      std::uint64_t seed = 0) {
  if (pools.empty()) throw ArgumentError("no pools to evaluate");
  PassAtNReport report;
  report.method = method;
  for (std::size_t n : ns) {
    if (method == PassMethod::resampled) {
      report.by_n[n] = pass_at_n_resampled(pools, n, repetitions, seed);
      continue;
    }
    PassStat stat;
    for (const auto& pool : pools) stat.mean += pass_at_n_exact(pool, n);
    stat.mean /= static_cast<double>(pools.size());
    report.by_n[n] = stat;
  }
  return report;
}

// ---------------------------------------------------------------------------
// Effective answers
// ---------------------------------------------------------------------------

// Distinct canonical answers; all unparseable answers share one bucket.
inline std::size_t effective_answers(const SamplePool& pool) {
  if (pool.records.empty()) throw ArgumentError("effective answers of an empty pool");
  if (pool.answers.size() != pool.records.size())
    throw ArgumentError("pool '" + pool.problem_id + "' has no extracted answers");
  std::unordered_set<std::string> distinct;
  bool unparseable = false;
  for (const auto& a : pool.answers) {
    if (a) distinct.insert(canonicalize_answer(*a));
    else unparseable = true;
  }
  return distinct.size() + (unparseable ? 1 : 0);
}

struct EAReport {
  std::vector<std::pair<std::string, std::size_t>> per_problem;
  double mean = 0.0;
};

inline EAReport effective_answers_report(std::span<const SamplePool> pools) {
  if (pools.empty()) throw ArgumentError("no pools to evaluate");
  EAReport report;
  for (const auto& pool : pools) report.per_problem.emplace_back(pool.problem_id, effective_answers(pool));
  for (const auto& [id, ea] : report.per_problem) report.mean += static_cast<double>(ea);
  report.mean /= static_cast<double>(pools.size());
  return report;
}

}  // namespace fire
