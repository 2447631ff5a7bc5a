#pragma once

/*
 * Hyperparameter grid runner: every (regular config cell x policy) pair is
 * evaluated on every problem with N samples, then scored into pass@n and
 * effective-answer statistics.
 *
 * Problem j always uses pool seed derive_seed(options.seed, j), whatever the
 * cell or policy, so Regular and FIRE rows are built from common random
 * numbers and duplicate cells reproduce identical rows.
 */

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "fire/errors.hpp"
#include "fire/evaluation.hpp"
#include "fire/fire_policy.hpp"
#include "fire/generation.hpp"
#include "fire/logit_pipeline.hpp"
#include "fire/model_source.hpp"

namespace fire {

struct Problem {
  std::string id;
  std::string prompt;
  std::optional<std::string> answer;          // reference for exact-match checking
  std::vector<std::string> checker;           // per-problem checker command
  std::optional<std::string> solution;        // reference solution, source of forced prefixes
  std::optional<std::size_t> flagged_step;    // overrides flagged_position triggers
};

struct PolicySpec {
  std::string name;
  TriggerRule trigger = FirstToken{};
  SamplingConfig initial = default_initial_config();
  // Force the reference solution up to the trigger point (mid-sequence variants).
  bool force_reference_prefix = false;

  bool is_regular() const { return std::holds_alternative<Never>(trigger); }

  static PolicySpec regular() { return {"Regular", Never{}, default_initial_config(), false}; }
  static PolicySpec fire() { return {"FIRE", FirstToken{}, default_initial_config(), false}; }
};

// Prefix of `solution` through its `sentences`-th '.' (whole text if it has fewer).
inline std::string leading_sentences(std::string_view solution, std::size_t sentences) {
  if (sentences == 0) return {};
  std::size_t seen = 0;
  for (std::size_t i = 0; i < solution.size(); ++i) {
    if (solution[i] == '.' && ++seen == sentences) return std::string(solution.substr(0, i + 1));
  }
  return std::string(solution);
}

struct GridAxes {
  std::vector<double> temperature{1.0};
  std::vector<std::optional<double>> top_p{std::nullopt};
  std::vector<std::optional<std::size_t>> top_k{std::nullopt};
  std::vector<double> min_p{0.0};

  // Cartesian product, temperature outermost then top_p, top_k, min_p.
  std::vector<SamplingConfig> cells() const {
    std::vector<SamplingConfig> out;
    for (double t : temperature)
      for (const auto& p : top_p)
        for (const auto& k : top_k)
          for (double m : min_p) {
            SamplingConfig c{t, k, p, m};
            c.validate();
            out.push_back(c);
          }
    return out;
  }
};

inline std::vector<std::size_t> default_pass_n() { return {1, 5, 10, 20, 30, 40}; }

struct GridOptions {
  std::size_t samples = 40;
  std::size_t max_tokens = kDefaultMaxTokens;
  std::uint64_t seed = 0;
  std::vector<std::size_t> pass_n = default_pass_n();
  PassMethod method = PassMethod::exact;
  std::size_t repetitions = kDefaultRepetitions;
  std::size_t workers = 1;
};

enum class CellErrorKind { none, config, source, checker, other };

struct GridRow {
  std::size_t cell_index = 0;
  SamplingConfig cell;
  std::string policy;
  PassAtNReport pass;
  double ea_mean = 0.0;
  std::size_t failed_samples = 0;   // generation errors (counted incorrect)
  std::size_t checker_errors = 0;   // error verdicts from the checker (counted incorrect)
  std::size_t unfired_triggers = 0;
  CellErrorKind error_kind = CellErrorKind::none;
  std::string error;
};

struct GridResult {
  std::size_t samples = 0;
  std::vector<std::size_t> pass_n;  // only n <= samples, ascending
  std::vector<GridRow> rows;        // cells outer, policies inner
  std::vector<std::vector<SamplePool>> pools;  // aligned with rows; empty on cell error
};

// Returns previously computed, already scored pools for a row (resume), or nullopt.
using PoolCache = std::function<std::optional<std::vector<SamplePool>>(const GridRow&)>;

// Called once per finished row, in row order.
using RowSink = std::function<void(const GridRow&, const std::vector<SamplePool>&)>;

namespace detail {

inline std::vector<TokenId> forced_prefix(const ModelSource& model, const Problem& problem,
                                          const PolicySpec& spec, const TriggerRule& trigger) {
  if (!spec.force_reference_prefix) return {};
  if (!problem.solution)
    throw ConfigError("policy '" + spec.name + "' forces a reference prefix but problem '" + problem.id +
                      "' has no solution");
  if (const auto* s = std::get_if<SentenceStart>(&trigger))
    return model.tokenize(leading_sentences(*problem.solution, s->sentence - 1));
  if (const auto* f = std::get_if<FlaggedPosition>(&trigger)) {
    auto tokens = model.tokenize(*problem.solution);
    if (tokens.size() > f->step) tokens.resize(f->step);
    return tokens;
  }
  return {};
}

inline void summarize(GridRow& row, const std::vector<SamplePool>& pools, const GridOptions& options,
                      std::span<const std::size_t> ns) {
  row.pass = pass_at_n_report(pools, ns, options.method, options.repetitions, options.seed);
  row.ea_mean = effective_answers_report(pools).mean;
  for (const auto& pool : pools) {
    for (std::size_t i = 0; i < pool.size(); ++i) {
      if (!pool.records[i].error.empty()) ++row.failed_samples;
      else if (pool.verdicts[i] == Verdict::error) ++row.checker_errors;
      if (pool.records[i].trigger_unfired) ++row.unfired_triggers;
    }
  }
}

}  // namespace detail

// Pools for one (cell, policy) pair over all problems, generated and scored.
inline std::vector<SamplePool> evaluate_cell(const ModelSource& model, std::span<const Problem> problems,
                                             const SamplingConfig& cell, const PolicySpec& spec,
                                             const AnswerExtractor& extractor, const Checker& checker,
                                             const GridOptions& options) {
  std::vector<SamplePool> pools;
  pools.reserve(problems.size());
  for (std::size_t j = 0; j < problems.size(); ++j) {
    const Problem& problem = problems[j];
    FirePolicy policy{spec.trigger, spec.initial, cell};
    if (auto* f = std::get_if<FlaggedPosition>(&policy.trigger); f && problem.flagged_step)
      f->step = *problem.flagged_step;

    PoolOptions pool_options;
    pool_options.workers = options.workers;
    pool_options.generate.forced = detail::forced_prefix(model, problem, spec, policy.trigger);

    const auto prompt = model.tokenize(problem.prompt);
    SamplePool pool = generate_pool(model, prompt, policy, derive_seed(options.seed, j), options.samples,
                                    options.max_tokens, pool_options);
    pool.problem_id = problem.id;
    score_pool(pool, extractor, checker, options.workers);
    pools.push_back(std::move(pool));
  }
  return pools;
}

// Per-cell failures are recorded on the row and the run continues.
inline GridResult grid_evaluate(const ModelSource& model, std::span<const Problem> problems,
                                std::span<const SamplingConfig> cells, std::span<const PolicySpec> policies,
                                const AnswerExtractor& extractor, const Checker& checker,
                                const GridOptions& options, const PoolCache& cache = {},
                                const RowSink& on_row = {}) {
  if (cells.empty() || policies.empty()) throw ArgumentError("grid must have at least one cell and policy");
  if (problems.empty()) throw ArgumentError("problem set is empty");
  if (options.samples == 0) throw ArgumentError("samples per problem must be >= 1");

  GridResult result;
  result.samples = options.samples;
  for (std::size_t n : options.pass_n)
    if (n >= 1 && n <= options.samples) result.pass_n.push_back(n);
  std::sort(result.pass_n.begin(), result.pass_n.end());
  result.pass_n.erase(std::unique(result.pass_n.begin(), result.pass_n.end()), result.pass_n.end());

  for (std::size_t c = 0; c < cells.size(); ++c) {
    for (const auto& spec : policies) {
      GridRow row;
      row.cell_index = c;
      row.cell = cells[c];
      row.policy = spec.name;
      std::vector<SamplePool> pools;
      try {
        std::optional<std::vector<SamplePool>> cached;
        if (cache) cached = cache(row);
        pools = cached ? std::move(*cached)
                       : evaluate_cell(model, problems, cells[c], spec, extractor, checker, options);
        detail::summarize(row, pools, options, result.pass_n);
      } catch (const ConfigError& e) {
        row.error_kind = CellErrorKind::config;
        row.error = e.what();
      } catch (const SourceError& e) {
        row.error_kind = CellErrorKind::source;
        row.error = e.what();
      } catch (const CheckerError& e) {
        row.error_kind = CellErrorKind::checker;
        row.error = e.what();
      } catch (const std::exception& e) {
        row.error_kind = CellErrorKind::other;
        row.error = e.what();
      }
      if (row.error_kind != CellErrorKind::none) pools.clear();
      if (on_row) on_row(row, pools);
      result.rows.push_back(std::move(row));
      result.pools.push_back(std::move(pools));
    }
  }
  return result;
}

}  // namespace fire
