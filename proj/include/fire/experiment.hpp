#pragma once

/*
 * Config-driven experiment runner and report comparison.
 *
 * Artifacts written to the output directory:
 *   pools/cell<C>_<policy>.jsonl   one generation per line
 *   report.json, report.csv        one row per (grid cell, policy)
 *   manifest.json                  resolved config, its hash, seeds, artifact hashes
 *
 * Nothing written depends on wall-clock time, so re-running a manifest with a
 * local model source reproduces every artifact byte for byte.
 */

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "fire/errors.hpp"
#include "fire/evaluation.hpp"
#include "fire/grid.hpp"
#include "fire/io.hpp"
#include "fire/model_source.hpp"
#include "fire/remote_model.hpp"

namespace fire {

inline constexpr const char* kVersion = "0.1.0";

enum ExitCode : int {
  kExitOk = 0,
  kExitInternal = 1,
  kExitConfig = 2,
  kExitModelSource = 3,
  kExitChecker = 4,
};

struct TableSpec {
  std::string path;
};
struct NGramSpec {
  std::string corpus;
  NGramOptions options;
};
struct RemoteSpec {
  RemoteOptions options;
  std::string auth_env = "FIRE_API_KEY";
};
using ModelSpec = std::variant<TableSpec, NGramSpec, RemoteSpec>;

struct ExtractorSpec {
  AnswerExtractor::Mode mode = AnswerExtractor::Mode::last_number;
  std::string pattern;
};

struct CheckerSpec {
  bool command = false;  // false = exact match against problem answers
  std::vector<std::string> argv;
  std::chrono::milliseconds timeout = kDefaultCheckerTimeout;
};

struct ExperimentConfig {
  ModelSpec model = TableSpec{};
  std::string problems;
  ExtractorSpec extractor;
  CheckerSpec checker;
  std::vector<PolicySpec> policies{PolicySpec::regular(), PolicySpec::fire()};
  GridAxes grid;
  GridOptions options;
};

namespace detail {

namespace fs = std::filesystem;

inline std::string resolve(const std::string& path, const fs::path& base) {
  fs::path p(path);
  if (p.is_relative()) p = base / p;
  return p.lexically_normal().string();
}

template <typename T>
std::vector<std::optional<T>> optional_list(const io::json& j, const char* key, const std::string& where) {
  std::vector<std::optional<T>> out;
  if (!j.contains(key)) return {std::nullopt};
  if (!j[key].is_array() || j[key].empty()) throw ConfigError(where + "." + key + " must be a non-empty array");
  for (const auto& v : j[key]) {
    if (v.is_null()) out.emplace_back(std::nullopt);
    else {
      try {
        out.emplace_back(v.get<T>());
      } catch (const io::json::exception&) {
        throw ConfigError(where + "." + key + " has an invalid entry");
      }
    }
  }
  return out;
}

template <typename T>
io::json optional_list_json(const std::vector<std::optional<T>>& values) {
  io::json out = io::json::array();
  for (const auto& v : values) out.push_back(v ? io::json(*v) : io::json(nullptr));
  return out;
}

}  // namespace detail

// Relative paths resolve against `base_dir`. Unknown keys are rejected.
inline ExperimentConfig parse_experiment_config(const io::json& j, const std::filesystem::path& base_dir) {
  using io::get_as;
  using io::get_or;
  io::require_keys(j, {"model", "problems", "extractor", "checker", "policies", "grid", "samples", "max_tokens",
                       "seed", "pass_n", "method", "repetitions", "workers"},
                   "config");
  ExperimentConfig cfg;

  // model
  if (!j.contains("model")) throw ConfigError("config: missing 'model'");
  const auto& m = j["model"];
  const auto type = get_as<std::string>(m, "type", "config.model");
  if (type == "table") {
    io::require_keys(m, {"type", "path"}, "config.model");
    cfg.model = TableSpec{detail::resolve(get_as<std::string>(m, "path", "config.model"), base_dir)};
  } else if (type == "ngram") {
    io::require_keys(m, {"type", "corpus", "order", "alpha", "tokenizer"}, "config.model");
    NGramSpec spec;
    spec.corpus = detail::resolve(get_as<std::string>(m, "corpus", "config.model"), base_dir);
    spec.options.order = get_or<int>(m, "order", 3, "config.model");
    spec.options.alpha = get_or<double>(m, "alpha", 0.01, "config.model");
    const auto tok = get_or<std::string>(m, "tokenizer", "whitespace", "config.model");
    if (tok == "whitespace") spec.options.tokenizer = TokenizerMode::whitespace;
    else if (tok == "character") spec.options.tokenizer = TokenizerMode::character;
    else throw ConfigError("config.model: tokenizer must be 'whitespace' or 'character'");
    if (spec.options.order < 2 || spec.options.order > 5) throw ConfigError("config.model: order must be in [2, 5]");
    if (!(spec.options.alpha > 0.0)) throw ConfigError("config.model: alpha must be positive");
    cfg.model = spec;
  } else if (type == "remote") {
    io::require_keys(m, {"type", "url", "width", "timeout_ms", "max_attempts", "max_in_flight", "model", "end_text",
                         "auth_env"},
                     "config.model");
    RemoteSpec spec;
    spec.options.url = get_as<std::string>(m, "url", "config.model");
    spec.options.width = get_or<int>(m, "width", 20, "config.model");
    spec.options.timeout = std::chrono::milliseconds(get_or<std::int64_t>(m, "timeout_ms", 30000, "config.model"));
    spec.options.max_attempts = get_or<int>(m, "max_attempts", 3, "config.model");
    spec.options.max_in_flight = get_or<int>(m, "max_in_flight", 4, "config.model");
    spec.options.model = get_or<std::string>(m, "model", "", "config.model");
    spec.options.end_text = get_or<std::string>(m, "end_text", "<|endoftext|>", "config.model");
    spec.auth_env = get_or<std::string>(m, "auth_env", "FIRE_API_KEY", "config.model");
    if (spec.options.width < 1) throw ConfigError("config.model: width must be >= 1");
    cfg.model = spec;
  } else {
    throw ConfigError("config.model: unknown type '" + type + "'");
  }

  cfg.problems = detail::resolve(get_as<std::string>(j, "problems", "config"), base_dir);

  if (j.contains("extractor")) {
    const auto& e = j["extractor"];
    io::require_keys(e, {"mode", "pattern"}, "config.extractor");
    const auto mode = get_as<std::string>(e, "mode", "config.extractor");
    if (mode == "last_number") cfg.extractor.mode = AnswerExtractor::Mode::last_number;
    else if (mode == "passthrough") cfg.extractor.mode = AnswerExtractor::Mode::passthrough;
    else if (mode == "regex") {
      cfg.extractor.mode = AnswerExtractor::Mode::regex;
      cfg.extractor.pattern = get_as<std::string>(e, "pattern", "config.extractor");
      (void)AnswerExtractor::from_regex(cfg.extractor.pattern);
    } else {
      throw ConfigError("config.extractor: unknown mode '" + mode + "'");
    }
  }

  if (j.contains("checker")) {
    const auto& c = j["checker"];
    io::require_keys(c, {"type", "command", "timeout_ms"}, "config.checker");
    const auto kind = get_as<std::string>(c, "type", "config.checker");
    if (kind == "command") {
      cfg.checker.command = true;
      cfg.checker.argv = get_or<std::vector<std::string>>(c, "command", {}, "config.checker");
    } else if (kind != "exact") {
      throw ConfigError("config.checker: type must be 'exact' or 'command'");
    }
    cfg.checker.timeout = std::chrono::milliseconds(get_or<std::int64_t>(c, "timeout_ms", 10000, "config.checker"));
    if (cfg.checker.timeout.count() <= 0) throw ConfigError("config.checker: timeout_ms must be positive");
  }

  if (j.contains("policies")) {
    if (!j["policies"].is_array() || j["policies"].empty())
      throw ConfigError("config.policies must be a non-empty array");
    cfg.policies.clear();
    std::set<std::string> names;
    for (std::size_t i = 0; i < j["policies"].size(); ++i) {
      auto p = io::policy_from_json(j["policies"][i], "config.policies[" + std::to_string(i) + "]");
      if (!names.insert(p.name).second) throw ConfigError("config.policies: duplicate name '" + p.name + "'");
      cfg.policies.push_back(std::move(p));
    }
  }

  if (j.contains("grid")) {
    const auto& g = j["grid"];
    io::require_keys(g, {"temperature", "top_p", "top_k", "min_p"}, "config.grid");
    if (g.contains("temperature")) {
      cfg.grid.temperature.clear();
      for (const auto& t : detail::optional_list<double>(g, "temperature", "config.grid")) {
        if (!t) throw ConfigError("config.grid.temperature entries must be numbers");
        cfg.grid.temperature.push_back(*t);
      }
    }
    cfg.grid.top_p = detail::optional_list<double>(g, "top_p", "config.grid");
    cfg.grid.top_k = detail::optional_list<std::size_t>(g, "top_k", "config.grid");
    if (g.contains("min_p")) {
      cfg.grid.min_p.clear();
      for (const auto& v : detail::optional_list<double>(g, "min_p", "config.grid")) cfg.grid.min_p.push_back(v.value_or(0.0));
    }
    (void)cfg.grid.cells();
  }

  cfg.options.samples = get_or<std::size_t>(j, "samples", 40, "config");
  cfg.options.max_tokens = get_or<std::size_t>(j, "max_tokens", kDefaultMaxTokens, "config");
  cfg.options.seed = get_or<std::uint64_t>(j, "seed", 0, "config");
  cfg.options.pass_n = get_or<std::vector<std::size_t>>(j, "pass_n", default_pass_n(), "config");
  const auto method = get_or<std::string>(j, "method", "exact", "config");
  if (method == "exact") cfg.options.method = PassMethod::exact;
  else if (method == "resampled") cfg.options.method = PassMethod::resampled;
  else throw ConfigError("config.method must be 'exact' or 'resampled'");
  cfg.options.repetitions = get_or<std::size_t>(j, "repetitions", kDefaultRepetitions, "config");
  cfg.options.workers = get_or<std::size_t>(j, "workers", 1, "config");
  if (cfg.options.samples == 0) throw ConfigError("config.samples must be >= 1");
  if (cfg.options.max_tokens == 0) throw ConfigError("config.max_tokens must be >= 1");
  if (cfg.options.repetitions == 0) throw ConfigError("config.repetitions must be >= 1");
  if (cfg.options.workers == 0) throw ConfigError("config.workers must be >= 1");
  for (std::size_t n : cfg.options.pass_n)
    if (n == 0) throw ConfigError("config.pass_n entries must be >= 1");
  return cfg;
}

// Canonical, fully resolved form; parse_experiment_config(to_json(c), any) == c.
inline io::json to_json(const ExperimentConfig& cfg) {
  io::json j;
  if (const auto* t = std::get_if<TableSpec>(&cfg.model)) {
    j["model"] = {{"type", "table"}, {"path", t->path}};
  } else if (const auto* n = std::get_if<NGramSpec>(&cfg.model)) {
    j["model"] = {{"type", "ngram"},
                  {"corpus", n->corpus},
                  {"order", n->options.order},
                  {"alpha", n->options.alpha},
                  {"tokenizer", n->options.tokenizer == TokenizerMode::whitespace ? "whitespace" : "character"}};
  } else {
    const auto& r = std::get<RemoteSpec>(cfg.model);
    j["model"] = {{"type", "remote"},
                  {"url", r.options.url},
                  {"width", r.options.width},
                  {"timeout_ms", r.options.timeout.count()},
                  {"max_attempts", r.options.max_attempts},
                  {"max_in_flight", r.options.max_in_flight},
                  {"model", r.options.model},
                  {"end_text", r.options.end_text},
                  {"auth_env", r.auth_env}};
  }
  j["problems"] = cfg.problems;
  switch (cfg.extractor.mode) {
    case AnswerExtractor::Mode::last_number: j["extractor"] = {{"mode", "last_number"}}; break;
    case AnswerExtractor::Mode::passthrough: j["extractor"] = {{"mode", "passthrough"}}; break;
    case AnswerExtractor::Mode::regex: j["extractor"] = {{"mode", "regex"}, {"pattern", cfg.extractor.pattern}}; break;
  }
  j["checker"] = {{"type", cfg.checker.command ? "command" : "exact"}, {"timeout_ms", cfg.checker.timeout.count()}};
  if (cfg.checker.command) j["checker"]["command"] = cfg.checker.argv;
  j["policies"] = io::json::array();
  for (const auto& p : cfg.policies) j["policies"].push_back(io::to_json(p));
  j["grid"] = {{"temperature", cfg.grid.temperature},
               {"top_p", detail::optional_list_json(cfg.grid.top_p)},
               {"top_k", detail::optional_list_json(cfg.grid.top_k)},
               {"min_p", cfg.grid.min_p}};
  j["samples"] = cfg.options.samples;
  j["max_tokens"] = cfg.options.max_tokens;
  j["seed"] = cfg.options.seed;
  j["pass_n"] = cfg.options.pass_n;
  j["method"] = to_string(cfg.options.method);
  j["repetitions"] = cfg.options.repetitions;
  j["workers"] = cfg.options.workers;
  return j;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
  const auto j = io::parse_json(io::read_file(path), path);
  return parse_experiment_config(j, std::filesystem::absolute(path).parent_path());
}

enum class PolicyFilter { both, regular, fire };

struct RunOptions {
  std::string out_dir;
  std::optional<std::uint64_t> seed_override;
  PolicyFilter policy = PolicyFilter::both;
  bool resume = false;
  std::ostream* log = &std::cerr;
};

struct RunSummary {
  int exit_code = kExitOk;
  GridResult result;
  std::string config_hash;
};

inline std::unique_ptr<ModelSource> make_model(const ModelSpec& spec) {
  if (const auto* t = std::get_if<TableSpec>(&spec))
    return std::make_unique<TableModel>(io::table_model_from_json(io::parse_json(io::read_file(t->path), t->path), t->path));
  if (const auto* n = std::get_if<NGramSpec>(&spec))
    return std::make_unique<NGramModel>(NGramModel::train(io::read_file(n->corpus), n->options));
  const auto& r = std::get<RemoteSpec>(spec);
  RemoteOptions options = r.options;
  if (const char* token = std::getenv(r.auth_env.c_str()); token && *token) options.auth_token = token;
  return std::make_unique<RemoteModel>(options);
}

inline AnswerExtractor make_extractor(const ExtractorSpec& spec) {
  switch (spec.mode) {
    case AnswerExtractor::Mode::regex: return AnswerExtractor::from_regex(spec.pattern);
    case AnswerExtractor::Mode::passthrough: return AnswerExtractor::passthrough();
    case AnswerExtractor::Mode::last_number: break;
  }
  return AnswerExtractor::last_number();
}

inline std::unique_ptr<Checker> make_checker(const CheckerSpec& spec, const std::vector<Problem>& problems) {
  if (spec.command) {
    auto checker = std::make_unique<CommandChecker>(spec.argv, spec.timeout);
    for (const auto& p : problems) {
      if (!p.checker.empty()) checker->set_command(p.id, p.checker);
      else if (spec.argv.empty())
        throw ConfigError("problem '" + p.id + "' has no checker command and no default is configured");
    }
    return checker;
  }
  auto checker = std::make_unique<ExactMatchChecker>();
  for (const auto& p : problems) {
    if (!p.answer) throw ConfigError("problem '" + p.id + "' has no reference answer for exact-match checking");
    checker->add(p.id, *p.answer);
  }
  return checker;
}

// Problems sorted by id; duplicate ids are a ConfigError.
inline std::vector<Problem> load_problems(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read problem set '" + path + "'");
  auto problems = io::read_problems(in, path);
  if (problems.empty()) throw ConfigError("problem set '" + path + "' is empty");
  std::stable_sort(problems.begin(), problems.end(), [](const Problem& a, const Problem& b) { return a.id < b.id; });
  for (std::size_t i = 1; i < problems.size(); ++i)
    if (problems[i].id == problems[i - 1].id) throw ConfigError("duplicate problem id '" + problems[i].id + "'");
  return problems;
}

inline std::string pool_file_name(std::size_t cell, const std::string& policy) {
  std::string safe;
  for (char ch : policy) safe += std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' ? ch : '_';
  return "pools/cell" + std::to_string(cell) + "_" + safe + ".jsonl";
}

inline ExperimentConfig apply_run_options(ExperimentConfig cfg, const RunOptions& run) {
  if (run.seed_override) cfg.options.seed = *run.seed_override;
  if (run.policy != PolicyFilter::both) {
    std::vector<PolicySpec> kept;
    for (const auto& p : cfg.policies)
      if (p.is_regular() == (run.policy == PolicyFilter::regular)) kept.push_back(p);
    if (kept.empty()) throw ConfigError("--policy filter leaves no policies to run");
    cfg.policies = std::move(kept);
  }
  return cfg;
}

// Throws ConfigError before any generation if the config is unusable.
inline RunSummary run_experiment(const ExperimentConfig& base, const RunOptions& run) {
  namespace fs = std::filesystem;
  if (run.out_dir.empty()) throw ConfigError("no output directory given");
  const ExperimentConfig cfg = apply_run_options(base, run);
  const io::json config_json = to_json(cfg);
  const std::string config_hash = io::fnv1a_hex(config_json.dump());

  const auto problems = load_problems(cfg.problems);
  const auto extractor = make_extractor(cfg.extractor);
  const auto checker = make_checker(cfg.checker, problems);
  const auto cells = cfg.grid.cells();
  for (const auto& p : cfg.policies)
    for (const auto& cell : cells)
      for (const auto& w : FirePolicy{p.trigger, p.initial, cell}.validate())
        *run.log << "warning: policy '" << p.name << "': " << w << '\n';

  std::string problem_blob;
  for (const auto& p : problems) problem_blob += io::to_json(p).dump() + '\n';
  const std::string problem_hash = io::fnv1a_hex(problem_blob);

  std::unique_ptr<ModelSource> model;
  try {
    model = make_model(cfg.model);
  } catch (const SourceError& e) {
    throw ConfigError(std::string("model source: ") + e.what());
  }

  const fs::path out(run.out_dir);
  fs::create_directories(out / "pools");

  PoolCache cache;
  if (run.resume && fs::exists(out / "manifest.json")) {
    const auto previous = io::parse_json(io::read_file((out / "manifest.json").string()), "manifest.json");
    if (previous.value("config_hash", "") == config_hash) {
      cache = [&](const GridRow& row) -> std::optional<std::vector<SamplePool>> {
        const fs::path file = out / pool_file_name(row.cell_index, row.policy);
        if (!fs::exists(file)) return std::nullopt;
        std::ifstream in(file);
        auto pools = io::read_pools(in, file.string());
        if (pools.size() != problems.size()) return std::nullopt;
        for (std::size_t i = 0; i < pools.size(); ++i)
          if (pools[i].problem_id != problems[i].id || pools[i].size() != cfg.options.samples) return std::nullopt;
        *run.log << "resume: reusing " << file.string() << '\n';
        return pools;
      };
    } else {
      *run.log << "resume: manifest config differs, regenerating everything\n";
    }
  }

  io::json artifacts = io::json::object();
  auto write_artifact = [&](const std::string& rel, const std::string& content) {
    std::ofstream f(out / rel, std::ios::binary | std::ios::trunc);
    if (!f) throw ConfigError("cannot write '" + (out / rel).string() + "'");
    f << content;
    artifacts[rel] = io::fnv1a_hex(content);
  };
  auto write_manifest = [&](const io::json& manifest) {
    std::ofstream f(out / "manifest.json", std::ios::binary | std::ios::trunc);
    if (!f) throw ConfigError("cannot write manifest in '" + out.string() + "'");
    f << manifest.dump(2) << '\n';
  };
  // Marks the directory as belonging to this config so --resume can pick up
  // pool files from an interrupted run.
  write_manifest({{"tool", "fire"}, {"config_hash", config_hash}, {"complete", false}});

  RunSummary summary;
  summary.config_hash = config_hash;
  auto on_row = [&](const GridRow& row, const std::vector<SamplePool>& pools) {
    if (!row.error.empty()) return;
    std::ostringstream text;
    io::write_pools(text, pools, row.policy, row.cell_index);
    write_artifact(pool_file_name(row.cell_index, row.policy), text.str());
  };
  summary.result =
      grid_evaluate(*model, problems, cells, cfg.policies, extractor, *checker, cfg.options, cache, on_row);

  write_artifact("report.json",
                 io::report_to_json(summary.result, cfg.options, problems.size(), problem_hash).dump(2) + "\n");
  std::ostringstream csv;
  io::write_report_csv(csv, summary.result);
  write_artifact("report.csv", csv.str());

  io::json policies = io::json::array();
  for (const auto& p : cfg.policies) policies.push_back(p.name);
  const io::json manifest = {{"tool", "fire"},
                             {"version", kVersion},
                             {"config_hash", config_hash},
                             {"config", config_json},
                             {"seed", cfg.options.seed},
                             {"policies", policies},
                             {"problem_set", problem_hash},
                             {"rng", "splitmix64-counter; pool seed = derive_seed(seed, problem_index)"},
                             {"artifacts", artifacts},
                             {"complete", true}};
  write_manifest(manifest);

  for (const auto& row : summary.result.rows) {
    int code = kExitOk;
    switch (row.error_kind) {
      case CellErrorKind::config: code = kExitConfig; break;
      case CellErrorKind::source: code = kExitModelSource; break;
      case CellErrorKind::checker: code = kExitChecker; break;
      case CellErrorKind::other: code = kExitInternal; break;
      case CellErrorKind::none: code = row.failed_samples > 0 ? kExitModelSource : kExitOk; break;
    }
    if (!row.error.empty()) *run.log << "row cell" << row.cell_index << "/" << row.policy << ": " << row.error << '\n';
    if (summary.exit_code == kExitOk) summary.exit_code = code;
  }
  return summary;
}

// Re-run from a manifest: its embedded config is already resolved (seed and
// policy filter applied).
inline RunSummary rerun_manifest(const std::string& manifest_path, RunOptions run) {
  const auto manifest = io::parse_json(io::read_file(manifest_path), manifest_path);
  if (!manifest.contains("config")) throw ConfigError(manifest_path + " has no embedded config");
  run.seed_override.reset();
  run.policy = PolicyFilter::both;
  return run_experiment(parse_experiment_config(manifest["config"], "/"), run);
}

// ---------------------------------------------------------------------------
// Report comparison
// ---------------------------------------------------------------------------

struct DeltaRow {
  std::size_t cell_index = 0;
  io::json config;
  std::string policy_a;
  std::string policy_b;
  std::map<std::size_t, std::pair<double, double>> pass;  // n -> (a, b)
  double ea_a = 0.0;
  double ea_b = 0.0;
  bool b_at_least_a = false;  // every pass@n of B >= A
};

struct DeltaTable {
  std::vector<std::size_t> pass_n;
  std::size_t samples = 0;
  std::vector<DeltaRow> rows;
};

// Rows pair by (cell, policy) when both reports ran the same policies,
// otherwise by cell when each report has exactly one policy per cell (e.g. a
// --policy regular run against a --policy fire run). Deltas are B - A.
inline DeltaTable compare_reports(const io::json& a, const io::json& b) {
  auto field = [](const io::json& r, const char* key) -> const io::json& {
    if (!r.contains(key)) throw ArgumentError(std::string("report lacks '") + key + "'");
    return r[key];
  };
  if (field(a, "pass_n") != field(b, "pass_n")) throw ArgumentError("reports have different pass@n grids");
  if (field(a, "samples") != field(b, "samples")) throw ArgumentError("reports use different sample counts");
  if (field(a, "problem_set") != field(b, "problem_set")) throw ArgumentError("reports use different problem sets");

  DeltaTable table;
  table.pass_n = a["pass_n"].get<std::vector<std::size_t>>();
  table.samples = a["samples"].get<std::size_t>();

  using Key = std::pair<std::size_t, std::string>;
  auto index = [&](const io::json& report) {
    std::map<Key, const io::json*> rows;
    std::map<std::size_t, std::vector<const io::json*>> by_cell;
    for (const auto& row : field(report, "rows")) {
      if (!row["error"].is_null()) continue;
      const auto cell = row.at("cell_index").get<std::size_t>();
      rows[{cell, row.at("policy").get<std::string>()}] = &row;
      by_cell[cell].push_back(&row);
    }
    return std::pair{rows, by_cell};
  };
  const auto [rows_a, cells_a] = index(a);
  const auto [rows_b, cells_b] = index(b);

  std::vector<std::pair<const io::json*, const io::json*>> pairs;
  std::set<Key> keys_a, keys_b;
  for (const auto& [k, _] : rows_a) keys_a.insert(k);
  for (const auto& [k, _] : rows_b) keys_b.insert(k);
  if (keys_a == keys_b) {
    for (const auto& [k, row] : rows_a) pairs.emplace_back(row, rows_b.at(k));
  } else {
    if (cells_a.size() != cells_b.size()) throw ArgumentError("reports have different grid cells");
    for (const auto& [cell, list] : cells_a) {
      auto it = cells_b.find(cell);
      if (it == cells_b.end() || list.size() != 1 || it->second.size() != 1)
        throw ArgumentError("reports cannot be paired: cell " + std::to_string(cell) +
                            " needs exactly one policy in each report");
      pairs.emplace_back(list.front(), it->second.front());
    }
  }

  for (const auto& [ra, rb] : pairs) {
    if ((*ra)["config"] != (*rb)["config"]) throw ArgumentError("reports disagree on grid cell configs");
    DeltaRow d;
    d.cell_index = (*ra)["cell_index"].get<std::size_t>();
    d.config = (*ra)["config"];
    d.policy_a = (*ra)["policy"].get<std::string>();
    d.policy_b = (*rb)["policy"].get<std::string>();
    d.b_at_least_a = true;
    for (std::size_t n : table.pass_n) {
      const auto key = std::to_string(n);
      const double va = (*ra)["pass"].at(key).at("mean").get<double>();
      const double vb = (*rb)["pass"].at(key).at("mean").get<double>();
      d.pass[n] = {va, vb};
      d.b_at_least_a = d.b_at_least_a && vb >= va;
    }
    d.ea_a = (*ra)["ea"].get<double>();
    d.ea_b = (*rb)["ea"].get<double>();
    table.rows.push_back(std::move(d));
  }
  return table;
}

inline void write_delta_csv(std::ostream& out, const DeltaTable& t) {
  out << "cell,temperature,top_p,top_k,min_p,policy_a,policy_b";
  for (std::size_t n : t.pass_n) out << ",pass@" << n << "_a,pass@" << n << "_b,pass@" << n << "_delta";
  out << ",EA@" << t.samples << "_a,EA@" << t.samples << "_b,EA@" << t.samples << "_delta,b_ge_a\n";
  auto opt = [](const io::json& v) { return v.is_null() ? std::string("none") : io::format_number(v.get<double>()); };
  for (const auto& r : t.rows) {
    out << r.cell_index << ',' << io::format_number(r.config["temperature"].get<double>()) << ','
        << opt(r.config["top_p"]) << ','
        << (r.config["top_k"].is_null() ? std::string("none") : std::to_string(r.config["top_k"].get<std::size_t>()))
        << ',' << io::format_number(r.config["min_p"].get<double>()) << ',' << r.policy_a << ',' << r.policy_b;
    for (std::size_t n : t.pass_n) {
      const auto [va, vb] = r.pass.at(n);
      out << ',' << io::format_number(va) << ',' << io::format_number(vb) << ',' << io::format_number(vb - va);
    }
    out << ',' << io::format_number(r.ea_a) << ',' << io::format_number(r.ea_b) << ','
        << io::format_number(r.ea_b - r.ea_a) << ',' << (r.b_at_least_a ? "yes" : "no") << '\n';
  }
}

}  // namespace fire
