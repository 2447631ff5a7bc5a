#pragma once

// JSON / JSONL / CSV (de)serialization for the experiment runner.

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <istream>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fire/errors.hpp"
#include "fire/evaluation.hpp"
#include "fire/fire_policy.hpp"
#include "fire/generation.hpp"
#include "fire/grid.hpp"
#include "fire/model_source.hpp"

namespace fire::io {

using nlohmann::json;

// Throws ConfigError if `obj` is not an object or has keys outside `allowed`.
inline void require_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + " must be a JSON object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& item : obj.items())
    if (!ok.count(item.key())) throw ConfigError("unknown key '" + item.key() + "' in " + where);
}

template <typename T>
T get_as(const json& obj, const char* key, const std::string& where) {
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + ": missing or invalid '" + key + "'");
  }
}

template <typename T>
T get_or(const json& obj, const char* key, T fallback, const std::string& where) {
  if (!obj.contains(key)) return fallback;
  return get_as<T>(obj, key, where);
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline json parse_json(const std::string& text, const std::string& where) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(where + " is not valid JSON: " + e.what());
  }
}

// 64-bit FNV-1a, hex encoded.
inline std::string fnv1a_hex(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, h);
  return buf;
}

// --- sampling configs and policies ----------------------------------------

inline json to_json(const SamplingConfig& c) {
  return {{"temperature", c.temperature},
          {"top_k", c.top_k ? json(*c.top_k) : json(nullptr)},
          {"top_p", c.top_p ? json(*c.top_p) : json(nullptr)},
          {"min_p", c.min_p}};
}

// Missing keys fall back to `base`; null disables top_k / top_p.
inline SamplingConfig sampling_config_from_json(const json& j, const SamplingConfig& base, const std::string& where) {
  require_keys(j, {"temperature", "top_k", "top_p", "min_p"}, where);
  SamplingConfig c = base;
  c.temperature = get_or<double>(j, "temperature", c.temperature, where);
  if (j.contains("top_k")) {
    if (j["top_k"].is_null()) c.top_k.reset();
    else c.top_k = get_as<std::size_t>(j, "top_k", where);
  }
  if (j.contains("top_p")) {
    if (j["top_p"].is_null()) c.top_p.reset();
    else c.top_p = get_as<double>(j, "top_p", where);
  }
  c.min_p = get_or<double>(j, "min_p", c.min_p, where);
  c.validate();
  return c;
}

inline json to_json(const TriggerRule& t) {
  struct Visitor {
    json operator()(const FirstToken&) const { return {{"kind", "first_token"}}; }
    json operator()(const SentenceStart& s) const { return {{"kind", "sentence_start"}, {"sentence", s.sentence}}; }
    json operator()(const FlaggedPosition& f) const { return {{"kind", "flagged_position"}, {"step", f.step}}; }
    json operator()(const Never&) const { return {{"kind", "never"}}; }
  };
  return std::visit(Visitor{}, t);
}

inline TriggerRule trigger_from_json(const json& j, const std::string& where) {
  require_keys(j, {"kind", "sentence", "step"}, where);
  const auto kind = get_as<std::string>(j, "kind", where);
  if (kind == "first_token") return FirstToken{};
  if (kind == "never") return Never{};
  if (kind == "sentence_start") {
    const auto n = get_as<std::size_t>(j, "sentence", where);
    if (n == 0) throw ConfigError(where + ": sentence is 1-based");
    return SentenceStart{n};
  }
  if (kind == "flagged_position") return FlaggedPosition{get_or<std::size_t>(j, "step", 0, where)};
  throw ConfigError(where + ": unknown trigger kind '" + kind + "'");
}

inline json to_json(const PolicySpec& p) {
  return {{"name", p.name},
          {"trigger", to_json(p.trigger)},
          {"initial", to_json(p.initial)},
          {"force_reference_prefix", p.force_reference_prefix}};
}

inline PolicySpec policy_from_json(const json& j, const std::string& where) {
  require_keys(j, {"name", "trigger", "initial", "force_reference_prefix"}, where);
  PolicySpec p;
  p.name = get_as<std::string>(j, "name", where);
  if (p.name.empty()) throw ConfigError(where + ": policy name must be non-empty");
  p.trigger = j.contains("trigger") ? trigger_from_json(j["trigger"], where + ".trigger") : TriggerRule{FirstToken{}};
  if (j.contains("initial")) p.initial = sampling_config_from_json(j["initial"], default_initial_config(), where + ".initial");
  p.force_reference_prefix = get_or<bool>(j, "force_reference_prefix", false, where);
  return p;
}

// --- problems ----------------------------------------------------------------

inline json to_json(const Problem& p) {
  json j = {{"id", p.id}, {"prompt", p.prompt}};
  if (p.answer) j["answer"] = *p.answer;
  if (!p.checker.empty()) j["checker"] = p.checker;
  if (p.solution) j["solution"] = *p.solution;
  if (p.flagged_step) j["flagged_step"] = *p.flagged_step;
  return j;
}

inline Problem problem_from_json(const json& j, const std::string& where) {
  require_keys(j, {"id", "prompt", "answer", "checker", "solution", "flagged_step"}, where);
  Problem p;
  p.id = get_as<std::string>(j, "id", where);
  p.prompt = get_as<std::string>(j, "prompt", where);
  if (j.contains("answer")) p.answer = get_as<std::string>(j, "answer", where);
  if (j.contains("checker")) p.checker = get_as<std::vector<std::string>>(j, "checker", where);
  if (j.contains("solution")) p.solution = get_as<std::string>(j, "solution", where);
  if (j.contains("flagged_step")) p.flagged_step = get_as<std::size_t>(j, "flagged_step", where);
  return p;
}

inline std::vector<Problem> read_problems(std::istream& in, const std::string& name) {
  std::vector<Problem> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const std::string where = name + ":" + std::to_string(lineno);
    out.push_back(problem_from_json(parse_json(line, where), where));
  }
  return out;
}

inline void write_problems(std::ostream& out, const std::vector<Problem>& problems) {
  for (const auto& p : problems) out << to_json(p).dump() << '\n';
}

// --- table models --------------------------------------------------------------
//
// {"vocab": [...], "end": "<eos>", "separator": " ",
//  "default": <logits>, "entries": [{"context": ["tok", ...], "logits": <logits>}]}
// <logits> is either a dense array (null = masked) or an object {"tok": logit}
// where unlisted tokens are masked.

inline LogitVector logits_from_json(const json& j, const TableModel* vocab_owner,
                                    const std::vector<std::string>& vocab, const std::string& where) {
  std::vector<double> scores(vocab.size(), 0.0);
  std::vector<std::uint8_t> kept(vocab.size(), 0);
  try {
    if (j.is_array()) {
      if (j.size() != vocab.size()) throw ConfigError(where + ": dense logits length differs from vocabulary");
      for (std::size_t i = 0; i < j.size(); ++i) {
        if (j[i].is_null()) continue;
        scores[i] = j[i].get<double>();
        kept[i] = 1;
      }
    } else if (j.is_object()) {
      for (const auto& item : j.items()) {
        const TokenId id = vocab_owner->id_of(item.key());
        scores[id] = item.value().get<double>();
        kept[id] = 1;
      }
    } else {
      throw ConfigError(where + ": logits must be an array or object");
    }
    return LogitVector(std::move(scores), std::move(kept));
  } catch (const json::exception& e) {
    throw ConfigError(where + ": " + e.what());
  } catch (const SourceError& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

inline json logits_to_json(const LogitVector& l, const std::vector<std::string>& vocab) {
  json obj = json::object();
  for (std::size_t i = 0; i < l.size(); ++i)
    if (l.is_kept(i)) obj[vocab[i]] = l.score(i);
  return obj;
}

inline json to_json(const TableModel& m) {
  json entries = json::array();
  for (const auto& [ctx, logits] : m.entries()) {
    json context = json::array();
    for (TokenId t : ctx) context.push_back(m.vocab()[t]);
    entries.push_back({{"context", context}, {"logits", logits_to_json(logits, m.vocab())}});
  }
  return {{"vocab", m.vocab()},
          {"end", m.vocab()[m.end_token()]},
          {"separator", m.separator()},
          {"default", logits_to_json(m.fallback(), m.vocab())},
          {"entries", entries}};
}

inline TableModel table_model_from_json(const json& j, const std::string& where) {
  require_keys(j, {"vocab", "end", "separator", "default", "entries"}, where);
  const auto vocab = get_as<std::vector<std::string>>(j, "vocab", where);
  if (vocab.empty()) throw ConfigError(where + ": empty vocabulary");
  const auto end = get_as<std::string>(j, "end", where);
  const auto sep = get_or<std::string>(j, "separator", " ", where);

  // Placeholder fallback until the vocabulary index exists.
  TableModel model(vocab, 0, LogitVector(std::vector<double>(vocab.size(), 0.0)), sep);
  const TokenId end_id = [&] {
    try {
      return model.id_of(end);
    } catch (const SourceError&) {
      throw ConfigError(where + ": end token '" + end + "' not in vocabulary");
    }
  }();
  const LogitVector fallback = j.contains("default")
                                   ? logits_from_json(j["default"], &model, vocab, where + ".default")
                                   : LogitVector(std::vector<double>(vocab.size(), 0.0));
  TableModel out(vocab, end_id, fallback, sep);
  if (j.contains("entries")) {
    if (!j["entries"].is_array()) throw ConfigError(where + ".entries must be an array");
    std::size_t i = 0;
    for (const auto& e : j["entries"]) {
      const std::string ew = where + ".entries[" + std::to_string(i++) + "]";
      require_keys(e, {"context", "logits"}, ew);
      std::vector<TokenId> ctx;
      for (const auto& tok : get_as<std::vector<std::string>>(e, "context", ew)) {
        try {
          ctx.push_back(out.id_of(tok));
        } catch (const SourceError& err) {
          throw ConfigError(ew + ": " + err.what());
        }
      }
      if (!e.contains("logits")) throw ConfigError(ew + ": missing 'logits'");
      out.set(std::move(ctx), logits_from_json(e["logits"], &out, vocab, ew + ".logits"));
    }
  }
  return out;
}

// --- pools (JSONL, one generation per line) -------------------------------------

inline json record_to_json(const SamplePool& pool, std::size_t i, const std::string& policy, std::size_t cell) {
  const auto& r = pool.records[i];
  std::size_t forced = 0;
  for (Stage s : r.stages) forced += s == Stage::forced;
  json j = {{"problem_id", pool.problem_id},
            {"sample_index", i},
            {"seed", r.seed},
            {"policy", policy},
            {"cell", cell},
            {"tokens", r.tokens},
            {"text", r.text},
            {"forced", forced},
            {"hot_step", r.hot_step ? json(*r.hot_step) : json(nullptr)},
            {"trigger_unfired", r.trigger_unfired},
            {"finish", to_string(r.finish)}};
  if (pool.scored()) {
    j["answer"] = pool.answers[i] ? json(*pool.answers[i]) : json(nullptr);
    j["verdict"] = to_string(pool.verdicts[i]);
  }
  if (!r.error.empty()) j["error"] = r.error;
  return j;
}

inline void write_pools(std::ostream& out, const std::vector<SamplePool>& pools, const std::string& policy,
                        std::size_t cell) {
  for (const auto& pool : pools)
    for (std::size_t i = 0; i < pool.size(); ++i) out << record_to_json(pool, i, policy, cell).dump() << '\n';
}

// Rebuilds scored pools (grouped by problem, in file order). Prompts are not
// stored, so records come back with empty prompts.
inline std::vector<SamplePool> read_pools(std::istream& in, const std::string& name) {
  std::vector<SamplePool> pools;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const std::string where = name + ":" + std::to_string(lineno);
    const json j = parse_json(line, where);
    const auto id = get_as<std::string>(j, "problem_id", where);
    if (pools.empty() || pools.back().problem_id != id) {
      pools.emplace_back();
      pools.back().problem_id = id;
    }
    auto& pool = pools.back();
    GenerationRecord r;
    r.seed = get_as<std::uint64_t>(j, "seed", where);
    r.tokens = get_as<std::vector<TokenId>>(j, "tokens", where);
    r.text = get_as<std::string>(j, "text", where);
    r.trigger_unfired = get_or<bool>(j, "trigger_unfired", false, where);
    if (!j.at("hot_step").is_null()) r.hot_step = get_as<std::size_t>(j, "hot_step", where);
    const auto forced = get_or<std::size_t>(j, "forced", 0, where);
    for (std::size_t t = 0; t < r.tokens.size(); ++t)
      r.stages.push_back(t < forced ? Stage::forced : (r.hot_step == t ? Stage::hot : Stage::regular));
    const auto finish = get_as<std::string>(j, "finish", where);
    r.finish = finish == "end_token" ? FinishReason::end_token
               : finish == "max_tokens" ? FinishReason::max_tokens : FinishReason::error;
    r.error = get_or<std::string>(j, "error", "", where);
    pool.records.push_back(std::move(r));
    pool.answers.push_back(j.contains("answer") && !j["answer"].is_null()
                               ? std::optional<std::string>(get_as<std::string>(j, "answer", where))
                               : std::nullopt);
    try {
      pool.verdicts.push_back(verdict_from_string(get_as<std::string>(j, "verdict", where)));
    } catch (const ArgumentError& e) {
      throw ConfigError(where + ": " + e.what());
    }
  }
  return pools;
}

// --- reports -------------------------------------------------------------------

inline std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

inline std::string optional_text(const std::optional<double>& v) { return v ? format_number(*v) : "none"; }
inline std::string optional_text(const std::optional<std::size_t>& v) { return v ? std::to_string(*v) : "none"; }

inline json report_to_json(const GridResult& result, const GridOptions& options, std::size_t problems,
                           const std::string& problem_set_hash) {
  json rows = json::array();
  for (const auto& row : result.rows) {
    json pass = json::object();
    for (const auto& [n, stat] : row.pass.by_n)
      pass[std::to_string(n)] = {{"mean", stat.mean}, {"stddev", stat.stddev}};
    rows.push_back({{"cell_index", row.cell_index},
                    {"config", to_json(row.cell)},
                    {"policy", row.policy},
                    {"pass", pass},
                    {"ea", row.ea_mean},
                    {"failed_samples", row.failed_samples},
                    {"checker_errors", row.checker_errors},
                    {"unfired_triggers", row.unfired_triggers},
                    {"error", row.error.empty() ? json(nullptr) : json(row.error)}});
  }
  return {{"samples", result.samples},
          {"pass_n", result.pass_n},
          {"method", to_string(options.method)},
          {"repetitions", options.method == PassMethod::resampled ? options.repetitions : 0},
          {"problems", problems},
          {"problem_set", problem_set_hash},
          {"rows", rows}};
}

inline void write_report_csv(std::ostream& out, const GridResult& result) {
  out << "cell,temperature,top_p,top_k,min_p,policy";
  for (std::size_t n : result.pass_n) out << ",pass@" << n;
  for (std::size_t n : result.pass_n) out << ",pass@" << n << "_sd";
  out << ",EA@" << result.samples << ",failed_samples,checker_errors,unfired_triggers,error\n";
  for (const auto& row : result.rows) {
    out << row.cell_index << ',' << format_number(row.cell.temperature) << ',' << optional_text(row.cell.top_p)
        << ',' << optional_text(row.cell.top_k) << ',' << format_number(row.cell.min_p) << ',' << row.policy;
    const bool ok = row.error.empty();
    for (std::size_t n : result.pass_n) out << ',' << (ok ? format_number(row.pass.by_n.at(n).mean) : "");
    for (std::size_t n : result.pass_n) out << ',' << (ok ? format_number(row.pass.by_n.at(n).stddev) : "");
    out << ',' << (ok ? format_number(row.ea_mean) : "") << ',' << row.failed_samples << ',' << row.checker_errors
        << ',' << row.unfired_triggers << ',';
    std::string err = row.error;
    std::replace(err.begin(), err.end(), ',', ';');
    std::replace(err.begin(), err.end(), '\n', ' ');
    out << err << '\n';
  }
}

}  // namespace fire::io
