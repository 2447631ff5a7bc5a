// fire: experiment runner for FIRE / regular sampling comparisons.
//
//   fire run --config exp.json --out results/ [--seed-override N] [--policy both|regular|fire] [--resume]
//   fire rerun --manifest results/manifest.json --out results2/
//   fire compare a/report.json b/report.json [--out delta.csv]
//   fire synth modes|sentences --out dir/
//
// Exit codes: 0 ok, 1 internal error, 2 usage/config error, 3 model-source
// error, 4 checker error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "fire/experiment.hpp"
#include "fire/io.hpp"
#include "fire/synthetic.hpp"

namespace {

int write_synthetic(const std::string& kind, const std::string& out_dir) {
  namespace fs = std::filesystem;
  fire::synthetic::Benchmark bench = kind == "modes" ? fire::synthetic::make_mode_benchmark()
                                                     : fire::synthetic::make_sentence_benchmark();
  fs::create_directories(out_dir);
  std::ofstream(fs::path(out_dir) / "table.json") << fire::io::to_json(bench.model).dump() << '\n';
  {
    std::ofstream problems(fs::path(out_dir) / "problems.jsonl");
    fire::io::write_problems(problems, bench.problems);
  }

  fire::io::json config = {{"model", {{"type", "table"}, {"path", "table.json"}}},
                           {"problems", "problems.jsonl"},
                           {"extractor", {{"mode", "last_number"}}},
                           {"checker", {{"type", "exact"}}},
                           {"grid", {{"temperature", {1.0}}, {"top_p", {1.0}}, {"top_k", {16}}, {"min_p", {0.0}}}},
                           {"samples", 40},
                           {"max_tokens", 16},
                           {"seed", 2024}};
  if (kind == "sentences") {
    config["policies"] = fire::io::json::array();
    for (const auto& p : fire::synthetic::mid_sequence_policies()) config["policies"].push_back(fire::io::to_json(p));
    config["pass_n"] = {1, 10};
  }
  std::ofstream(fs::path(out_dir) / "config.json") << config.dump(2) << '\n';
  std::cout << "wrote " << out_dir << "/{table.json,problems.jsonl,config.json}\n";
  return fire::kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FIRE sampling experiment runner"};
  app.require_subcommand(1);

  std::string config_path, out_dir, manifest_path, policy = "both", compare_out, synth_kind;
  std::uint64_t seed_override = 0;
  bool resume = false;
  std::string report_a, report_b;

  auto* run = app.add_subcommand("run", "Run a grid experiment from a config file");
  run->add_option("--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out_dir, "Output directory")->required();
  auto* seed_opt = run->add_option("--seed-override", seed_override, "Replace the config seed");
  run->add_option("--policy", policy, "Which policies to run")->check(CLI::IsMember({"both", "regular", "fire"}));
  run->add_flag("--resume", resume, "Reuse pool files already present for the same config");

  auto* rerun = app.add_subcommand("rerun", "Re-run the exact experiment recorded in a manifest");
  rerun->add_option("--manifest", manifest_path, "manifest.json of a previous run")->required()->check(CLI::ExistingFile);
  rerun->add_option("--out", out_dir, "Output directory")->required();

  auto* compare = app.add_subcommand("compare", "Side-by-side deltas (B - A) of two reports");
  compare->add_option("report_a", report_a, "Baseline report.json")->required()->check(CLI::ExistingFile);
  compare->add_option("report_b", report_b, "Candidate report.json")->required()->check(CLI::ExistingFile);
  compare->add_option("--out", compare_out, "Write the delta CSV here instead of stdout");

  auto* synth = app.add_subcommand("synth", "Write a synthetic table-model benchmark");
  synth->add_option("kind", synth_kind, "modes | sentences")->required()->check(CLI::IsMember({"modes", "sentences"}));
  synth->add_option("--out", out_dir, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? fire::kExitOk : fire::kExitConfig;
  }

  try {
    if (*run || *rerun) {
      fire::RunOptions options;
      options.out_dir = out_dir;
      options.resume = resume;
      fire::RunSummary summary;
      if (*run) {
        if (*seed_opt) options.seed_override = seed_override;
        options.policy = policy == "regular" ? fire::PolicyFilter::regular
                         : policy == "fire"  ? fire::PolicyFilter::fire
                                             : fire::PolicyFilter::both;
        summary = fire::run_experiment(fire::load_experiment_config(config_path), options);
      } else {
        summary = fire::rerun_manifest(manifest_path, options);
      }
      std::cout << "wrote " << summary.result.rows.size() << " report rows to " << out_dir << " (config "
                << summary.config_hash << ")\n";
      return summary.exit_code;
    }
    if (*compare) {
      const auto a = fire::io::parse_json(fire::io::read_file(report_a), report_a);
      const auto b = fire::io::parse_json(fire::io::read_file(report_b), report_b);
      const auto table = fire::compare_reports(a, b);
      if (compare_out.empty()) {
        fire::write_delta_csv(std::cout, table);
      } else {
        std::ofstream out(compare_out);
        fire::write_delta_csv(out, table);
      }
      return fire::kExitOk;
    }
    return write_synthetic(synth_kind, out_dir);
  } catch (const fire::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return fire::kExitConfig;
  } catch (const fire::ArgumentError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return fire::kExitConfig;
  } catch (const fire::SourceError& e) {
    std::cerr << "model source error: " << e.what() << '\n';
    return fire::kExitModelSource;
  } catch (const fire::CheckerError& e) {
    std::cerr << "checker error: " << e.what() << '\n';
    return fire::kExitChecker;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return fire::kExitInternal;
  }
}
