#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "haf/commands.hpp"
#include "haf/error.hpp"
#include "haf/version.hpp"

namespace {

int with_config(const std::string& path, const std::function<int(const haf::Config&)>& body) {
  try {
    return body(haf::Config::load(path));
  } catch (const haf::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return haf::kExitFatal;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Human-aligned faithfulness evaluation of toxicity explanations"};
  app.set_version_flag("--version", std::string(haf::kVersion));
  app.require_subcommand(1);

  std::string config, dataset, out_dir, run_dir, format, weights;

  auto* run = app.add_subcommand("run", "Run every stage over a dataset and score it");
  run->add_option("--config", config, "Config file (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--dataset", dataset, "Dataset file (.jsonl or .csv)")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out_dir, "Run directory; re-running resumes")->required();

  auto* score = app.add_subcommand("score", "Recompute metrics offline from a run directory");
  score->add_option("--run", run_dir, "Run directory")->required();
  score->add_option("--weights", weights, "Weights override (JSON)")->check(CLI::ExistingFile);

  auto* report = app.add_subcommand("report", "Write summary tables for a run");
  report->add_option("--run", run_dir, "Run directory")->required();
  report->add_option("--format", format, "json, csv or md")->required();

  auto* compare = app.add_subcommand("compare-sim", "Compare two similarity providers on a run's reasons");
  compare->add_option("--config", config, "Config file with a \"compare\" section")->required()->check(CLI::ExistingFile);
  compare->add_option("--run", run_dir, "Run directory")->required();

  CLI11_PARSE(app, argc, argv);

  if (*run) {
    return with_config(config, [&](const haf::Config& c) { return haf::cmd_run(c, dataset, out_dir, std::cout, std::cerr); });
  }
  if (*score) {
    std::optional<std::filesystem::path> w;
    if (!weights.empty()) w = weights;
    return haf::cmd_score(run_dir, w, std::cout, std::cerr);
  }
  if (*report) return haf::cmd_report(run_dir, format, std::cout, std::cerr);
  return with_config(config, [&](const haf::Config& c) { return haf::cmd_compare_sim(c, run_dir, std::cout, std::cerr); });
}
