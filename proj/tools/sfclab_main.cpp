// sfclab - scenario runner for noncausal stochastic integrals and SFC
// identification experiments.
//
//   sfclab <run|oracle-check|lil-calibrate|basis-diagnose> --config <path>
//          [--replicates N] [--seed S] [--out DIR] [--threads K]

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "sfclab/runner.hpp"
#include "sfclab/scenario.hpp"

namespace {

int run_subcommand(sfclab::Subcommand sub, const std::string& config_path,
                   long long replicates, long long seed, const std::string& out_dir,
                   long long threads) {
  std::ifstream in(config_path, std::ios::binary);
  if (!in) {
    std::cerr << "cannot open config: " << config_path << "\n";
    return 2;
  }
  std::ostringstream buf;
  buf << in.rdbuf();

  sfclab::ScenarioConfig cfg;
  try {
    cfg = sfclab::parse_config(buf.str());
  } catch (const sfclab::ConfigError& ex) {
    std::cerr << ex.what() << "\n";
    return 2;
  }
  if (replicates > 0) cfg.replicates = static_cast<std::size_t>(replicates);
  if (seed >= 0) cfg.base_seed = static_cast<std::uint64_t>(seed);
  if (!out_dir.empty()) cfg.out_dir = out_dir;
  if (threads > 0) cfg.parallelism = static_cast<std::size_t>(threads);

  const sfclab::RunSummary summary = sfclab::run_scenario(cfg, sub);

  std::printf("%s: %zu replicate(s), %.2f s", sfclab::subcommand_name(sub), cfg.replicates,
              summary.wall_seconds);
  if (!summary.failed_replicates.empty())
    std::printf(", %zu failed", summary.failed_replicates.size());
  std::printf("\n");
  for (const auto& msg : summary.failure_messages) std::printf("  ! %s\n", msg.c_str());
  for (const auto& [name, s] : summary.metrics) {
    std::printf("  %-24s mean=%-12.6g rms=%-12.6g q05=%-12.6g q50=%-12.6g q95=%-12.6g",
                name.c_str(), s.mean, s.rms, s.q05, s.q50, s.q95);
    const auto it = summary.metric_pass.find(name);
    if (it != summary.metric_pass.end()) std::printf(" [%s]", it->second ? "pass" : "FAIL");
    std::printf("\n");
  }
  if (!summary.results_csv_path.empty())
    std::printf("wrote %s\n", summary.results_csv_path.c_str());
  if (!summary.summary_json_path.empty())
    std::printf("wrote %s\n", summary.summary_json_path.c_str());
  if (summary.has_gates)
    std::printf("tolerances: %s\n", summary.all_pass ? "pass" : "FAIL");
  if (!summary.failed_replicates.empty()) return 3;
  return summary.has_gates && !summary.all_pass ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"noncausal stochastic integral laboratory"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  long long replicates = -1, seed = -1, threads = -1;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "scenario JSON")->required();
    sub->add_option("--replicates", replicates, "override replication count");
    sub->add_option("--seed", seed, "override base seed");
    sub->add_option("--out", out_dir, "override output directory");
    sub->add_option("--threads", threads, "override parallelism");
  };

  CLI::App* c_run = app.add_subcommand("run", "full identification pipeline");
  CLI::App* c_oracle = app.add_subcommand("oracle-check", "integral oracle cross-checks");
  CLI::App* c_calib = app.add_subcommand("lil-calibrate", "pure-path LIL quotient table");
  CLI::App* c_basis = app.add_subcommand("basis-diagnose", "basis condition diagnostics");
  for (CLI::App* sub : {c_run, c_oracle, c_calib, c_basis}) add_common(sub);

  CLI11_PARSE(app, argc, argv);

  sfclab::Subcommand sub = sfclab::Subcommand::Run;
  if (c_oracle->parsed()) sub = sfclab::Subcommand::OracleCheck;
  else if (c_calib->parsed()) sub = sfclab::Subcommand::LilCalibrate;
  else if (c_basis->parsed()) sub = sfclab::Subcommand::BasisDiagnose;

  try {
    return run_subcommand(sub, config_path, replicates, seed, out_dir, threads);
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 2;
  }
}
