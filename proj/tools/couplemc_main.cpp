#include <CLI11.hpp>
#include <cstdio>
#include <iostream>

#include "couplemc/experiment.hpp"

namespace {

struct CommonOpts {
  std::string config_path;
  std::string out_dir;
  std::int64_t seed = -1;
  std::int64_t paths = 0;
  double step = 0.0;
  int workers = 0;
  bool dump_paths = false;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--config", o.config_path, "experiment config (JSON)")
      ->required();
  cmd->add_option("--seed", o.seed, "override solver.seed");
  cmd->add_option("--paths", o.paths, "override solver.paths");
  cmd->add_option("--step", o.step, "override solver.h_max");
  cmd->add_option("--workers", o.workers, "override solver.workers");
  cmd->add_option("--out", o.out_dir, "override output.dir");
  cmd->add_flag("--dump-paths", o.dump_paths,
                "write per-path CSV summaries and a binary trajectory sample");
}

couplemc::ExperimentConfig load(const CommonOpts& o) {
  couplemc::ExperimentConfig cfg = couplemc::config_from_file(o.config_path);
  if (o.seed >= 0) cfg.seed = static_cast<std::uint64_t>(o.seed);
  if (o.paths > 0) cfg.paths = static_cast<std::size_t>(o.paths);
  if (o.step > 0.0) cfg.h_max = o.step;
  if (o.workers > 0) cfg.workers = o.workers;
  if (!o.out_dir.empty()) cfg.out_dir = o.out_dir;
  if (o.dump_paths) cfg.dump_paths = true;
  return cfg;
}

int finish(const couplemc::RunOutcome& outcome,
           const couplemc::ExperimentConfig& cfg) {
  couplemc::write_outputs(outcome, cfg);
  for (const auto& v : outcome.report["verdicts"]) {
    std::printf("[%s] %s  lhs=%.6g rhs=%.6g margin=%.6g\n",
                v["pass"].get<bool>() ? "PASS" : "FAIL",
                v["name"].get<std::string>().c_str(), v["lhs"].get<double>(),
                v["rhs"].get<double>(), v["margin"].get<double>());
  }
  if (outcome.unreliable)
    std::printf("[WARN] run flagged unreliable: excluded paths above 0.1%%\n");
  std::printf("report: %s/report.json\n", cfg.out_dir.c_str());
  return outcome.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"coupling-by-change-of-measure Monte Carlo verifier"};
  app.require_subcommand(1);

  CommonOpts run_opts, bounds_opts, check_opts, probe_opts;
  auto* cmd_run =
      app.add_subcommand("run", "execute the configured verification suites");
  add_common(cmd_run, run_opts);
  auto* cmd_bounds = app.add_subcommand(
      "bounds", "evaluate closed-form bounds only, no simulation");
  add_common(cmd_bounds, bounds_opts);
  auto* cmd_check = app.add_subcommand(
      "check-model", "run assumption spot checks for the configured model");
  add_common(cmd_check, check_opts);
  auto* cmd_probe = app.add_subcommand(
      "probe-uniqueness", "shared-noise pathwise-uniqueness probe");
  add_common(cmd_probe, probe_opts);

  CLI11_PARSE(app, argc, argv);

  try {
    if (cmd_run->parsed()) {
      auto cfg = load(run_opts);
      return finish(couplemc::run_experiment(cfg), cfg);
    }
    if (cmd_bounds->parsed()) {
      auto cfg = load(bounds_opts);
      return finish(couplemc::run_bounds_only(cfg), cfg);
    }
    if (cmd_check->parsed()) {
      auto cfg = load(check_opts);
      return finish(couplemc::run_check_model(cfg), cfg);
    }
    if (cmd_probe->parsed()) {
      auto cfg = load(probe_opts);
      return finish(couplemc::run_uniqueness_probe(cfg), cfg);
    }
  } catch (const couplemc::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 1;
}
