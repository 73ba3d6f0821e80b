#pragma once

#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "couplemc/harnack.hpp"
#include "couplemc/model.hpp"

namespace couplemc {

/// One fully-specified verification run. Mirrors the JSON config format:
/// see configs/ for worked examples. A seed is mandatory: runs never pick
/// a nondeterministic default.
struct ExperimentConfig {
  std::string model_name;
  model::Params model_params;

  // coupling
  double T = 1.0;
  double theta = 1.0;
  std::optional<double> gamma;  // default: the modulus' own gamma
  Vec x, y;                     // SDE start points
  std::optional<Vec> phi, psi;  // SFDE constant start segments
  double eps_couple = 0.0;
  bool weight_through_segment_merge = false;

  // solver
  double h_max = 1.0 / 1024.0;
  double h_min = 1e-9;
  double stiffness_factor = 0.1;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::size_t paths = 10000;
  double ball_radius = 1e6;
  double blowup_guard = 1e4;
  int workers = 1;

  // suites
  std::vector<std::string> suites;
  std::vector<double> power_q;

  // bound evaluation knobs
  std::string log_harnack_variant = "both";  // stated | lemma | both
  modulus::BihariVariant bihari_variant = modulus::BihariVariant::AsStated;
  double bound_scale = 1.0;  // negative-control hook; 1.0 in normal use
  bool minimize_over_K = false;
  double coupling_threshold = 0.99;

  // test function
  std::string f_id = "exp_c";
  Vec f_c;
  double f_clip = 1e12;
  Vec f_center;
  double f_radius = 1.0;
  double f_width = 0.5;

  // uniqueness probe
  std::vector<double> probe_mesh;
  std::vector<double> probe_eps;
  int probe_reps = 8;
  std::optional<Vec> probe_x0;

  // output
  std::string out_dir = ".";
  bool dump_paths = false;
};

/// Parses and validates; accumulates all problems and throws a ConfigError
/// whose message lists one "field.path: problem" line per issue.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig config_from_file(const std::string& path);

struct RunOutcome {
  nlohmann::ordered_json report;
  bool all_pass = false;
  bool unreliable = false;
  int exit_code = 1;
};

/// Executes the configured suites and assembles the report. Report bodies
/// are bit-identical across worker counts for fixed config and seed.
RunOutcome run_experiment(const ExperimentConfig& cfg);

/// Bound evaluation only, no simulation.
RunOutcome run_bounds_only(const ExperimentConfig& cfg);

/// Assumption spot checks only.
RunOutcome run_check_model(const ExperimentConfig& cfg);

/// Pathwise-uniqueness probe only.
RunOutcome run_uniqueness_probe(const ExperimentConfig& cfg);

/// Writes report.json (and per-suite CSVs when dump_paths) under out_dir.
void write_outputs(const RunOutcome& outcome, const ExperimentConfig& cfg);

}  // namespace couplemc
