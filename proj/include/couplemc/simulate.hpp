#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include "couplemc/coupling.hpp"
#include "couplemc/model.hpp"

namespace couplemc {

struct StepPolicy {
  double h_max = 1.0 / 1024.0;
  double h_min = 1e-9;
  double stiffness_factor = 0.1;  // step cap 0.1 * xi(t) / u(|Z|^2) while uncoupled
  std::uint64_t rng_seed = 0;
  double ball_radius = 1e6;
  double blowup_guard = 1e4;  // flag the path when |eta|^2 dt exceeds this
  bool record_trajectory = false;
  static constexpr const char* scheme_tag = "euler-maruyama";
};

struct PathFlags {
  bool coupled = false;
  bool exited = false;
  bool weight_exploded = false;
  bool step_floor_hit = false;
  bool numerical_failure = false;
  bool excluded() const {
    return exited || weight_exploded || numerical_failure;
  }
};

struct PathRecord {
  int dim = 0;
  double T = 0.0;
  // trajectory storage, filled only when StepPolicy::record_trajectory
  std::vector<double> times;
  std::vector<double> x_path;  // node-major, dim doubles per node
  std::vector<double> y_path;  // empty for single-path runs
  std::vector<double> log_r_path;

  double log_r = 0.0;
  double log_r_mid = 0.0;  // log R at the first node with t >= T/2
  std::optional<double> tau;
  std::optional<double> exit_time;
  double terminal_segment_distance =
      std::numeric_limits<double>::quiet_NaN();  // SFDE runs only
  PathFlags flags;
  Vec x_final, y_final;
};

PathRecord simulate_sde(const SdeSpec& spec, const Vec& x0, double T,
                        const StepPolicy& policy, std::uint64_t path_index = 0);

PathRecord simulate_coupled_sde(const SdeSpec& spec, const CouplingConfig& cfg,
                                const StepPolicy& policy,
                                std::uint64_t path_index = 0);

/// Plain SFDE path on [0, horizon], initial segment on [-r0, 0].
PathRecord simulate_sfde(const SfdeSpec& spec, const SegmentPath& x0,
                         double horizon, const StepPolicy& policy,
                         std::uint64_t path_index = 0);

/// Coupled SFDE on [0, T + r0]; the xi~ attracting drift acts on [0, T).
PathRecord simulate_coupled_sfde(const SfdeSpec& spec,
                                 const CouplingConfig& cfg,
                                 const StepPolicy& policy,
                                 std::uint64_t path_index = 0);

struct UniquenessRow {
  double h = 0.0;
  double eps = 0.0;
  double max_sup_sq = 0.0;  // max over replicates of sup_t |X - X~|^2
  int censored = 0;         // replicates lost to exits / blowups
};

/// Drives two Euler paths with the same Brownian increments from x0 and
/// x0 + eps e1 (respectively phi and phi + eps) and measures the worst
/// squared separation over the grid.
std::vector<UniquenessRow> uniqueness_probe(
    const SdeSpec& spec, const Vec& x0, double T,
    const std::vector<double>& mesh_levels,
    const std::vector<double>& perturbations, std::uint64_t seed,
    int n_rep = 8);

std::vector<UniquenessRow> uniqueness_probe(
    const SfdeSpec& spec, const SegmentPath& x0, double T,
    const std::vector<double>& mesh_levels,
    const std::vector<double>& perturbations, std::uint64_t seed,
    int n_rep = 8);

/// Runs body(i) for i in [0, n) on `workers` threads. Work is claimed in
/// chunks; callers must write results only to slot i, which keeps every
/// aggregate identical across worker counts.
void parallel_paths(std::size_t n, int workers,
                    const std::function<void(std::size_t)>& body);

}  // namespace couplemc
