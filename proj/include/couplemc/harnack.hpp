#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "couplemc/coupling.hpp"
#include "couplemc/model.hpp"
#include "couplemc/modulus.hpp"
#include "couplemc/simulate.hpp"

namespace couplemc::harnack {

// ---------------------------------------------------------------------------
// Closed-form bounds

enum class LogHarnackVariant { Stated, Lemma };
const char* to_string(LogHarnackVariant v);

/// K(T) phi(|x-y|^2) / (lambda(T)^a (1 - exp[-2 K(T) T / gamma]))
/// with a = 1 for the stated variant, a = 2 for the lemma variant.
double log_harnack_bound(const SdeSpec& spec, const ModulusSpec& m, double T,
                         const Vec& x, const Vec& y, LogHarnackVariant v);

struct PowerThresholds {
  double stated = 0.0;  // 1 + (delta + 2 lambda sqrt(delta)) / lambda^2
  double proof = 0.0;   // 1 + (delta^2 + 2 lambda delta) / lambda^2
  double conservative() const { return std::max(stated, proof); }
};
PowerThresholds power_q_thresholds(const SdeSpec& spec, double T);

/// Exponent of the power-Harnack inequality
///   (P_T f(y))^q <= P_T f^q(x) exp[bound];
/// requires q above the conservative threshold and delta(T) > 0.
double power_harnack_exponent(const SdeSpec& spec, const ModulusSpec& m,
                              double T, const Vec& x, const Vec& y, double q);

/// theta for which the moment-exponent relation q/(q-1) = 1 + p matches a
/// requested power q: theta = 2 delta / (lambda (sqrt(q) - 1)).
double theta_for_power(const SdeSpec& spec, double T, double q);

struct EntropyMomentBounds {
  double entropy = 0.0;               // bound on E[R log R]
  std::optional<double> p;            // moment exponent p, absent when delta = 0
  std::optional<double> moment_rhs;   // bound on E[R^{1+p}]
  std::string note;
};
EntropyMomentBounds entropy_and_moment_bounds(const SdeSpec& spec,
                                              const ModulusSpec& m, double T,
                                              const Vec& x, const Vec& y,
                                              double theta, double gamma);

struct SfdeBoundResult {
  double value = 0.0;
  bool phi_overflow = false;
  modulus::BihariVariant variant = modulus::BihariVariant::AsStated;
};
/// K4(T) ( 2 gamma phi(|phi(0)-psi(0)|^2) / T
///          + T {8 K1^2 + 8 K2 K3 + K2} Phi(T, ||phi-psi||_inf) )
SfdeBoundResult sfde_log_harnack_bound(const SfdeSpec& spec,
                                       const ModulusSpec& m, double T,
                                       const SegmentPath& phi,
                                       const SegmentPath& psi,
                                       modulus::BihariVariant variant);

struct MinimizedBound {
  double K_best = 0.0;
  double bound_best = 0.0;
};
/// For models whose (H1) holds for every K > 0 (dissipative drift), scan a
/// log grid K in [1e-3, 10] and report the smallest bound.
MinimizedBound minimize_log_harnack_over_K(const SdeSpec& spec,
                                           const ModulusSpec& m, double T,
                                           const Vec& x, const Vec& y,
                                           LogHarnackVariant v,
                                           int points_per_decade = 8);

// ---------------------------------------------------------------------------
// Test functions (fixed, versioned catalog)

inline constexpr int kTestCatalogVersion = 1;

struct TestFunction {
  std::string id;
  std::function<double(const Vec&)> f;
};
TestFunction tf_constant(double v);
TestFunction tf_exp(const Vec& c, double clip = 1e12);       // min(e^{<c,z>}, clip)
TestFunction tf_bump(const Vec& center, double radius, double width);
TestFunction tf_one_plus_bump(const Vec& center, double radius, double width);

// ---------------------------------------------------------------------------
// Monte Carlo estimators

struct Estimate {
  double mean = 0.0;
  double se = 0.0;
  std::size_t n = 0;
};

struct RunStats {
  std::size_t n_paths = 0;
  std::size_t n_excluded = 0;  // exited / exploded / numerical failures
  std::size_t n_exploded = 0;
  std::size_t n_exited = 0;
  std::size_t n_floor = 0;
  std::size_t n_coupled = 0;
  bool unreliable = false;  // excluded paths above 0.1% of the batch
};

Estimate estimate_semigroup(const SdeSpec& spec, const Vec& x, double T,
                            const TestFunction& f, std::size_t n_paths,
                            const StepPolicy& policy, int workers = 0);
Estimate estimate_semigroup(const SfdeSpec& spec, const SegmentPath& x0,
                            double horizon, const TestFunction& f,
                            std::size_t n_paths, const StepPolicy& policy,
                            int workers = 0);

/// Per-path summaries of a coupled batch, index-ordered (deterministic
/// reductions regardless of worker count).
struct CoupledBatch {
  std::vector<double> log_r, log_r_mid, tau, f_y, f_x, log_f_y, seg_dist;
  std::vector<std::uint8_t> coupled, excluded, exploded, exited, floor_hit;
  std::size_t size() const { return log_r.size(); }
};
CoupledBatch run_coupled_batch(const SdeSpec& spec, const CouplingConfig& cfg,
                               const TestFunction& f, std::size_t n_paths,
                               const StepPolicy& policy, int workers = 0);
CoupledBatch run_coupled_batch(const SfdeSpec& spec, const CouplingConfig& cfg,
                               const TestFunction& f, std::size_t n_paths,
                               const StepPolicy& policy, int workers = 0);

struct WeightedEstimates {
  Estimate weighted_f;      // E[R f(Y(T))], estimates P_T f(start of Y)
  Estimate weighted_log_f;  // E[R log f(Y(T))]
  Estimate plain_f;         // E[f(X(T))], estimates P_T f(start of X)
  Estimate entropy;         // E[R log R]
  std::map<double, Estimate> moments;  // exponent -> E[R^exponent]
  double coupled_fraction_weighted = 0.0;  // sum R 1_coupled / sum R
  double coupled_fraction_plain = 0.0;
  double weight_mean = 0.0;   // E[R], equals 1 for the exact discrete density
  Estimate weight_mid;        // E[R(t)] at the node nearest T/2 (truncated weight)
  RunStats stats;
};
WeightedEstimates reduce_batch(const CoupledBatch& batch,
                               const std::vector<double>& moment_exponents);

WeightedEstimates estimate_weighted(const SdeSpec& spec,
                                    const CouplingConfig& cfg,
                                    const TestFunction& f, std::size_t n_paths,
                                    const StepPolicy& policy,
                                    const std::vector<double>& moment_exponents = {},
                                    int workers = 0);
WeightedEstimates estimate_weighted(const SfdeSpec& spec,
                                    const CouplingConfig& cfg,
                                    const TestFunction& f, std::size_t n_paths,
                                    const StepPolicy& policy,
                                    const std::vector<double>& moment_exponents = {},
                                    int workers = 0);

// ---------------------------------------------------------------------------
// Verdicts

struct Verdict {
  std::string name;
  bool pass = false;
  double lhs = 0.0;
  double rhs = 0.0;
  double margin = 0.0;        // rhs - lhs
  double se_combined = 0.0;
  std::string note;
};

/// pass iff lhs <= rhs + 3 * combined SE
Verdict make_verdict(const std::string& name, double lhs, double se_lhs,
                     double rhs, double se_rhs, const std::string& note = "");

}  // namespace couplemc::harnack
