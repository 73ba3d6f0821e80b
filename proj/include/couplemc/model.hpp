#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "couplemc/common.hpp"
#include "couplemc/modulus.hpp"

namespace couplemc {

using DriftFn = std::function<void(double t, const Vec& x, Vec& out)>;
using SigmaFn = std::function<void(double t, const Vec& x, Mat& out)>;
using TimeFn = std::function<double(double t)>;

/// Read-only window [t - r0, t] of a path stored on a uniform grid.
/// Lags are linearly interpolated between grid nodes; the sup norm is taken
/// over grid nodes only, consistent with the integrator's resolution.
class SegmentView {
 public:
  SegmentView(const double* flat, int dim, double h, long n_lag_nodes)
      : flat_(flat), dim_(dim), h_(h), n_lag_(n_lag_nodes) {}

  int dim() const { return dim_; }
  double r0() const { return h_ * static_cast<double>(n_lag_); }
  long nodes() const { return n_lag_ + 1; }

  // value at lag in [-r0, 0]; node 0 of the window is t - r0
  void at_lag(double lag, Vec& out) const;
  Vec at_lag(double lag) const {
    Vec out(dim_);
    at_lag(lag, out);
    return out;
  }
  const double* node(long i) const { return flat_ + i * dim_; }

  double sup_norm() const;
  double sup_distance(const SegmentView& other) const;

 private:
  const double* flat_;
  int dim_;
  double h_;
  long n_lag_;
};

/// Owning segment on a uniform grid over [-r0, 0].
struct SegmentPath {
  double h = 0.0;
  int dim = 0;
  std::vector<double> values;  // (n_lag+1) * dim, node 0 at -r0

  static SegmentPath constant(const Vec& v, double r0, double h);
  long n_lag() const { return static_cast<long>(values.size()) / dim - 1; }
  double r0() const { return h * static_cast<double>(n_lag()); }
  SegmentView view() const {
    return SegmentView(values.data(), dim, h, n_lag());
  }
  void validate() const;  // r0 must be an integer multiple of h
};

using SegmentDriftFn =
    std::function<void(double t, const SegmentView& seg, Vec& out)>;

struct SdeSpec {
  int dim = 1;
  DriftFn drift;
  SigmaFn sigma;
  TimeFn K;       // (H1) drift constant, increasing
  TimeFn Ktilde;  // (H1) diffusion constant, increasing
  TimeFn lambda;  // (H2) ellipticity, decreasing positive
  std::optional<TimeFn> delta;  // (H3), increasing nonnegative
  ModulusSpec modulus;
  ModulusSpec modulus_tilde;
  std::string name = "custom";
};

struct SfdeSpec {
  int dim = 1;
  double r0 = 1.0;
  DriftFn drift;                  // b(t, x)
  SegmentDriftFn functional_drift;  // a(t, X_t)
  SigmaFn sigma;
  TimeFn K, K1, K2, K3, K4;  // assumption (A) constants
  ModulusSpec modulus;       // class Ubar
  std::string name = "custom";
};

namespace model {

using ModelSpec = std::variant<SdeSpec, SfdeSpec>;
using Params = std::map<std::string, double>;

/// Catalog: ou, log_lipschitz_drift, sine_diffusion (SDE); delay_ou (SFDE).
ModelSpec catalog_model(const std::string& name, const Params& params = {});
SdeSpec catalog_sde(const std::string& name, const Params& params = {});
SfdeSpec catalog_sfde(const std::string& name, const Params& params = {});
bool catalog_is_sfde(const std::string& name);

struct SpotCheckOptions {
  int n_pairs = 100000;
  double box_halfwidth = 5.0;
  double T = 1.0;  // time grid {0, T/4, T/2, 3T/4, T}
  std::uint64_t seed = 0;
};

struct SpotCheckReport {
  std::string assumption;
  int n_samples = 0;
  int n_skipped = 0;
  double max_ratio = 0.0;  // max over samples of LHS/RHS
  bool pass = false;       // max_ratio <= 1 + 1e-9
  double worst_t = 0.0;
  Vec worst_x, worst_y;
};

SpotCheckReport spot_check_H1(const SdeSpec& spec, const SpotCheckOptions& opt = {});
SpotCheckReport spot_check_H2(const SdeSpec& spec, const SpotCheckOptions& opt = {});
SpotCheckReport spot_check_H3(const SdeSpec& spec, const SpotCheckOptions& opt = {});
std::vector<SpotCheckReport> spot_check_A(const SfdeSpec& spec,
                                          const SpotCheckOptions& opt = {});

/// All spot checks a spec declares constants for.
std::vector<SpotCheckReport> spot_check_all(const ModelSpec& spec,
                                            const SpotCheckOptions& opt = {});

}  // namespace model
}  // namespace couplemc
