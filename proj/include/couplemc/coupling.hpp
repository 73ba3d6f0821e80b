#pragma once

#include <optional>

#include "couplemc/common.hpp"
#include "couplemc/model.hpp"

namespace couplemc {

/// Configuration of one coupling experiment: horizon, schedule tuning theta,
/// start points (SDE) or start segments (SFDE), numerical coupling threshold.
struct CouplingConfig {
  double T = 1.0;
  double theta = 1.0;   // in (0, 2)
  double gamma = 1.0;   // constant of condition (U) for the modulus in use
  Vec start_x, start_y;
  std::optional<SegmentPath> start_phi, start_psi;
  double eps_couple = 0.0;  // 0 selects the default 1e-6 * (1 + |x - y|)

  // SFDE only: keep accumulating the functional-drift part of the Girsanov
  // weight after the coupling time until the two segments have merged
  // (t >= tau + r0). Off by default: the weight is frozen at tau.
  bool weight_through_segment_merge = false;

  bool is_sfde() const { return start_phi.has_value(); }
  double start_distance() const;
  double effective_eps() const {
    return eps_couple > 0.0 ? eps_couple : 1e-6 * (1.0 + start_distance());
  }
  void validate() const;
};

namespace coupling {

/// xi(t) = ((2 - theta) / (2 K_T)) [1 - e^{(2 K_T / gamma)(t - T)}] on [0, T)
double xi(const CouplingConfig& cfg, double K_T, double t);
double xi_prime(const CouplingConfig& cfg, double K_T, double t);

/// xi~(t) = (T - t) / (2 gamma) on [0, T]
double xi_tilde(const CouplingConfig& cfg, double t);
double xi_tilde_prime(const CouplingConfig& cfg);

struct CoupledDrift {
  Vec drift_x, drift_y;
};
/// Drifts of the coupled SDE system: X keeps its own drift, Y gets the
/// attracting term (u(|Z|^2)/xi(t)) sigma(t,Y) sigma(t,X)^{-1} Z added.
CoupledDrift coupled_drift_sde(const SdeSpec& spec, const CouplingConfig& cfg,
                               double t, const Vec& X, const Vec& Y);

struct CoupledDriftSfde {
  Vec drift_x, drift_y, lambda;
};
/// SFDE version. Y's functional drift uses a(t, X_t); the xi~ attracting term
/// carries the indicator 1_{[0,T)}(t). lambda is the Girsanov integrand.
CoupledDriftSfde coupled_drift_sfde(const SfdeSpec& spec,
                                    const CouplingConfig& cfg, double t,
                                    const SegmentView& x_seg,
                                    const SegmentView& y_seg);

/// Girsanov integrand of the SDE coupling:
///   eta = u(|Z|^2) sigma(t,X)^{-1} Z / xi(t)
Vec eta_sde(const SdeSpec& spec, const CouplingConfig& cfg, double t,
            const Vec& X, const Vec& Y);

/// One log-weight increment: -<eta, dB> - 0.5 |eta|^2 dt.
double girsanov_increment(const Vec& eta, const Vec& dB, double dt);

enum class CouplingKind { Sde, Sfde };

/// Spec-level convenience wrapper. For kind == Sde the integrand is derived
/// from (spec, cfg, t, X, Y); for kind == Sfde the caller passes lambda.
double girsanov_increment(const SdeSpec& spec, const CouplingConfig& cfg,
                          double t, const Vec& X, const Vec& Y, const Vec& dB,
                          double dt, CouplingKind kind,
                          const Vec* lambda = nullptr);

}  // namespace coupling
}  // namespace couplemc
