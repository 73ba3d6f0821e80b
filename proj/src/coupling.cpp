#include "couplemc/coupling.hpp"

#include <cmath>

namespace couplemc {

double CouplingConfig::start_distance() const {
  if (is_sfde()) {
    if (!start_phi || !start_psi)
      throw ConfigError("CouplingConfig: both segments must be set");
    return start_phi->view().sup_distance(start_psi->view());
  }
  return (start_x - start_y).norm();
}

void CouplingConfig::validate() const {
  if (!(T > 0.0)) throw ConfigError("coupling.T: must be > 0");
  if (!(theta > 0.0 && theta < 2.0))
    throw ConfigError("coupling.theta: must lie in (0, 2)");
  if (!(gamma > 0.0)) throw ConfigError("coupling.gamma: must be > 0");
  if (eps_couple < 0.0) throw ConfigError("coupling.eps_couple: must be >= 0");
  if (is_sfde()) {
    if (!start_psi) throw ConfigError("coupling: phi set but psi missing");
    start_phi->validate();
    start_psi->validate();
    if (start_phi->dim != start_psi->dim || start_phi->h != start_psi->h ||
        start_phi->values.size() != start_psi->values.size())
      throw ConfigError("coupling: phi and psi must share grid step and span");
    if (start_distance() == 0.0)
      throw ConfigError("coupling: start segments must differ");
  } else {
    if (start_x.size() == 0 || start_x.size() != start_y.size())
      throw ConfigError("coupling: start_x and start_y must be set with equal dim");
    if (start_x == start_y)
      throw ConfigError("coupling: start points must differ");
  }
}

namespace coupling {

double xi(const CouplingConfig& cfg, double K_T, double t) {
  if (!(K_T > 0.0)) throw ConfigError("xi: K(T) must be > 0");
  if (t < 0.0 || t >= cfg.T) throw std::domain_error("xi: t must lie in [0, T)");
  return (2.0 - cfg.theta) / (2.0 * K_T) *
         (1.0 - std::exp(2.0 * K_T / cfg.gamma * (t - cfg.T)));
}

double xi_prime(const CouplingConfig& cfg, double K_T, double t) {
  if (!(K_T > 0.0)) throw ConfigError("xi_prime: K(T) must be > 0");
  if (t < 0.0 || t >= cfg.T)
    throw std::domain_error("xi_prime: t must lie in [0, T)");
  return -(2.0 - cfg.theta) / cfg.gamma *
         std::exp(2.0 * K_T / cfg.gamma * (t - cfg.T));
}

double xi_tilde(const CouplingConfig& cfg, double t) {
  if (t < 0.0 || t > cfg.T)
    throw std::domain_error("xi_tilde: t must lie in [0, T]");
  return (cfg.T - t) / (2.0 * cfg.gamma);
}

double xi_tilde_prime(const CouplingConfig& cfg) {
  return -1.0 / (2.0 * cfg.gamma);
}

Vec eta_sde(const SdeSpec& spec, const CouplingConfig& cfg, double t,
            const Vec& X, const Vec& Y) {
  if (X == Y)
    throw ConfigError("eta_sde: X == Y, coupling time already reached");
  Mat sx(spec.dim, spec.dim);
  spec.sigma(t, X, sx);
  const Vec z = X - Y;
  Eigen::PartialPivLU<Mat> lu(sx);
  if (std::abs(lu.determinant()) < 1e-300)
    throw NumericalError("eta_sde: sigma(t, X) is numerically singular");
  Vec w = lu.solve(z);
  const double u = spec.modulus.u(z.squaredNorm());
  const double x = xi(cfg, spec.K(cfg.T), t);
  return Vec((u / x) * w);
}

CoupledDrift coupled_drift_sde(const SdeSpec& spec, const CouplingConfig& cfg,
                               double t, const Vec& X, const Vec& Y) {
  CoupledDrift d;
  d.drift_x.resize(spec.dim);
  d.drift_y.resize(spec.dim);
  spec.drift(t, X, d.drift_x);
  spec.drift(t, Y, d.drift_y);
  const Vec eta = eta_sde(spec, cfg, t, X, Y);
  Mat sy(spec.dim, spec.dim);
  spec.sigma(t, Y, sy);
  d.drift_y += sy * eta;
  return d;
}

CoupledDriftSfde coupled_drift_sfde(const SfdeSpec& spec,
                                    const CouplingConfig& cfg, double t,
                                    const SegmentView& x_seg,
                                    const SegmentView& y_seg) {
  const int dim = spec.dim;
  CoupledDriftSfde d;
  d.drift_x.resize(dim);
  d.drift_y.resize(dim);
  d.lambda = Vec::Zero(dim);

  Vec X = x_seg.at_lag(0.0);
  Vec Y = y_seg.at_lag(0.0);
  Vec ax(dim), ay(dim), b(dim);
  spec.functional_drift(t, x_seg, ax);
  spec.functional_drift(t, y_seg, ay);

  spec.drift(t, X, b);
  d.drift_x = b + ax;

  spec.drift(t, Y, b);
  d.drift_y = b + ax;  // Y carries a(t, X_t) by construction

  Mat sy(dim, dim);
  spec.sigma(t, Y, sy);
  Eigen::PartialPivLU<Mat> lu_y(sy);
  if (std::abs(lu_y.determinant()) < 1e-300)
    throw NumericalError("coupled_drift_sfde: sigma(t, Y) singular");
  d.lambda = lu_y.solve(ax - ay);

  if (t < cfg.T && X != Y) {
    Mat sx(dim, dim);
    spec.sigma(t, X, sx);
    Eigen::PartialPivLU<Mat> lu_x(sx);
    if (std::abs(lu_x.determinant()) < 1e-300)
      throw NumericalError("coupled_drift_sfde: sigma(t, X) singular");
    const Vec z = X - Y;
    const double u = spec.modulus.u(z.squaredNorm());
    const double xt = xi_tilde(cfg, t);
    const Vec eta = (u / xt) * lu_x.solve(z);
    d.drift_y += sy * eta;
    d.lambda += eta;
  }
  return d;
}

double girsanov_increment(const Vec& eta, const Vec& dB, double dt) {
  return -eta.dot(dB) - 0.5 * eta.squaredNorm() * dt;
}

double girsanov_increment(const SdeSpec& spec, const CouplingConfig& cfg,
                          double t, const Vec& X, const Vec& Y, const Vec& dB,
                          double dt, CouplingKind kind, const Vec* lambda) {
  if (kind == CouplingKind::Sfde) {
    if (lambda == nullptr)
      throw ConfigError("girsanov_increment: sfde kind requires lambda");
    return girsanov_increment(*lambda, dB, dt);
  }
  if (X == Y) return 0.0;  // post-coupling: eta vanishes
  return girsanov_increment(eta_sde(spec, cfg, t, X, Y), dB, dt);
}

}  // namespace coupling
}  // namespace couplemc
