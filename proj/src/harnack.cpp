#include "couplemc/harnack.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace couplemc::harnack {

namespace {
constexpr double kLogFloor = 1e-300;

double phi_of_start(const ModulusSpec& m, const Vec& x, const Vec& y) {
  return modulus::eval_phi(m, (x - y).squaredNorm());
}

void require_condition_U(const ModulusSpec& m, double gamma) {
  const auto chk = modulus::check_condition_U(m, gamma);
  if (!chk.pass)
    throw ConfigError(
        "condition (U) fails for the supplied gamma (max ratio " +
        std::to_string(chk.max_ratio) + " at s = " + std::to_string(chk.argmax) +
        ")");
}

double gamma_of(const ModulusSpec& m) {
  if (!m.gamma)
    throw ConfigError("modulus carries no gamma for condition (U)");
  return *m.gamma;
}
}  // namespace

const char* to_string(LogHarnackVariant v) {
  return v == LogHarnackVariant::Stated ? "stated" : "lemma";
}

double log_harnack_bound(const SdeSpec& spec, const ModulusSpec& m, double T,
                         const Vec& x, const Vec& y, LogHarnackVariant v) {
  const double gamma = gamma_of(m);
  require_condition_U(m, gamma);
  if (x == y) return 0.0;
  const double K = spec.K(T);
  const double lam = spec.lambda(T);
  if (!(K > 0.0) || !(lam > 0.0))
    throw ConfigError("log_harnack_bound: K(T) and lambda(T) must be > 0");
  const double phi = phi_of_start(m, x, y);
  const double denom_lam = v == LogHarnackVariant::Stated ? lam : lam * lam;
  return K * phi / (denom_lam * (1.0 - std::exp(-2.0 * K * T / gamma)));
}

PowerThresholds power_q_thresholds(const SdeSpec& spec, double T) {
  if (!spec.delta) throw ConfigError("power_q_thresholds: spec has no delta");
  const double del = (*spec.delta)(T);
  const double lam = spec.lambda(T);
  if (!(del > 0.0))
    throw ConfigError("power_q_thresholds: delta(T) must be > 0");
  PowerThresholds th;
  th.stated = 1.0 + (del + 2.0 * lam * std::sqrt(del)) / (lam * lam);
  th.proof = 1.0 + (del * del + 2.0 * lam * del) / (lam * lam);
  return th;
}

double power_harnack_exponent(const SdeSpec& spec, const ModulusSpec& m,
                              double T, const Vec& x, const Vec& y, double q) {
  const double gamma = gamma_of(m);
  const auto th = power_q_thresholds(spec, T);
  if (!(q > th.conservative()))
    throw std::domain_error(
        "power_harnack_exponent: q = " + std::to_string(q) +
        " must exceed both thresholds (stated " + std::to_string(th.stated) +
        ", proof " + std::to_string(th.proof) + ")");
  const double del = (*spec.delta)(T);
  const double lam = spec.lambda(T);
  const double sq = std::sqrt(q);
  if (!((sq - 1.0) * lam - del > 0.0))
    throw std::domain_error(
        "power_harnack_exponent: (sqrt(q)-1) lambda - delta must be > 0");
  if (x == y) return 0.0;
  const double K = spec.K(T);
  const double phi = phi_of_start(m, x, y);
  return K * sq * (sq - 1.0) * phi /
         (2.0 * del * ((sq - 1.0) * lam - del) *
          (1.0 - std::exp(-2.0 * K * T / gamma)));
}

double theta_for_power(const SdeSpec& spec, double T, double q) {
  if (!spec.delta) throw ConfigError("theta_for_power: spec has no delta");
  const double del = (*spec.delta)(T);
  const double lam = spec.lambda(T);
  const double theta = 2.0 * del / (lam * (std::sqrt(q) - 1.0));
  if (!(theta > 0.0 && theta < 2.0))
    throw std::domain_error("theta_for_power: resulting theta outside (0,2)");
  return theta;
}

EntropyMomentBounds entropy_and_moment_bounds(const SdeSpec& spec,
                                              const ModulusSpec& m, double T,
                                              const Vec& x, const Vec& y,
                                              double theta, double gamma) {
  if (!(theta > 0.0 && theta < 2.0))
    throw ConfigError("entropy_and_moment_bounds: theta must lie in (0,2)");
  EntropyMomentBounds out;
  const double K = spec.K(T);
  const double lam = spec.lambda(T);
  const double phi = x == y ? 0.0 : phi_of_start(m, x, y);
  const double efac = 1.0 - std::exp(-2.0 * K * T / gamma);
  out.entropy = K * phi / (lam * lam * theta * (2.0 - theta) * efac);

  const double del = spec.delta ? (*spec.delta)(T) : 0.0;
  if (del > 0.0) {
    // p = lambda^2 theta^2 / (4 delta^2 + 4 theta lambda delta); the paper's
    // unhoused constant c is read as lambda(T), consistent with q/(q-1)=1+p
    out.p = lam * lam * theta * theta /
            (4.0 * del * del + 4.0 * theta * lam * del);
    const double xi0 = (2.0 - theta) / (2.0 * K) * efac;
    out.moment_rhs = std::exp((2.0 * del + lam * theta) * theta * phi /
                              (4.0 * del * xi0 * (2.0 * del + 2.0 * lam * theta)));
    out.note = "c in the moment exponent read as lambda(T)";
  } else {
    out.note = "moment bound absent: formula degenerates at delta(T) = 0";
  }
  return out;
}

SfdeBoundResult sfde_log_harnack_bound(const SfdeSpec& spec,
                                       const ModulusSpec& m, double T,
                                       const SegmentPath& phi_seg,
                                       const SegmentPath& psi_seg,
                                       modulus::BihariVariant variant) {
  const double gamma = gamma_of(m);
  require_condition_U(m, gamma);
  SfdeBoundResult res;
  res.variant = variant;
  const double K4 = spec.K4(T);
  const double K1 = spec.K1(T);
  const double K2 = spec.K2(T);
  const double K3 = spec.K3(T);
  const double K = spec.K(T);

  const Vec ep = phi_seg.view().at_lag(0.0);
  const Vec eq = psi_seg.view().at_lag(0.0);
  const double endpoint_sq = (ep - eq).squaredNorm();
  const double first = 2.0 * gamma * modulus::eval_phi(m, endpoint_sq) / T;

  const double sup = phi_seg.view().sup_distance(psi_seg.view());
  const auto Phi = modulus::eval_Phi(m, T, sup, K1, K2, K3, K, variant);
  res.phi_overflow = Phi.overflow;
  const double second =
      T * (8.0 * K1 * K1 + 8.0 * K2 * K3 + K2) * Phi.value;
  res.value = K4 * (first + second);
  if (!std::isfinite(res.value)) {
    res.value = std::numeric_limits<double>::max();
    res.phi_overflow = true;
  }
  return res;
}

MinimizedBound minimize_log_harnack_over_K(const SdeSpec& spec,
                                           const ModulusSpec& m, double T,
                                           const Vec& x, const Vec& y,
                                           LogHarnackVariant v,
                                           int points_per_decade) {
  MinimizedBound best;
  best.bound_best = std::numeric_limits<double>::infinity();
  SdeSpec probe = spec;
  const int decades = 4;  // K in [1e-3, 10]
  for (int i = 0; i <= decades * points_per_decade; ++i) {
    const double K =
        std::pow(10.0, -3.0 + static_cast<double>(i) / points_per_decade);
    probe.K = [K](double) { return K; };
    const double b = log_harnack_bound(probe, m, T, x, y, v);
    if (b < best.bound_best) {
      best.bound_best = b;
      best.K_best = K;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------

TestFunction tf_constant(double v) {
  return {"constant@1", [v](const Vec&) { return v; }};
}

TestFunction tf_exp(const Vec& c, double clip) {
  return {"exp_c@1", [c, clip](const Vec& z) {
            return std::min(std::exp(c.dot(z)), clip);
          }};
}

TestFunction tf_bump(const Vec& center, double radius, double width) {
  return {"bump@1", [center, radius, width](const Vec& z) {
            const double r = (z - center).norm();
            return 1.0 / (1.0 + std::exp((r - radius) / width));
          }};
}

TestFunction tf_one_plus_bump(const Vec& center, double radius, double width) {
  auto b = tf_bump(center, radius, width);
  return {"one_plus_bump@1",
          [f = b.f](const Vec& z) { return 1.0 + f(z); }};
}

// ---------------------------------------------------------------------------

namespace {

Estimate mean_se(const std::vector<double>& vals,
                 const std::vector<std::uint8_t>* mask) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < vals.size(); ++i) {
    if (mask && (*mask)[i]) continue;
    sum += vals[i];
    ++n;
  }
  Estimate e;
  e.n = n;
  if (n == 0) return e;
  e.mean = sum / static_cast<double>(n);
  double ss = 0.0;
  for (std::size_t i = 0; i < vals.size(); ++i) {
    if (mask && (*mask)[i]) continue;
    const double d = vals[i] - e.mean;
    ss += d * d;
  }
  if (n > 1)
    e.se = std::sqrt(ss / (static_cast<double>(n) * (static_cast<double>(n) - 1.0)));
  return e;
}

}  // namespace

Estimate estimate_semigroup(const SdeSpec& spec, const Vec& x, double T,
                            const TestFunction& f, std::size_t n_paths,
                            const StepPolicy& policy, int workers) {
  std::vector<double> vals(n_paths);
  std::vector<std::uint8_t> bad(n_paths, 0);
  parallel_paths(n_paths, workers, [&](std::size_t i) {
    PathRecord r = simulate_sde(spec, x, T, policy, i);
    bad[i] = r.flags.excluded() ? 1 : 0;
    vals[i] = bad[i] ? 0.0 : f.f(r.x_final);
  });
  return mean_se(vals, &bad);
}

Estimate estimate_semigroup(const SfdeSpec& spec, const SegmentPath& x0,
                            double horizon, const TestFunction& f,
                            std::size_t n_paths, const StepPolicy& policy,
                            int workers) {
  std::vector<double> vals(n_paths);
  std::vector<std::uint8_t> bad(n_paths, 0);
  parallel_paths(n_paths, workers, [&](std::size_t i) {
    PathRecord r = simulate_sfde(spec, x0, horizon, policy, i);
    bad[i] = r.flags.excluded() ? 1 : 0;
    vals[i] = bad[i] ? 0.0 : f.f(r.x_final);
  });
  return mean_se(vals, &bad);
}

namespace {

CoupledBatch alloc_batch(std::size_t n) {
  CoupledBatch b;
  b.log_r.resize(n);
  b.log_r_mid.resize(n);
  b.tau.assign(n, std::numeric_limits<double>::quiet_NaN());
  b.f_y.resize(n);
  b.f_x.resize(n);
  b.log_f_y.resize(n);
  b.seg_dist.assign(n, std::numeric_limits<double>::quiet_NaN());
  b.coupled.assign(n, 0);
  b.excluded.assign(n, 0);
  b.exploded.assign(n, 0);
  b.exited.assign(n, 0);
  b.floor_hit.assign(n, 0);
  return b;
}

void fill_slot(CoupledBatch& b, std::size_t i, const PathRecord& r,
               const TestFunction& f) {
  b.log_r[i] = r.log_r;
  b.log_r_mid[i] = r.log_r_mid;
  if (r.tau) b.tau[i] = *r.tau;
  b.coupled[i] = r.flags.coupled ? 1 : 0;
  b.excluded[i] = r.flags.excluded() ? 1 : 0;
  b.exploded[i] = r.flags.weight_exploded ? 1 : 0;
  b.exited[i] = r.flags.exited ? 1 : 0;
  b.floor_hit[i] = r.flags.step_floor_hit ? 1 : 0;
  b.seg_dist[i] = r.terminal_segment_distance;
  if (b.excluded[i]) {
    b.f_y[i] = b.f_x[i] = b.log_f_y[i] = 0.0;
    return;
  }
  const double fy = f.f(r.y_final);
  b.f_y[i] = fy;
  b.f_x[i] = f.f(r.x_final);
  b.log_f_y[i] = std::log(std::max(fy, kLogFloor));
}

}  // namespace

CoupledBatch run_coupled_batch(const SdeSpec& spec, const CouplingConfig& cfg,
                               const TestFunction& f, std::size_t n_paths,
                               const StepPolicy& policy, int workers) {
  CoupledBatch b = alloc_batch(n_paths);
  parallel_paths(n_paths, workers, [&](std::size_t i) {
    fill_slot(b, i, simulate_coupled_sde(spec, cfg, policy, i), f);
  });
  return b;
}

CoupledBatch run_coupled_batch(const SfdeSpec& spec, const CouplingConfig& cfg,
                               const TestFunction& f, std::size_t n_paths,
                               const StepPolicy& policy, int workers) {
  CoupledBatch b = alloc_batch(n_paths);
  parallel_paths(n_paths, workers, [&](std::size_t i) {
    fill_slot(b, i, simulate_coupled_sfde(spec, cfg, policy, i), f);
  });
  return b;
}

WeightedEstimates reduce_batch(const CoupledBatch& batch,
                               const std::vector<double>& moment_exponents) {
  const std::size_t n = batch.size();
  WeightedEstimates out;
  std::vector<double> rf(n), rlogf(n), rlogr(n), rmid(n), fx(n);
  std::vector<std::vector<double>> rpow(moment_exponents.size(),
                                        std::vector<double>(n));
  double sum_r = 0.0, sum_r_coupled = 0.0;
  std::size_t n_ok = 0, n_coupled_plain = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (batch.excluded[i]) continue;
    const double R = std::exp(batch.log_r[i]);
    rf[i] = R * batch.f_y[i];
    rlogf[i] = R * batch.log_f_y[i];
    rlogr[i] = R * batch.log_r[i];
    rmid[i] = std::exp(batch.log_r_mid[i]);
    fx[i] = batch.f_x[i];
    for (std::size_t j = 0; j < moment_exponents.size(); ++j)
      rpow[j][i] = std::exp(moment_exponents[j] * batch.log_r[i]);
    sum_r += R;
    if (batch.coupled[i]) {
      sum_r_coupled += R;
      ++n_coupled_plain;
    }
    ++n_ok;
  }
  const auto& mask = batch.excluded;
  out.weighted_f = mean_se(rf, &mask);
  out.weighted_log_f = mean_se(rlogf, &mask);
  out.plain_f = mean_se(fx, &mask);
  out.entropy = mean_se(rlogr, &mask);
  out.weight_mid = mean_se(rmid, &mask);
  for (std::size_t j = 0; j < moment_exponents.size(); ++j)
    out.moments[moment_exponents[j]] = mean_se(rpow[j], &mask);
  out.coupled_fraction_weighted = sum_r > 0.0 ? sum_r_coupled / sum_r : 0.0;
  out.coupled_fraction_plain =
      n_ok > 0 ? static_cast<double>(n_coupled_plain) / n_ok : 0.0;
  out.weight_mean = n_ok > 0 ? sum_r / static_cast<double>(n_ok) : 0.0;

  out.stats.n_paths = n;
  for (std::size_t i = 0; i < n; ++i) {
    out.stats.n_excluded += batch.excluded[i];
    out.stats.n_exploded += batch.exploded[i];
    out.stats.n_exited += batch.exited[i];
    out.stats.n_floor += batch.floor_hit[i];
    out.stats.n_coupled += batch.coupled[i];
  }
  out.stats.unreliable =
      out.stats.n_excluded > 0.001 * static_cast<double>(n);
  return out;
}

namespace {

// degenerate x == y coupling: R == 1, tau = 0, plain Monte Carlo
template <class Spec, class Start>
WeightedEstimates degenerate_weighted(const Spec& spec, const Start& start,
                                      double horizon, const TestFunction& f,
                                      std::size_t n_paths,
                                      const StepPolicy& policy,
                                      const std::vector<double>& exps,
                                      int workers) {
  const Estimate plain =
      estimate_semigroup(spec, start, horizon, f, n_paths, policy, workers);
  WeightedEstimates out;
  out.weighted_f = plain;
  out.plain_f = plain;
  out.entropy = Estimate{0.0, 0.0, plain.n};
  for (double e : exps) out.moments[e] = Estimate{1.0, 0.0, plain.n};
  out.coupled_fraction_weighted = 1.0;
  out.coupled_fraction_plain = 1.0;
  out.weight_mean = 1.0;
  out.stats.n_paths = n_paths;
  out.stats.n_coupled = n_paths;
  return out;
}

}  // namespace

WeightedEstimates estimate_weighted(const SdeSpec& spec,
                                    const CouplingConfig& cfg,
                                    const TestFunction& f, std::size_t n_paths,
                                    const StepPolicy& policy,
                                    const std::vector<double>& moment_exponents,
                                    int workers) {
  if (cfg.start_x.size() > 0 && cfg.start_x == cfg.start_y)
    return degenerate_weighted(spec, cfg.start_x, cfg.T, f, n_paths, policy,
                               moment_exponents, workers);
  return reduce_batch(run_coupled_batch(spec, cfg, f, n_paths, policy, workers),
                      moment_exponents);
}

WeightedEstimates estimate_weighted(const SfdeSpec& spec,
                                    const CouplingConfig& cfg,
                                    const TestFunction& f, std::size_t n_paths,
                                    const StepPolicy& policy,
                                    const std::vector<double>& moment_exponents,
                                    int workers) {
  if (cfg.start_phi && cfg.start_psi &&
      cfg.start_phi->values == cfg.start_psi->values)
    return degenerate_weighted(spec, *cfg.start_phi, cfg.T + spec.r0, f,
                               n_paths, policy, moment_exponents, workers);
  return reduce_batch(run_coupled_batch(spec, cfg, f, n_paths, policy, workers),
                      moment_exponents);
}

Verdict make_verdict(const std::string& name, double lhs, double se_lhs,
                     double rhs, double se_rhs, const std::string& note) {
  Verdict v;
  v.name = name;
  v.lhs = lhs;
  v.rhs = rhs;
  v.se_combined = std::sqrt(se_lhs * se_lhs + se_rhs * se_rhs);
  v.margin = rhs - lhs;
  v.pass = lhs <= rhs + 3.0 * v.se_combined;
  v.note = note;
  return v;
}

}  // namespace couplemc::harnack
