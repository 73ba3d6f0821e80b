#include "couplemc/simulate.hpp"

#include <atomic>
#include <cmath>
#include <mutex>
#include <thread>

#include "couplemc/rng.hpp"

namespace couplemc {

namespace {

// sigma(t,x) factor/solve with a scalar fast path
struct SigmaSolver {
  int d;
  double s00 = 0.0;
  Eigen::PartialPivLU<Mat> lu;
  explicit SigmaSolver(int dim) : d(dim), lu(dim) {}
  bool factor(const Mat& s) {
    if (d == 1) {
      s00 = s(0, 0);
      return std::abs(s00) > 1e-300;
    }
    lu.compute(s);
    return std::abs(lu.determinant()) > 1e-300;
  }
  void solve(const Vec& in, Vec& out) {
    if (d == 1)
      out[0] = in[0] / s00;
    else
      out = lu.solve(in);
  }
};

struct Recorder {
  PathRecord& rec;
  bool on;
  int dim;
  void node(double t, const Vec& x, const Vec* y, double log_r) {
    if (!on) return;
    rec.times.push_back(t);
    for (int i = 0; i < dim; ++i) rec.x_path.push_back(x[i]);
    if (y)
      for (int i = 0; i < dim; ++i) rec.y_path.push_back((*y)[i]);
    rec.log_r_path.push_back(log_r);
  }
};

inline long n_steps_for(double T, double h) {
  return static_cast<long>(std::ceil(T / h - 1e-12));
}

}  // namespace

PathRecord simulate_sde(const SdeSpec& spec, const Vec& x0, double T,
                        const StepPolicy& policy, std::uint64_t path_index) {
  if (!(T > 0.0)) throw ConfigError("simulate_sde: T must be > 0");
  if (x0.size() != spec.dim) throw ConfigError("simulate_sde: x0 dim mismatch");
  const int d = spec.dim;
  const double h = policy.h_max;

  PathRecord rec;
  rec.dim = d;
  rec.T = T;
  Recorder out{rec, policy.record_trajectory, d};

  rng::NormalStream base(policy.rng_seed, path_index, 0);
  Vec X = x0, b(d), g(d), dW(d);
  Mat s(d, d);
  const long n = n_steps_for(T, h);
  out.node(0.0, X, nullptr, 0.0);
  for (long k = 0; k < n; ++k) {
    const double t0 = static_cast<double>(k) * h;
    const double t1 = std::min(T, t0 + h);
    const double H = t1 - t0;
    base.fill(g.data(), d);
    dW = std::sqrt(H) * g;
    spec.drift(t0, X, b);
    spec.sigma(t0, X, s);
    X += b * H;
    X.noalias() += s * dW;
    if (!X.allFinite()) {
      rec.flags.numerical_failure = true;
      break;
    }
    out.node(t1, X, nullptr, 0.0);
    if (X.norm() >= policy.ball_radius) {
      rec.flags.exited = true;
      rec.exit_time = t1;
      break;
    }
  }
  rec.x_final = X;
  rec.y_final = X;
  return rec;
}

PathRecord simulate_coupled_sde(const SdeSpec& spec, const CouplingConfig& cfg,
                                const StepPolicy& policy,
                                std::uint64_t path_index) {
  cfg.validate();
  if (cfg.is_sfde())
    throw ConfigError("simulate_coupled_sde: config carries segments");
  if (cfg.start_x.size() != spec.dim)
    throw ConfigError("simulate_coupled_sde: start dim mismatch");

  const int d = spec.dim;
  const double T = cfg.T;
  const double h = policy.h_max;
  const double K_T = spec.K(T);
  const double eps = cfg.effective_eps();
  const double theta_scale = (2.0 - cfg.theta) / (2.0 * K_T);
  const double rate = 2.0 * K_T / cfg.gamma;

  PathRecord rec;
  rec.dim = d;
  rec.T = T;
  Recorder out{rec, policy.record_trajectory, d};

  rng::NormalStream base(policy.rng_seed, path_index, 0);
  rng::NormalStream bridge(policy.rng_seed, path_index, 1);

  Vec X = cfg.start_x, Y = cfg.start_y;
  Vec bx(d), by(d), g(d), dW(d), dWs(d), Wrem(d), accW(d), xs(d), ys(d), z(d),
      w(d), eta(d), xnext(d), tmp(d);
  Mat sx(d, d), s_at(d, d);
  SigmaSolver solver(d);

  double log_r = 0.0;
  bool coupled = false;
  bool mid_done = false;
  const double t_mid = 0.5 * T;
  const long n = n_steps_for(T, h);
  out.node(0.0, X, &Y, 0.0);

  for (long k = 0; k < n; ++k) {
    const double t0 = static_cast<double>(k) * h;
    const double t1 = std::min(T, t0 + h);
    const double H = t1 - t0;
    base.fill(g.data(), d);
    dW = std::sqrt(H) * g;

    // X's update is frozen at the step start and consumes the full
    // increment, so the X-marginal is bit-identical to simulate_sde.
    spec.drift(t0, X, bx);
    spec.sigma(t0, X, sx);
    xnext = X + bx * H;
    xnext.noalias() += sx * dW;

    if (!coupled) {
      double rem = H;
      Wrem = dW;
      accW.setZero();
      xs = X;
      ys = Y;
      while (rem > 1e-300) {
        const double ts = t1 - rem;
        z = xs - ys;
        const double z2 = z.squaredNorm();
        if (std::sqrt(z2) <= eps) {
          coupled = true;
          rec.tau = ts;
          break;
        }
        const double uval = spec.modulus.u(z2);
        const double xit =
            theta_scale * (1.0 - std::exp(rate * (ts - T)));
        const double cap = policy.stiffness_factor * xit / uval;
        if (cap < policy.h_min) rec.flags.step_floor_hit = true;
        const double delta = std::min(rem, std::max(policy.h_min, cap));
        if (delta * uval >= xit) {
          // the attracting drift would carry Z past zero within this step:
          // shorten to the hitting fraction and declare coupling
          coupled = true;
          rec.tau = ts + xit / uval;
          break;
        }
        if (delta >= rem) {
          dWs = Wrem;
        } else {
          bridge.fill(g.data(), d);
          const double mean_f = delta / rem;
          const double sd = std::sqrt(delta * (rem - delta) / rem);
          dWs = mean_f * Wrem + sd * g;
        }
        spec.sigma(ts, xs, s_at);
        if (!solver.factor(s_at)) {
          rec.flags.numerical_failure = true;
          break;
        }
        solver.solve(z, w);
        eta = (uval / xit) * w;
        const double eta2dt = eta.squaredNorm() * delta;
        if (eta2dt > policy.blowup_guard) rec.flags.weight_exploded = true;
        if (!rec.flags.weight_exploded)
          log_r += -eta.dot(dWs) - 0.5 * eta2dt;
        spec.drift(ts, ys, by);
        spec.sigma(ts, ys, s_at);
        tmp = dWs + eta * delta;
        ys += by * delta;
        ys.noalias() += s_at * tmp;
        accW += dWs;
        Wrem -= dWs;
        rem -= delta;
        xs = X + bx * (H - rem);
        xs.noalias() += sx * accW;
        if (!ys.allFinite() || !xs.allFinite()) {
          rec.flags.numerical_failure = true;
          break;
        }
        if (ys.norm() >= policy.ball_radius || xs.norm() >= policy.ball_radius) {
          rec.flags.exited = true;
          rec.exit_time = t1 - rem;
          break;
        }
      }
      if (rec.flags.numerical_failure || rec.flags.exited) {
        rec.x_final = xs;
        rec.y_final = ys;
        rec.log_r = log_r;
        rec.flags.coupled = coupled;
        return rec;
      }
      Y = coupled ? xnext : ys;
    } else {
      Y = xnext;
    }
    X = xnext;
    if (!X.allFinite()) {
      rec.flags.numerical_failure = true;
      break;
    }
    if (!mid_done && t1 >= t_mid) {
      rec.log_r_mid = log_r;
      mid_done = true;
    }
    out.node(t1, X, &Y, log_r);
  }

  rec.x_final = X;
  rec.y_final = Y;
  rec.log_r = log_r;
  rec.flags.coupled = coupled;
  return rec;
}

namespace {

struct SfdeGrid {
  long m = 0;       // delay nodes: r0 = m h
  long n_end = 0;   // last node index; node i sits at t = (i - m) h
  double h = 0.0;
  double horizon = 0.0;
};

SfdeGrid make_sfde_grid(const SfdeSpec& spec, double h, double horizon) {
  SfdeGrid g;
  g.h = h;
  g.horizon = horizon;
  const double ratio = spec.r0 / h;
  g.m = static_cast<long>(std::llround(ratio));
  if (g.m < 1 || std::abs(ratio - static_cast<double>(g.m)) > 1e-9)
    throw ConfigError("sfde: r0 must be an integer multiple of the step");
  g.n_end = g.m + n_steps_for(horizon, h);
  return g;
}

void check_segment_grid(const SegmentPath& seg, const SfdeSpec& spec,
                        double h) {
  seg.validate();
  if (seg.dim != spec.dim)
    throw ConfigError("sfde: segment dimension mismatch");
  if (std::abs(seg.h - h) > 1e-12 * std::max(1.0, h))
    throw ConfigError("sfde: segment grid step must equal the solver step");
  if (std::abs(seg.r0() - spec.r0) > 1e-9)
    throw ConfigError("sfde: segment span must equal r0");
}

}  // namespace

PathRecord simulate_sfde(const SfdeSpec& spec, const SegmentPath& x0,
                         double horizon, const StepPolicy& policy,
                         std::uint64_t path_index) {
  if (!(horizon > 0.0)) throw ConfigError("simulate_sfde: horizon must be > 0");
  const int d = spec.dim;
  const double h = policy.h_max;
  check_segment_grid(x0, spec, h);
  const SfdeGrid grid = make_sfde_grid(spec, h, horizon);

  PathRecord rec;
  rec.dim = d;
  rec.T = horizon;
  Recorder out{rec, policy.record_trajectory, d};

  std::vector<double> store((grid.n_end + 1) * d);
  std::copy(x0.values.begin(), x0.values.end(), store.begin());

  rng::NormalStream base(policy.rng_seed, path_index, 0);
  Vec X(d), b(d), a(d), g(d), dW(d);
  Mat s(d, d);
  for (int i = 0; i < d; ++i) X[i] = store[grid.m * d + i];
  if (policy.record_trajectory)
    for (long i = 0; i <= grid.m; ++i) {
      Vec v(d);
      for (int j = 0; j < d; ++j) v[j] = store[i * d + j];
      out.node((i - grid.m) * h, v, nullptr, 0.0);
    }

  for (long k = grid.m; k < grid.n_end; ++k) {
    const double t0 = static_cast<double>(k - grid.m) * h;
    const double t1 = std::min(horizon, t0 + h);
    const double H = t1 - t0;
    base.fill(g.data(), d);
    dW = std::sqrt(H) * g;
    SegmentView seg(store.data() + (k - grid.m) * d, d, h, grid.m);
    spec.drift(t0, X, b);
    spec.functional_drift(t0, seg, a);
    spec.sigma(t0, X, s);
    X += (b + a) * H;
    X.noalias() += s * dW;
    if (!X.allFinite()) {
      rec.flags.numerical_failure = true;
      break;
    }
    for (int i = 0; i < d; ++i) store[(k + 1) * d + i] = X[i];
    out.node(t1, X, nullptr, 0.0);
    if (X.norm() >= policy.ball_radius) {
      rec.flags.exited = true;
      rec.exit_time = t1;
      break;
    }
  }
  rec.x_final = X;
  rec.y_final = X;
  return rec;
}

PathRecord simulate_coupled_sfde(const SfdeSpec& spec,
                                 const CouplingConfig& cfg,
                                 const StepPolicy& policy,
                                 std::uint64_t path_index) {
  cfg.validate();
  if (!cfg.is_sfde())
    throw ConfigError("simulate_coupled_sfde: config carries no segments");
  const int d = spec.dim;
  const double T = cfg.T;
  const double h = policy.h_max;
  check_segment_grid(*cfg.start_phi, spec, h);
  check_segment_grid(*cfg.start_psi, spec, h);
  const double horizon = T + spec.r0;
  const SfdeGrid grid = make_sfde_grid(spec, h, horizon);
  const double eps = cfg.effective_eps();
  const double inv_2gamma = 1.0 / (2.0 * cfg.gamma);

  PathRecord rec;
  rec.dim = d;
  rec.T = horizon;
  Recorder out{rec, policy.record_trajectory, d};

  std::vector<double> xstore((grid.n_end + 1) * d), ystore((grid.n_end + 1) * d);
  std::copy(cfg.start_phi->values.begin(), cfg.start_phi->values.end(),
            xstore.begin());
  std::copy(cfg.start_psi->values.begin(), cfg.start_psi->values.end(),
            ystore.begin());

  rng::NormalStream base(policy.rng_seed, path_index, 0);
  rng::NormalStream bridge(policy.rng_seed, path_index, 1);

  Vec X(d), Y(d), bx(d), by(d), ax(d), ay(d), adiff_l(d), g(d), dW(d), dWs(d),
      Wrem(d), accW(d), xs(d), ys(d), z(d), w(d), eta(d), lambda(d), xnext(d),
      tmp(d);
  Mat sx(d, d), s_at(d, d);
  SigmaSolver solver(d);
  for (int i = 0; i < d; ++i) {
    X[i] = xstore[grid.m * d + i];
    Y[i] = ystore[grid.m * d + i];
  }

  double log_r = 0.0;
  bool coupled = false;
  bool mid_done = false;
  const double t_mid = 0.5 * horizon;
  double tau_val = 0.0;

  if (policy.record_trajectory)
    for (long i = 0; i <= grid.m; ++i) {
      Vec vx(d), vy(d);
      for (int j = 0; j < d; ++j) {
        vx[j] = xstore[i * d + j];
        vy[j] = ystore[i * d + j];
      }
      out.node((i - grid.m) * h, vx, &vy, 0.0);
    }

  for (long k = grid.m; k < grid.n_end; ++k) {
    const double t0 = static_cast<double>(k - grid.m) * h;
    const double t1 = std::min(horizon, t0 + h);
    const double H = t1 - t0;
    base.fill(g.data(), d);
    dW = std::sqrt(H) * g;

    SegmentView xseg(xstore.data() + (k - grid.m) * d, d, h, grid.m);
    SegmentView yseg(ystore.data() + (k - grid.m) * d, d, h, grid.m);

    // frozen per base step
    spec.drift(t0, X, bx);
    spec.sigma(t0, X, sx);
    spec.functional_drift(t0, xseg, ax);
    spec.functional_drift(t0, yseg, ay);

    xnext = X + (bx + ax) * H;
    xnext.noalias() += sx * dW;

    if (coupled) {
      Y = xnext;
      if (cfg.weight_through_segment_merge && t0 < tau_val + spec.r0) {
        // residual functional-drift mismatch until the segments merge
        spec.sigma(t0, Y, s_at);
        if (solver.factor(s_at)) {
          tmp = ax - ay;
          solver.solve(tmp, lambda);
          const double l2dt = lambda.squaredNorm() * H;
          if (l2dt > policy.blowup_guard) rec.flags.weight_exploded = true;
          if (!rec.flags.weight_exploded)
            log_r += -lambda.dot(dW) - 0.5 * l2dt;
        } else {
          rec.flags.numerical_failure = true;
        }
      }
    } else {
      double rem = H;
      Wrem = dW;
      accW.setZero();
      xs = X;
      ys = Y;
      while (rem > 1e-300) {
        const double ts = t1 - rem;
        z = xs - ys;
        const double z2 = z.squaredNorm();
        if (std::sqrt(z2) <= eps && ts <= T) {
          coupled = true;
          tau_val = ts;
          rec.tau = ts;
          break;
        }
        const bool pre_T = ts < T;
        double uval = 0.0, xit = 0.0, cap = rem;
        if (pre_T) {
          uval = spec.modulus.u(z2);
          xit = (T - ts) * inv_2gamma;
          cap = policy.stiffness_factor * xit / uval;
          if (cap < policy.h_min) rec.flags.step_floor_hit = true;
        }
        const double delta = std::min(rem, std::max(policy.h_min, cap));
        if (pre_T && delta * uval >= xit) {
          coupled = true;
          tau_val = ts + xit / uval;
          rec.tau = tau_val;
          break;
        }
        if (delta >= rem) {
          dWs = Wrem;
        } else {
          bridge.fill(g.data(), d);
          const double mean_f = delta / rem;
          const double sd = std::sqrt(delta * (rem - delta) / rem);
          dWs = mean_f * Wrem + sd * g;
        }
        // lambda = [eta if t < T] + sigma(t,Y)^{-1} (a(t,X_t) - a(t,Y_t))
        spec.sigma(ts, ys, s_at);
        if (!solver.factor(s_at)) {
          rec.flags.numerical_failure = true;
          break;
        }
        tmp = ax - ay;
        solver.solve(tmp, adiff_l);
        lambda = adiff_l;
        if (pre_T) {
          spec.sigma(ts, xs, s_at);
          if (!solver.factor(s_at)) {
            rec.flags.numerical_failure = true;
            break;
          }
          solver.solve(z, w);
          eta = (uval / xit) * w;
          lambda += eta;
        } else {
          eta.setZero();
        }
        const double l2dt = lambda.squaredNorm() * delta;
        if (l2dt > policy.blowup_guard) rec.flags.weight_exploded = true;
        if (!rec.flags.weight_exploded)
          log_r += -lambda.dot(dWs) - 0.5 * l2dt;
        spec.drift(ts, ys, by);
        spec.sigma(ts, ys, s_at);
        tmp = dWs;
        if (pre_T) tmp += eta * delta;
        ys += (by + ax) * delta;
        ys.noalias() += s_at * tmp;
        accW += dWs;
        Wrem -= dWs;
        rem -= delta;
        xs = X + (bx + ax) * (H - rem);
        xs.noalias() += sx * accW;
        if (!ys.allFinite() || !xs.allFinite()) {
          rec.flags.numerical_failure = true;
          break;
        }
        if (ys.norm() >= policy.ball_radius ||
            xs.norm() >= policy.ball_radius) {
          rec.flags.exited = true;
          rec.exit_time = t1 - rem;
          break;
        }
      }
      if (rec.flags.numerical_failure || rec.flags.exited) {
        rec.x_final = xs;
        rec.y_final = ys;
        rec.log_r = log_r;
        rec.flags.coupled = coupled;
        return rec;
      }
      Y = coupled ? xnext : ys;
    }

    X = xnext;
    if (!X.allFinite()) {
      rec.flags.numerical_failure = true;
      break;
    }
    for (int i = 0; i < d; ++i) {
      xstore[(k + 1) * d + i] = X[i];
      ystore[(k + 1) * d + i] = Y[i];
    }
    if (!mid_done && t1 >= t_mid) {
      rec.log_r_mid = log_r;
      mid_done = true;
    }
    out.node(t1, X, &Y, log_r);
  }

  // terminal segment distance over the window [T, T + r0]
  double sup2 = 0.0;
  for (long i = grid.n_end - grid.m; i <= grid.n_end; ++i) {
    double s2 = 0.0;
    for (int j = 0; j < d; ++j) {
      const double dd = xstore[i * d + j] - ystore[i * d + j];
      s2 += dd * dd;
    }
    sup2 = std::max(sup2, s2);
  }
  rec.terminal_segment_distance = std::sqrt(sup2);
  rec.x_final = X;
  rec.y_final = Y;
  rec.log_r = log_r;
  rec.flags.coupled = coupled;
  return rec;
}

std::vector<UniquenessRow> uniqueness_probe(
    const SdeSpec& spec, const Vec& x0, double T,
    const std::vector<double>& mesh_levels,
    const std::vector<double>& perturbations, std::uint64_t seed, int n_rep) {
  if (mesh_levels.empty() || perturbations.empty())
    throw ConfigError("uniqueness_probe: empty mesh or perturbation list");
  const int d = spec.dim;
  std::vector<UniquenessRow> rows;
  for (double h : mesh_levels) {
    for (double eps : perturbations) {
      UniquenessRow row;
      row.h = h;
      row.eps = eps;
      for (int rep = 0; rep < n_rep; ++rep) {
        rng::NormalStream noise(seed, rep, 7);
        Vec a = x0, b = x0, da(d), db(d), g(d), dW(d);
        Mat sa(d, d), sb(d, d);
        b[0] += eps;
        double sup2 = (a - b).squaredNorm();
        const long n = n_steps_for(T, h);
        bool censored = false;
        for (long k = 0; k < n; ++k) {
          const double t0 = static_cast<double>(k) * h;
          const double H = std::min(T, t0 + h) - t0;
          noise.fill(g.data(), d);
          dW = std::sqrt(H) * g;
          spec.drift(t0, a, da);
          spec.sigma(t0, a, sa);
          spec.drift(t0, b, db);
          spec.sigma(t0, b, sb);
          a += da * H;
          a.noalias() += sa * dW;
          b += db * H;
          b.noalias() += sb * dW;
          if (!a.allFinite() || !b.allFinite() ||
              a.norm() >= 1e6 || b.norm() >= 1e6) {
            censored = true;
            break;
          }
          sup2 = std::max(sup2, (a - b).squaredNorm());
        }
        if (censored)
          ++row.censored;
        else
          row.max_sup_sq = std::max(row.max_sup_sq, sup2);
      }
      rows.push_back(row);
    }
  }
  return rows;
}

std::vector<UniquenessRow> uniqueness_probe(
    const SfdeSpec& spec, const SegmentPath& x0, double T,
    const std::vector<double>& mesh_levels,
    const std::vector<double>& perturbations, std::uint64_t seed, int n_rep) {
  if (mesh_levels.empty() || perturbations.empty())
    throw ConfigError("uniqueness_probe: empty mesh or perturbation list");
  std::vector<UniquenessRow> rows;
  for (double h : mesh_levels) {
    for (double eps : perturbations) {
      UniquenessRow row;
      row.h = h;
      row.eps = eps;
      for (int rep = 0; rep < n_rep; ++rep) {
        StepPolicy pol;
        pol.h_max = h;
        pol.rng_seed = seed;
        pol.record_trajectory = true;
        // rebuild the start segment on this mesh when steps differ
        SegmentPath base_seg = x0;
        if (std::abs(x0.h - h) > 1e-12) {
          base_seg = SegmentPath::constant(x0.view().at_lag(0.0), spec.r0, h);
          for (long i = 0; i <= base_seg.n_lag(); ++i) {
            Vec v = x0.view().at_lag(-spec.r0 + i * h);
            for (int j = 0; j < spec.dim; ++j)
              base_seg.values[i * spec.dim + j] = v[j];
          }
        }
        SegmentPath shifted = base_seg;
        for (long i = 0; i <= shifted.n_lag(); ++i)
          shifted.values[i * spec.dim] += eps;
        PathRecord ra = simulate_sfde(spec, base_seg, T, pol, rep);
        PathRecord rb = simulate_sfde(spec, shifted, T, pol, rep);
        if (ra.flags.excluded() || rb.flags.excluded()) {
          ++row.censored;
          continue;
        }
        double sup2 = 0.0;
        const std::size_t n_nodes =
            std::min(ra.times.size(), rb.times.size());
        for (std::size_t i = 0; i < n_nodes; ++i) {
          double s2 = 0.0;
          for (int j = 0; j < spec.dim; ++j) {
            const double dd =
                ra.x_path[i * spec.dim + j] - rb.x_path[i * spec.dim + j];
            s2 += dd * dd;
          }
          sup2 = std::max(sup2, s2);
        }
        row.max_sup_sq = std::max(row.max_sup_sq, sup2);
      }
      rows.push_back(row);
    }
  }
  return rows;
}

void parallel_paths(std::size_t n, int workers,
                    const std::function<void(std::size_t)>& body) {
  int w = workers > 0 ? workers
                      : static_cast<int>(std::thread::hardware_concurrency());
  if (w < 1) w = 1;
  if (n < 2 || w == 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  w = std::min<std::size_t>(w, n);
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex err_mu;
  constexpr std::size_t kChunk = 64;
  std::vector<std::thread> threads;
  threads.reserve(w);
  for (int t = 0; t < w; ++t) {
    threads.emplace_back([&] {
      try {
        for (;;) {
          const std::size_t i0 = next.fetch_add(kChunk);
          if (i0 >= n) return;
          const std::size_t i1 = std::min(n, i0 + kChunk);
          for (std::size_t i = i0; i < i1; ++i) body(i);
        }
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mu);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& th : threads) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace couplemc
