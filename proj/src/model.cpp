#include "couplemc/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "couplemc/rng.hpp"

namespace couplemc {

void SegmentView::at_lag(double lag, Vec& out) const {
  const double pos = (lag + r0()) / h_;  // grid coordinate in [0, n_lag]
  if (pos < -1e-9 || pos > n_lag_ + 1e-9)
    throw ConfigError("SegmentView: lag outside [-r0, 0]");
  const long i = std::clamp(static_cast<long>(std::floor(pos)), 0L, n_lag_ - 1);
  const double w = std::clamp(pos - static_cast<double>(i), 0.0, 1.0);
  const double* a = node(i);
  const double* b = node(i + 1);
  for (int k = 0; k < dim_; ++k) out[k] = (1.0 - w) * a[k] + w * b[k];
}

double SegmentView::sup_norm() const {
  double m = 0.0;
  for (long i = 0; i <= n_lag_; ++i) {
    double s = 0.0;
    const double* p = node(i);
    for (int k = 0; k < dim_; ++k) s += p[k] * p[k];
    m = std::max(m, s);
  }
  return std::sqrt(m);
}

double SegmentView::sup_distance(const SegmentView& other) const {
  if (other.dim_ != dim_ || other.n_lag_ != n_lag_)
    throw ConfigError("SegmentView: mismatched grids");
  double m = 0.0;
  for (long i = 0; i <= n_lag_; ++i) {
    double s = 0.0;
    const double* p = node(i);
    const double* q = other.node(i);
    for (int k = 0; k < dim_; ++k) {
      const double d = p[k] - q[k];
      s += d * d;
    }
    m = std::max(m, s);
  }
  return std::sqrt(m);
}

SegmentPath SegmentPath::constant(const Vec& v, double r0, double h) {
  SegmentPath s;
  s.h = h;
  s.dim = static_cast<int>(v.size());
  const double ratio = r0 / h;
  const long n = static_cast<long>(std::llround(ratio));
  if (n < 1 || std::abs(ratio - static_cast<double>(n)) > 1e-9)
    throw ConfigError("SegmentPath: r0 must be a positive integer multiple of h");
  s.values.resize((n + 1) * s.dim);
  for (long i = 0; i <= n; ++i)
    for (int k = 0; k < s.dim; ++k) s.values[i * s.dim + k] = v[k];
  return s;
}

void SegmentPath::validate() const {
  if (dim < 1 || h <= 0.0 || values.empty() ||
      values.size() % static_cast<std::size_t>(dim) != 0 ||
      values.size() < 2 * static_cast<std::size_t>(dim))
    throw ConfigError("SegmentPath: malformed grid storage");
}

namespace model {

namespace {

double get_param(const Params& p, const std::string& key, double fallback) {
  auto it = p.find(key);
  return it == p.end() ? fallback : it->second;
}

void require_known_params(const Params& p, std::initializer_list<const char*> known,
                          const std::string& model) {
  for (const auto& [k, v] : p) {
    if (std::find_if(known.begin(), known.end(), [&](const char* s) {
          return k == s;
        }) == known.end())
      throw ConfigError("catalog_model " + model + ": unknown parameter '" + k + "'");
  }
}

TimeFn const_fn(double v) {
  return [v](double) { return v; };
}

}  // namespace

bool catalog_is_sfde(const std::string& name) { return name == "delay_ou"; }

SdeSpec catalog_sde(const std::string& name, const Params& params) {
  SdeSpec s;
  s.name = name;
  if (name == "ou") {
    require_known_params(params, {"dim", "K"}, name);
    const int d = static_cast<int>(get_param(params, "dim", 1));
    const double K = get_param(params, "K", 0.01);
    if (d < 1) throw ConfigError("ou: dim must be >= 1");
    if (K <= 0.0) throw ConfigError("ou: K must be > 0");
    s.dim = d;
    s.drift = [](double, const Vec& x, Vec& out) { out = -x; };
    s.sigma = [](double, const Vec&, Mat& out) { out.setIdentity(); };
    s.K = const_fn(K);
    s.Ktilde = const_fn(1.0);
    s.lambda = const_fn(1.0);
    s.delta = const_fn(0.0);
    s.modulus = modulus::constant_modulus();
    s.modulus_tilde = modulus::constant_modulus();
    return s;
  }
  if (name == "log_lipschitz_drift") {
    require_known_params(params, {"dim", "K"}, name);
    const int d = static_cast<int>(get_param(params, "dim", 1));
    const double K = get_param(params, "K", 3.0);
    if (d < 1) throw ConfigError("log_lipschitz_drift: dim must be >= 1");
    if (K <= 0.0) throw ConfigError("log_lipschitz_drift: K must be > 0");
    s.dim = d;
    const ModulusSpec u = modulus::log_modulus();
    auto ufn = u.u;
    s.drift = [ufn](double, const Vec& x, Vec& out) {
      const double s2 = x.squaredNorm();
      if (s2 > 0.0)
        out = -ufn(s2) * x;
      else
        out.setZero();
    };
    s.sigma = [](double, const Vec&, Mat& out) { out.setIdentity(); };
    s.K = const_fn(K);
    s.Ktilde = const_fn(1.0);
    s.lambda = const_fn(1.0);
    s.delta = const_fn(0.0);
    s.modulus = u;
    s.modulus_tilde = modulus::constant_modulus();
    return s;
  }
  if (name == "sine_diffusion") {
    require_known_params(params, {"K"}, name);
    const double K = get_param(params, "K", 1.0);
    if (K <= 0.0) throw ConfigError("sine_diffusion: K must be > 0");
    s.dim = 1;
    s.drift = [](double, const Vec& x, Vec& out) { out = -x; };
    s.sigma = [](double, const Vec& x, Mat& out) {
      out(0, 0) = 2.0 + std::sin(x[0]);
    };
    s.K = const_fn(K);
    s.Ktilde = const_fn(1.0);
    s.lambda = const_fn(1.0);
    s.delta = const_fn(2.0);
    s.modulus = modulus::constant_modulus();
    s.modulus_tilde = modulus::constant_modulus();
    return s;
  }
  throw ConfigError("catalog_sde: unknown model '" + name + "'");
}

SfdeSpec catalog_sfde(const std::string& name, const Params& params) {
  if (name != "delay_ou")
    throw ConfigError("catalog_sfde: unknown model '" + name + "'");
  require_known_params(params, {"dim", "alpha", "r0", "sigma0", "K1", "K"}, name);
  SfdeSpec s;
  s.name = name;
  const int d = static_cast<int>(get_param(params, "dim", 1));
  const double alpha = get_param(params, "alpha", 0.5);
  const double r0 = get_param(params, "r0", 1.0);
  const double sigma0 = get_param(params, "sigma0", 1.0);
  const double K1 = get_param(params, "K1", 0.01);
  const double K = get_param(params, "K", 0.01);
  if (d < 1) throw ConfigError("delay_ou: dim must be >= 1");
  if (sigma0 <= 0.0) throw ConfigError("delay_ou: sigma0 must be > 0");
  if (r0 <= 0.0) throw ConfigError("delay_ou: r0 must be > 0");
  if (K1 <= 0.0 || K <= 0.0) throw ConfigError("delay_ou: K1, K must be > 0");
  s.dim = d;
  s.r0 = r0;
  s.drift = [](double, const Vec& x, Vec& out) { out = -x; };
  s.functional_drift = [alpha, r0](double, const SegmentView& seg, Vec& out) {
    seg.at_lag(-r0, out);
    out *= alpha;
  };
  s.sigma = [sigma0](double, const Vec&, Mat& out) {
    out.setIdentity();
    out *= sigma0;
  };
  s.K = const_fn(K);
  s.K1 = const_fn(K1);
  s.K2 = const_fn(alpha * alpha);
  s.K3 = const_fn(0.0);  // sigma constant in space
  s.K4 = const_fn(1.0 / (sigma0 * sigma0));
  s.modulus = modulus::constant_modulus();
  s.modulus.class_tag = ModulusClass::Ubar;
  return s;
}

ModelSpec catalog_model(const std::string& name, const Params& params) {
  if (catalog_is_sfde(name)) return catalog_sfde(name, params);
  return catalog_sde(name, params);
}

namespace {

// one uniform draw in [-w, w] per (seed, counter)
struct BoxSampler {
  rng::NormalStream stream;
  double w;
  BoxSampler(std::uint64_t seed, double halfwidth)
      : stream(seed, 0, 0xb0b0), w(halfwidth) {}
  double scalar() { return (2.0 * stream.next_uniform() - 1.0) * w; }
  void vec(Vec& out) {
    for (int i = 0; i < out.size(); ++i) out[i] = scalar();
  }
};

double time_grid_point(double T, int j) { return T * 0.25 * (j % 5); }

struct RatioTracker {
  double max_ratio = 0.0;
  double worst_t = 0.0;
  Vec worst_x, worst_y;
  // violation ratio of "lhs <= rhs": rhs == 0 requires lhs <= ~0
  void update(double lhs, double rhs, double t, const Vec& x, const Vec& y) {
    double ratio;
    if (rhs > 0.0)
      ratio = lhs / rhs;
    else
      ratio = lhs <= 1e-12 ? 0.0 : std::numeric_limits<double>::infinity();
    if (ratio > max_ratio) {
      max_ratio = ratio;
      worst_t = t;
      worst_x = x;
      worst_y = y;
    }
  }
};

SpotCheckReport finish(const std::string& name, int n, int skipped,
                       const RatioTracker& tr) {
  SpotCheckReport r;
  r.assumption = name;
  r.n_samples = n;
  r.n_skipped = skipped;
  r.max_ratio = tr.max_ratio;
  r.pass = tr.max_ratio <= 1.0 + 1e-9;
  r.worst_t = tr.worst_t;
  r.worst_x = tr.worst_x;
  r.worst_y = tr.worst_y;
  return r;
}

}  // namespace

SpotCheckReport spot_check_H1(const SdeSpec& spec, const SpotCheckOptions& opt) {
  BoxSampler smp(opt.seed, opt.box_halfwidth);
  RatioTracker tr;
  Vec x(spec.dim), y(spec.dim), bx(spec.dim), by(spec.dim);
  Mat sx(spec.dim, spec.dim), sy(spec.dim, spec.dim);
  int skipped = 0;
  for (int i = 0; i < opt.n_pairs; ++i) {
    const double t = time_grid_point(opt.T, i);
    smp.vec(x);
    smp.vec(y);
    const double z2 = (x - y).squaredNorm();
    if (z2 == 0.0) continue;
    try {
      spec.drift(t, x, bx);
      spec.drift(t, y, by);
      spec.sigma(t, x, sx);
      spec.sigma(t, y, sy);
    } catch (const std::exception&) {
      ++skipped;
      continue;
    }
    const double hs2 = (sx - sy).squaredNorm();
    const double lhs1 = (bx - by).dot(x - y) + 0.5 * hs2;
    tr.update(lhs1, spec.K(t) * z2 * spec.modulus.u(z2), t, x, y);
    tr.update(hs2, spec.Ktilde(t) * z2 * spec.modulus_tilde.u(z2), t, x, y);
  }
  return finish("H1", opt.n_pairs, skipped, tr);
}

SpotCheckReport spot_check_H2(const SdeSpec& spec, const SpotCheckOptions& opt) {
  BoxSampler smp(opt.seed + 1, opt.box_halfwidth);
  RatioTracker tr;
  Vec x(spec.dim), y(spec.dim);
  Mat sx(spec.dim, spec.dim);
  int skipped = 0;
  for (int i = 0; i < opt.n_pairs; ++i) {
    const double t = time_grid_point(opt.T, i);
    smp.vec(x);
    smp.vec(y);
    const double ny = y.norm();
    if (ny == 0.0) continue;
    try {
      spec.sigma(t, x, sx);
    } catch (const std::exception&) {
      ++skipped;
      continue;
    }
    tr.update(spec.lambda(t) * ny, (sx * y).norm(), t, x, y);
  }
  return finish("H2", opt.n_pairs, skipped, tr);
}

SpotCheckReport spot_check_H3(const SdeSpec& spec, const SpotCheckOptions& opt) {
  if (!spec.delta) throw ConfigError("spot_check_H3: spec declares no delta");
  BoxSampler smp(opt.seed + 2, opt.box_halfwidth);
  RatioTracker tr;
  Vec x(spec.dim), y(spec.dim);
  Mat sx(spec.dim, spec.dim), sy(spec.dim, spec.dim);
  int skipped = 0;
  for (int i = 0; i < opt.n_pairs; ++i) {
    const double t = time_grid_point(opt.T, i);
    smp.vec(x);
    smp.vec(y);
    const double nz = (x - y).norm();
    if (nz == 0.0) continue;
    try {
      spec.sigma(t, x, sx);
      spec.sigma(t, y, sy);
    } catch (const std::exception&) {
      ++skipped;
      continue;
    }
    const double lhs = ((sx - sy).transpose() * (x - y)).norm();
    tr.update(lhs, (*spec.delta)(t)*nz, t, x, y);
  }
  return finish("H3", opt.n_pairs, skipped, tr);
}

std::vector<SpotCheckReport> spot_check_A(const SfdeSpec& spec,
                                          const SpotCheckOptions& opt) {
  std::vector<SpotCheckReport> out;
  const int d = spec.dim;
  // (i), (ii): pointwise inequalities
  {
    BoxSampler smp(opt.seed + 3, opt.box_halfwidth);
    RatioTracker tri, trii;
    Vec x(d), y(d), bx(d), by(d);
    Mat sx(d, d), sy(d, d);
    int skipped = 0;
    for (int i = 0; i < opt.n_pairs; ++i) {
      const double t = time_grid_point(opt.T, i);
      smp.vec(x);
      smp.vec(y);
      const double z2 = (x - y).squaredNorm();
      if (z2 == 0.0) continue;
      try {
        spec.drift(t, x, bx);
        spec.drift(t, y, by);
        spec.sigma(t, x, sx);
        spec.sigma(t, y, sy);
      } catch (const std::exception&) {
        ++skipped;
        continue;
      }
      const double hs2 = (sx - sy).squaredNorm();
      const double uz = spec.modulus.u(z2);
      tri.update((bx - by).dot(x - y) + 0.5 * hs2, spec.K1(t) * z2 * uz, t, x, y);
      trii.update(hs2, spec.K(t) * z2 * uz, t, x, y);
    }
    out.push_back(finish("A(i)", opt.n_pairs, skipped, tri));
    out.push_back(finish("A(ii)", opt.n_pairs, skipped, trii));
  }
  // (iii): functional drift against random piecewise-linear segments
  {
    BoxSampler smp(opt.seed + 4, opt.box_halfwidth);
    RatioTracker tr;
    const long n_lag = 8;
    const double hseg = spec.r0 / static_cast<double>(n_lag);
    std::vector<double> sa((n_lag + 1) * d), sb((n_lag + 1) * d);
    Vec aa(d), ab(d);
    int skipped = 0;
    for (int i = 0; i < opt.n_pairs; ++i) {
      const double t = time_grid_point(opt.T, i);
      for (auto& v : sa) v = smp.scalar();
      for (auto& v : sb) v = smp.scalar();
      SegmentView va(sa.data(), d, hseg, n_lag), vb(sb.data(), d, hseg, n_lag);
      const double dist = va.sup_distance(vb);
      if (dist == 0.0) continue;
      try {
        spec.functional_drift(t, va, aa);
        spec.functional_drift(t, vb, ab);
      } catch (const std::exception&) {
        ++skipped;
        continue;
      }
      const double d2 = dist * dist;
      tr.update((aa - ab).squaredNorm(), spec.K2(t) * d2 * spec.modulus.u(d2),
                t, aa, ab);
    }
    out.push_back(finish("A(iii)", opt.n_pairs, skipped, tr));
  }
  // (iv): operator-norm bounds probed along random directions
  {
    BoxSampler smp(opt.seed + 5, opt.box_halfwidth);
    RatioTracker tr3, tr4;
    Vec x(d), y(d), v(d);
    Mat sx(d, d), sy(d, d);
    int skipped = 0;
    for (int i = 0; i < opt.n_pairs; ++i) {
      const double t = time_grid_point(opt.T, i);
      smp.vec(x);
      smp.vec(y);
      smp.vec(v);
      const double nv2 = v.squaredNorm();
      if (nv2 == 0.0) continue;
      try {
        spec.sigma(t, x, sx);
        spec.sigma(t, y, sy);
        const Vec w = sy.partialPivLu().solve(v);
        tr3.update(((sx - sy) * w).squaredNorm(), spec.K3(t) * nv2, t, x, y);
        const Vec w2 = sx.partialPivLu().solve(v);
        tr4.update(w2.squaredNorm(), spec.K4(t) * nv2, t, x, y);
      } catch (const std::exception&) {
        ++skipped;
        continue;
      }
    }
    out.push_back(finish("A(iv)-K3", opt.n_pairs, skipped, tr3));
    out.push_back(finish("A(iv)-K4", opt.n_pairs, skipped, tr4));
  }
  return out;
}

std::vector<SpotCheckReport> spot_check_all(const ModelSpec& spec,
                                            const SpotCheckOptions& opt) {
  std::vector<SpotCheckReport> out;
  if (std::holds_alternative<SdeSpec>(spec)) {
    const auto& s = std::get<SdeSpec>(spec);
    out.push_back(spot_check_H1(s, opt));
    out.push_back(spot_check_H2(s, opt));
    if (s.delta) out.push_back(spot_check_H3(s, opt));
  } else {
    const auto& s = std::get<SfdeSpec>(spec);
    auto a = spot_check_A(s, opt);
    out.insert(out.end(), a.begin(), a.end());
  }
  return out;
}

}  // namespace model
}  // namespace couplemc
