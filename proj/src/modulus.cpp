#include "couplemc/modulus.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "couplemc/quadrature.hpp"

namespace couplemc::modulus {

namespace {
constexpr double kE = 2.718281828459045235360287471352662;
constexpr double kInvE = 1.0 / kE;
constexpr double kMaxDouble = std::numeric_limits<double>::max();
}  // namespace

ModulusSpec constant_modulus() {
  ModulusSpec m;
  m.u = [](double) { return 1.0; };
  m.du = [](double) { return 0.0; };
  m.gamma = 1.0;
  m.class_tag = ModulusClass::UDecreasing;
  m.phi_closed = [](double s) { return s; };
  m.G_closed = [](double s) { return std::log(s); };
  m.G_inv_closed = [](double y) { return std::exp(y); };
  m.name = "constant";
  return m;
}

ModulusSpec log_modulus() {
  ModulusSpec m;
  m.u = [](double s) { return s < kInvE ? -std::log(s) : 1.0; };
  m.du = [](double s) { return s < kInvE ? -1.0 / s : 0.0; };
  m.gamma = 2.0;
  m.class_tag = ModulusClass::UDecreasing;
  m.phi_closed = [](double s) {
    // int_0^s log(1/r) dr = s(1 - log s) for s <= 1/e, then slope 1
    if (s <= 0.0) return 0.0;
    if (s < kInvE) return s * (1.0 - std::log(s));
    return s + kInvE;
  };
  m.G_closed = [](double s) {
    // u == 1 on [1/e, inf): G(s) = log s there; below, chain through 1/e
    if (s >= kInvE) return std::log(s);
    return -1.0 - std::log(std::log(1.0 / s));
  };
  m.G_inv_closed = [](double y) {
    if (y >= -1.0) return std::exp(y);
    return std::exp(-std::exp(-(y + 1.0)));
  };
  m.name = "log";
  return m;
}

ModulusSpec inverse_sqrt_modulus() {
  ModulusSpec m;
  m.u = [](double s) { return 1.0 / std::sqrt(s); };
  m.du = [](double s) { return -0.5 * std::pow(s, -1.5); };
  m.class_tag = ModulusClass::UGeneral;
  m.name = "inverse_sqrt";
  return m;
}

double eval_phi(const ModulusSpec& m, double s) {
  if (s < 0.0) throw ConfigError("eval_phi: s must be nonnegative");
  if (s == 0.0) return 0.0;
  if (m.phi_closed) return (*m.phi_closed)(s);
  return quad::integrate_to_zero(m.u, s);
}

double eval_G(const ModulusSpec& m, double s) {
  if (!(s > 0.0)) throw ConfigError("eval_G: s must be positive");
  if (m.G_closed) return (*m.G_closed)(s);
  if (s == 1.0) return 0.0;
  const auto f = [&](double r) { return 1.0 / (r * m.u(r)); };
  // integrate octave by octave so each panel sees a tame integrand
  double total = 0.0;
  if (s > 1.0) {
    double lo = 1.0;
    while (lo < s) {
      const double hi = std::min(s, lo * 2.0);
      total += quad::integrate(f, lo, hi);
      lo = hi;
    }
  } else {
    double hi = 1.0;
    while (hi > s) {
      const double lo = std::max(s, hi * 0.5);
      total -= quad::integrate(f, lo, hi);
      hi = lo;
    }
  }
  return total;
}

InvGResult inv_G(const ModulusSpec& m, double y) {
  InvGResult res;
  if (m.G_inv_closed) {
    const double v = (*m.G_inv_closed)(y);
    if (!std::isfinite(v) || v >= kMaxDouble) {
      res.value = kMaxDouble;
      res.overflow = true;
      return res;
    }
    if (v < 1e-300) {
      res.value = 0.0;
      res.underflow = true;
      return res;
    }
    res.value = v;
    return res;
  }

  // bracket [lo, hi] with G(lo) <= y <= G(hi), expanding geometrically
  double lo = 1.0, hi = 1.0;
  if (y >= 0.0) {
    hi = 2.0;
    double g = eval_G(m, hi);
    while (g < y) {
      lo = hi;
      if (hi > kMaxDouble / 16.0) {
        res.value = kMaxDouble;
        res.overflow = true;
        return res;
      }
      hi *= 16.0;
      g = eval_G(m, hi);
    }
  } else {
    lo = 0.5;
    double g = eval_G(m, lo);
    while (g > y) {
      hi = lo;
      lo *= 0.0625;
      if (lo < 1e-300) {
        res.value = 0.0;
        res.underflow = true;
        return res;
      }
      g = eval_G(m, lo);
    }
  }

  // bisection in log space, then a few Newton polish steps (G' = 1/(s u))
  for (int it = 0; it < 200 && hi / lo > 1.0 + 1e-11; ++it) {
    const double mid = std::sqrt(lo * hi);
    if (eval_G(m, mid) < y)
      lo = mid;
    else
      hi = mid;
  }
  double x = std::sqrt(lo * hi);
  for (int it = 0; it < 4; ++it) {
    const double g = eval_G(m, x);
    const double step = (y - g) * x * m.u(x);
    const double xn = x + step;
    if (xn <= lo || xn >= hi || !std::isfinite(xn)) break;
    x = xn;
  }
  res.value = x;
  return res;
}

std::vector<double> default_membership_grid() {
  std::vector<double> g;
  for (int k = -48; k <= 0; ++k) g.push_back(std::pow(10.0, k * 0.25));
  return g;
}

namespace {

MembershipCheck check_divergence(const ModulusSpec& m) {
  MembershipCheck c;
  // I(eps) = int_eps^1 ds/(s u(s)) = -G(eps) at decade boundaries
  std::vector<double> I;
  for (int k = 1; k <= 12; ++k) I.push_back(-eval_G(m, std::pow(10.0, -k)));
  bool monotone = I[0] > 0.0;
  std::vector<double> inc;
  for (std::size_t k = 1; k < I.size(); ++k) {
    inc.push_back(I[k] - I[k - 1]);
    if (I[k] < I[k - 1] - 1e-12) monotone = false;
  }
  const double last = inc[inc.size() - 1];
  const double prev = inc[inc.size() - 2];
  const double prev2 = inc[inc.size() - 3];
  const double r_last = prev > 0.0 ? last / prev : 0.0;
  const double r_prev = prev2 > 0.0 ? prev / prev2 : 0.0;
  c.value = I.back();
  if (monotone && (I.back() > 10.0 || std::min(r_last, r_prev) >= 0.7)) {
    c.status = CheckStatus::Pass;
    c.detail = "integral grows through the last decades";
  } else if (!monotone || std::max(r_last, r_prev) < 0.5 ||
             last < 1e-6 * std::max(I.back(), 1.0)) {
    c.status = CheckStatus::Fail;
    c.detail = "per-decade growth collapses; integral appears bounded";
  } else {
    c.status = CheckStatus::Inconclusive;
    c.detail = "growth neither sustained nor clearly collapsing";
  }
  return c;
}

}  // namespace

bool MembershipReport::pass_for(ModulusClass tag) const {
  const bool base = divergence.status == CheckStatus::Pass &&
                    u_at_least_one.status == CheckStatus::Pass;
  switch (tag) {
    case ModulusClass::UDecreasing:
      return base && liminf.status == CheckStatus::Pass &&
             du_nonpositive.status == CheckStatus::Pass;
    case ModulusClass::UGeneral:
      return base && liminf.status == CheckStatus::Pass;
    case ModulusClass::Ubar:
      return base && su_monotone.status == CheckStatus::Pass &&
             su_concave.status == CheckStatus::Pass;
  }
  return false;
}

MembershipReport check_class_membership(const ModulusSpec& m,
                                        const std::vector<double>& grid) {
  MembershipReport rep;
  rep.divergence = check_divergence(m);

  // liminf proxy over the two smallest decades of the grid
  const double lo = grid.front();
  double liminf_val = std::numeric_limits<double>::infinity();
  for (double s : grid) {
    if (s > lo * 100.0) continue;
    liminf_val = std::min(liminf_val, m.u(s) + s * m.du(s));
  }
  rep.liminf.value = liminf_val;
  rep.liminf.status =
      liminf_val > 1e-8 ? CheckStatus::Pass : CheckStatus::Fail;
  rep.liminf.detail = "min of u(r) + r u'(r) over the two smallest decades";

  double min_u = std::numeric_limits<double>::infinity();
  double max_du = -std::numeric_limits<double>::infinity();
  for (double s : grid) {
    min_u = std::min(min_u, m.u(s));
    max_du = std::max(max_du, m.du(s));
  }
  rep.u_at_least_one.value = min_u;
  rep.u_at_least_one.status =
      min_u >= 1.0 - 1e-12 ? CheckStatus::Pass : CheckStatus::Fail;
  rep.du_nonpositive.value = max_du;
  rep.du_nonpositive.status =
      max_du <= 1e-12 ? CheckStatus::Pass : CheckStatus::Fail;

  // Ubar: s u(s) nondecreasing and midpoint-concave on the grid
  bool mono = true, conc = true;
  double worst_mono = 0.0, worst_conc = 0.0;
  auto g = [&](double s) { return s * m.u(s); };
  for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
    const double d = g(grid[i + 1]) - g(grid[i]);
    worst_mono = std::min(worst_mono, d);
    if (d < -1e-12 * std::max(1.0, g(grid[i]))) mono = false;
  }
  for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
    const double a = grid[i], b = grid[i + 1];
    const double mid = 0.5 * (a + b);
    const double gap = g(mid) - 0.5 * (g(a) + g(b));
    worst_conc = std::min(worst_conc, gap);
    if (gap < -1e-10 * std::max(1.0, g(b))) conc = false;
  }
  rep.su_monotone.value = worst_mono;
  rep.su_monotone.status = mono ? CheckStatus::Pass : CheckStatus::Fail;
  rep.su_concave.value = worst_conc;
  rep.su_concave.status = conc ? CheckStatus::Pass : CheckStatus::Fail;
  return rep;
}

ConditionUCheck check_condition_U(const ModulusSpec& m, double gamma) {
  if (!(gamma > 0.0)) throw ConfigError("condition (U): gamma must be > 0");
  ConditionUCheck c;
  for (int k = -40; k <= 16; ++k) {
    const double s = std::pow(10.0, 0.25 * k);
    const double u = m.u(s);
    const double ratio = eval_phi(m, s) / (gamma * s * u * u);
    if (ratio > c.max_ratio) {
      c.max_ratio = ratio;
      c.argmax = s;
    }
  }
  c.pass = c.max_ratio <= 1.0 + 1e-9;
  return c;
}

const char* to_string(BihariVariant v) {
  return v == BihariVariant::AsStated ? "as-stated" : "time-scaled";
}

BihariResult bihari_C(const ModulusSpec& m, double T, double r, double K1,
                      double K2, double K3, double K, BihariVariant variant) {
  if (!(T > 0.0)) throw ConfigError("bihari_C: T must be positive");
  if (r < 0.0 || K1 < 0.0 || K2 < 0.0 || K3 < 0.0 || K < 0.0)
    throw ConfigError("bihari_C: r and constants must be nonnegative");
  BihariResult res;
  if (r == 0.0) return res;  // G(0+) = -inf forces C(T,0) = 0
  const double A = 4.0 * (K1 + 2.0 * K2 * K3 + 32.0 * K);
  double arg = eval_G(m, 2.0 * r * r);
  if (variant == BihariVariant::AsStated) {
    if (A == 0.0) return res;  // + G(0+) = -inf
    arg += eval_G(m, A);
  } else {
    arg += A * T;
  }
  const InvGResult inv = inv_G(m, arg);
  res.value = inv.value;
  res.overflow = inv.overflow;
  return res;
}

BihariResult eval_Phi(const ModulusSpec& m, double T, double r, double K1,
                      double K2, double K3, double K, BihariVariant variant) {
  const BihariResult C = bihari_C(m, T, r, K1, K2, K3, K, variant);
  BihariResult res;
  res.overflow = C.overflow;
  if (C.value == 0.0) {
    // Phi(T,0) = 0 when s u(s) -> 0 at the origin
    const double s0 = 1e-14;
    if (s0 * m.u(s0) > 1e-6)
      throw NumericalError("eval_Phi: s*u(s) does not vanish at 0");
    res.value = 0.0;
    return res;
  }
  const double v = C.value * m.u(C.value);
  if (!std::isfinite(v)) {
    res.value = kMaxDouble;
    res.overflow = true;
    return res;
  }
  res.value = v;
  return res;
}

}  // namespace couplemc::modulus
