#pragma once

#include <cmath>
#include <cstddef>
#include <functional>

#include "couplemc/common.hpp"

namespace couplemc::quad {

// Gauss(7)/Kronrod(15) pair on [-1,1].
namespace detail {
inline constexpr double kXgk[8] = {
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144838258730,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000};
inline constexpr double kWgk[8] = {
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714};
inline constexpr double kWg[4] = {
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327};

struct Panel {
  double kronrod;
  double err;
};

template <class F>
Panel gk15(const F& f, double a, double b) {
  const double c = 0.5 * (a + b);
  const double h = 0.5 * (b - a);
  double resk = 0.0, resg = 0.0;
  for (int j = 0; j < 8; ++j) {
    const double x = h * kXgk[j];
    double fv;
    if (j == 7) {
      fv = f(c);
      resk += kWgk[7] * fv;
      resg += kWg[3] * fv;
    } else {
      const double f1 = f(c - x);
      const double f2 = f(c + x);
      fv = f1 + f2;
      resk += kWgk[j] * fv;
      if (j % 2 == 1) resg += kWg[j / 2] * fv;
    }
  }
  return Panel{resk * h, std::abs((resk - resg) * h)};
}
}  // namespace detail

struct Options {
  double rel_tol = 1e-10;
  double abs_tol = 1e-14;
  int max_depth = 48;
  std::size_t max_panels = 1u << 18;
};

/// Adaptive Gauss-Kronrod over a finite interval with a smooth integrand.
template <class F>
double integrate(const F& f, double a, double b, const Options& opt = {}) {
  if (a == b) return 0.0;
  std::size_t panels = 0;
  struct Item {
    double a, b;
    int depth;
  };
  double total = 0.0;
  // explicit stack; refine worst-first is unnecessary at these tolerances
  std::function<double(double, double, int, double)> recurse =
      [&](double lo, double hi, int depth, double whole_hint) -> double {
    auto p = detail::gk15(f, lo, hi);
    ++panels;
    if (panels > opt.max_panels)
      throw NumericalError("quadrature: panel budget exhausted");
    const double tol =
        std::max(opt.abs_tol, opt.rel_tol * std::max(std::abs(p.kronrod),
                                                     std::abs(whole_hint)));
    if (p.err <= tol || depth >= opt.max_depth) {
      if (p.err > tol * 1e3 && depth >= opt.max_depth)
        throw NumericalError("quadrature: did not converge after max subdivisions");
      return p.kronrod;
    }
    const double mid = 0.5 * (lo + hi);
    return recurse(lo, mid, depth + 1, whole_hint) +
           recurse(mid, hi, depth + 1, whole_hint);
  };
  total = recurse(a, b, 0, 0.0);
  return total;
}

/// Integral of f over (0, b] where f may have an integrable singularity at 0
/// (f >= 0, f locally bounded away from 0). Panels shrink geometrically
/// toward the origin; the tail is truncated once its contribution is
/// negligible relative to the accumulated value.
template <class F>
double integrate_to_zero(const F& f, double b, const Options& opt = {}) {
  if (b <= 0.0) return 0.0;
  double total = 0.0;
  double hi = b;
  for (int k = 0; k < 4000; ++k) {
    const double lo = hi * 0.5;
    const double piece = integrate(f, lo, hi, opt);
    total += piece;
    hi = lo;
    if (hi < 1e-300) break;
    if (std::abs(piece) <= opt.abs_tol + 0.25 * opt.rel_tol * std::abs(total) &&
        k > 8) {
      // geometric tail estimate: remaining mass is bounded by a small
      // multiple of the last piece for integrable singularities
      break;
    }
  }
  return total;
}

}  // namespace couplemc::quad
