#pragma once

#include "couplemc/common.hpp"

namespace couplemc::oracle {

/// dX = -kappa X dt + sigma0 dB, coordinates independent.
/// Transition law: Gaussian, mean x e^{-kappa T}, per-coordinate variance
/// v(T) = sigma0^2 (1 - e^{-2 kappa T}) / (2 kappa).
struct LinearModelParams {
  double kappa = 1.0;
  double sigma0 = 1.0;
  int dim = 1;
};

double exact_mean_factor(const LinearModelParams& p, double T);  // e^{-kappa T}
double exact_variance(const LinearModelParams& p, double T);     // v(T)

enum class TestFunctionTag { ExpC, LogExpC, Constant };

/// P(T) f(x) for the closed-form catalog:
///   ExpC:     f(z) = exp(<c, z>)        ->  prod_i exp(c_i x_i e^{-kT} + c_i^2 v/2)
///   LogExpC:  E log exp(<c, Z>) = <c, E Z> = <c, x> e^{-kT}
///   Constant: f == const_value
double exact_Ptf(const LinearModelParams& p, const Vec& x, double T,
                 TestFunctionTag tag, const Vec& c, double const_value = 1.0);

struct LogHarnackGap {
  double lhs;            // P(T) log f (y) with f = exp(<c,.>)
  double rhs_baseline;   // log P(T) f (x)
  double gap() const { return lhs - rhs_baseline; }
};
LogHarnackGap exact_log_harnack_gap(const LinearModelParams& p, const Vec& x,
                                    const Vec& y, double T, const Vec& c);

}  // namespace couplemc::oracle
