#include "couplemc/oracle.hpp"

#include <cmath>

namespace couplemc::oracle {

double exact_mean_factor(const LinearModelParams& p, double T) {
  return std::exp(-p.kappa * T);
}

double exact_variance(const LinearModelParams& p, double T) {
  return p.sigma0 * p.sigma0 * (1.0 - std::exp(-2.0 * p.kappa * T)) /
         (2.0 * p.kappa);
}

double exact_Ptf(const LinearModelParams& p, const Vec& x, double T,
                 TestFunctionTag tag, const Vec& c, double const_value) {
  if (tag == TestFunctionTag::Constant) return const_value;
  if (x.size() != p.dim || c.size() != p.dim)
    throw ConfigError("oracle: dimension mismatch");
  const double mf = exact_mean_factor(p, T);
  const double v = exact_variance(p, T);
  switch (tag) {
    case TestFunctionTag::ExpC: {
      double log_val = 0.0;
      for (int i = 0; i < p.dim; ++i)
        log_val += c[i] * x[i] * mf + 0.5 * c[i] * c[i] * v;
      return std::exp(log_val);
    }
    case TestFunctionTag::LogExpC:
      return c.dot(x) * mf;
    default:
      throw ConfigError("oracle: unknown test function tag");
  }
}

LogHarnackGap exact_log_harnack_gap(const LinearModelParams& p, const Vec& x,
                                    const Vec& y, double T, const Vec& c) {
  LogHarnackGap g;
  g.lhs = exact_Ptf(p, y, T, TestFunctionTag::LogExpC, c);
  g.rhs_baseline = std::log(exact_Ptf(p, x, T, TestFunctionTag::ExpC, c));
  return g;
}

}  // namespace couplemc::oracle
