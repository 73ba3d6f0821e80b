#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace couplemc {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Invalid user input: bad model parameters, malformed configs, violated
/// preconditions that a caller could have checked.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Numerical breakdown inside an algorithm (quadrature not converging,
/// singular linear solve, ...). Distinct from ConfigError so callers can
/// report the two differently.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline const char* version() {
#ifdef COUPLEMC_VERSION
  return COUPLEMC_VERSION;
#else
  return "0.0.0";
#endif
}

}  // namespace couplemc
