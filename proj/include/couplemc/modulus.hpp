#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "couplemc/common.hpp"

namespace couplemc {

enum class ModulusClass { UDecreasing, UGeneral, Ubar };

/// A modulus u: (0,inf) -> [1,inf) together with its derivative and the
/// constant gamma for which phi(s) <= gamma * s * u(s)^2 holds (when known).
/// Closed forms for phi, G and G^{-1} are optional shortcuts; when absent the
/// evaluators fall back to adaptive quadrature / bracketed inversion.
struct ModulusSpec {
  std::function<double(double)> u;
  std::function<double(double)> du;
  std::optional<double> gamma;
  ModulusClass class_tag = ModulusClass::UGeneral;
  std::optional<std::function<double(double)>> phi_closed;
  std::optional<std::function<double(double)>> G_closed;
  std::optional<std::function<double(double)>> G_inv_closed;
  std::string name = "custom";
};

namespace modulus {

// Built-in moduli.
ModulusSpec constant_modulus();      // u == 1, gamma = 1
ModulusSpec log_modulus();           // u(s) = log(e v 1/s), gamma = 2
ModulusSpec inverse_sqrt_modulus();  // u(s) = s^{-1/2}; NOT in class U

/// phi(s) = int_0^s u(r) dr
double eval_phi(const ModulusSpec& m, double s);

/// G(s) = int_1^s dr / (r u(r)), strictly increasing, G(1) = 0
double eval_G(const ModulusSpec& m, double s);

struct InvGResult {
  double value = 0.0;
  bool overflow = false;   // preimage above the largest representable double
  bool underflow = false;  // y below the representable range, G(0+) = -inf
};
InvGResult inv_G(const ModulusSpec& m, double y);

enum class CheckStatus { Pass, Fail, Inconclusive };

struct MembershipCheck {
  CheckStatus status = CheckStatus::Inconclusive;
  double value = 0.0;
  std::string detail;
};

struct MembershipReport {
  MembershipCheck divergence;   // int_0^1 ds/(s u(s)) = inf, decade heuristic
  MembershipCheck liminf;       // liminf_{r->0} (u(r) + r u'(r)) > 0
  MembershipCheck u_at_least_one;
  MembershipCheck du_nonpositive;  // only binding for UDecreasing
  MembershipCheck su_monotone;     // only binding for Ubar
  MembershipCheck su_concave;      // only binding for Ubar
  bool pass_for(ModulusClass tag) const;
};

std::vector<double> default_membership_grid();  // log-spaced 1e-12 .. 1
MembershipReport check_class_membership(const ModulusSpec& m,
                                        const std::vector<double>& grid);
inline MembershipReport check_class_membership(const ModulusSpec& m) {
  return check_class_membership(m, default_membership_grid());
}

struct ConditionUCheck {
  bool pass = false;
  double max_ratio = 0.0;  // max over grid of phi(s) / (gamma s u(s)^2)
  double argmax = 0.0;
};
ConditionUCheck check_condition_U(const ModulusSpec& m, double gamma);

enum class BihariVariant { AsStated, TimeScaled };
const char* to_string(BihariVariant v);

struct BihariResult {
  double value = 0.0;
  bool overflow = false;
};

/// C(T,r): as-stated  G^{-1}( G(2 r^2) + G(4{K1 + 2 K2 K3 + 32 K}) )
///         time-scaled G^{-1}( G(2 r^2) + 4{K1 + 2 K2 K3 + 32 K} T )
BihariResult bihari_C(const ModulusSpec& m, double T, double r, double K1,
                      double K2, double K3, double K, BihariVariant variant);

/// Phi(T,r) = C(T,r) u(C(T,r)); Phi(T,0) = 0 when s u(s) -> 0 at 0
BihariResult eval_Phi(const ModulusSpec& m, double T, double r, double K1,
                      double K2, double K3, double K, BihariVariant variant);

}  // namespace modulus
}  // namespace couplemc
