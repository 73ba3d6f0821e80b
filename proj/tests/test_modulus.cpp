#include <doctest.h>

#include <cmath>
#include <limits>

#include "couplemc/modulus.hpp"
#include "couplemc/rng.hpp"

using namespace couplemc;
using namespace couplemc::modulus;

namespace {

// force the quadrature / bracketed-inversion path
ModulusSpec numeric_only(ModulusSpec m) {
  m.phi_closed.reset();
  m.G_closed.reset();
  m.G_inv_closed.reset();
  return m;
}

constexpr double kE = 2.718281828459045235360287471352662;

}  // namespace

TEST_CASE("phi: constant modulus") {
  const auto m = constant_modulus();
  CHECK(eval_phi(m, 1.0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(eval_phi(m, 0.0) == 0.0);
  const auto mq = numeric_only(m);
  CHECK(eval_phi(mq, 1.0) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(eval_phi(mq, 3.5) == doctest::Approx(3.5).epsilon(1e-9));
}

TEST_CASE("phi: log modulus at 1/e equals 2/e") {
  // oracle: int_0^s (-log r) dr = s - s log s, evaluated at s = 1/e
  const double s = 1.0 / kE;
  const double oracle = s - s * std::log(s);
  CHECK(oracle == doctest::Approx(2.0 / kE).epsilon(1e-14));
  const auto m = log_modulus();
  CHECK(eval_phi(m, s) == doctest::Approx(oracle).epsilon(1e-12));
  CHECK(eval_phi(numeric_only(m), s) == doctest::Approx(oracle).epsilon(1e-9));
  CHECK(eval_phi(m, s) == doctest::Approx(0.735759).epsilon(1e-6));
}

TEST_CASE("phi is strictly monotone (property)") {
  rng::NormalStream u(2024, 0, 0);
  for (const auto& m :
       {numeric_only(constant_modulus()), numeric_only(log_modulus())}) {
    for (int i = 0; i < 60; ++i) {
      const double a = std::pow(10.0, -9.0 + 12.0 * u.next_uniform());
      const double b = a * (1.0 + u.next_uniform());
      if (b <= a) continue;
      CHECK(eval_phi(m, a) < eval_phi(m, b));
    }
  }
}

TEST_CASE("G: closed forms and trivial values") {
  const auto m = constant_modulus();
  CHECK(eval_G(m, 2.0) == doctest::Approx(std::log(2.0)).epsilon(1e-14));
  CHECK(eval_G(m, 1.0) == 0.0);
  CHECK(inv_G(m, 1.0).value == doctest::Approx(kE).epsilon(1e-12));
  // quadrature route against the log closed form
  const auto mq = numeric_only(m);
  CHECK(eval_G(mq, 2.0) == doctest::Approx(std::log(2.0)).epsilon(1e-10));
  CHECK(eval_G(mq, 1e-4) == doctest::Approx(std::log(1e-4)).epsilon(1e-10));
}

TEST_CASE("G: log modulus quadrature matches the chained closed form") {
  const auto m = log_modulus();
  const auto mq = numeric_only(m);
  for (double s : {1e-8, 1e-3, 0.2, 1.0, 7.0, 1e5}) {
    CHECK(eval_G(mq, s) == doctest::Approx(eval_G(m, s)).epsilon(1e-9));
  }
}

TEST_CASE("inv_G round trip over 12 decades") {
  for (const auto& m :
       {numeric_only(constant_modulus()), numeric_only(log_modulus())}) {
    for (int k = -6; k <= 6; ++k) {
      const double s = std::pow(10.0, k);
      const double y = eval_G(m, s);
      const double back = inv_G(m, y).value;
      CHECK(std::abs(back - s) / s < 1e-8);
    }
  }
}

TEST_CASE("inv_G underflow and overflow flags") {
  const auto m = constant_modulus();
  SUBCASE("closed form") {
    const auto lo = inv_G(m, -800.0);
    CHECK(lo.value == 0.0);
    CHECK(lo.underflow);
    const auto hi = inv_G(m, 800.0);
    CHECK(hi.overflow);
    CHECK(hi.value == std::numeric_limits<double>::max());
  }
  SUBCASE("bracketed") {
    const auto mq = numeric_only(m);
    const auto lo = inv_G(mq, -800.0);
    CHECK(lo.value == 0.0);
    CHECK(lo.underflow);
    const auto hi = inv_G(mq, 800.0);
    CHECK(hi.overflow);
  }
}

TEST_CASE("class membership: constant and log pass, s^{-1/2} fails") {
  const auto rep_const = check_class_membership(constant_modulus());
  CHECK(rep_const.divergence.status == CheckStatus::Pass);
  CHECK(rep_const.liminf.status == CheckStatus::Pass);
  CHECK(rep_const.liminf.value == doctest::Approx(1.0));
  CHECK(rep_const.pass_for(ModulusClass::UDecreasing));
  CHECK(rep_const.pass_for(ModulusClass::Ubar));  // s*1: monotone and concave

  const auto rep_log = check_class_membership(log_modulus());
  CHECK(rep_log.divergence.status == CheckStatus::Pass);
  CHECK(rep_log.liminf.status == CheckStatus::Pass);
  CHECK(rep_log.pass_for(ModulusClass::UDecreasing));
  CHECK(rep_log.su_monotone.status == CheckStatus::Pass);
  CHECK(rep_log.su_concave.status == CheckStatus::Pass);

  const auto rep_bad = check_class_membership(inverse_sqrt_modulus());
  CHECK(rep_bad.divergence.status == CheckStatus::Fail);
  CHECK_FALSE(rep_bad.pass_for(ModulusClass::UGeneral));
}

TEST_CASE("condition (U) checker") {
  const auto m = constant_modulus();
  CHECK(check_condition_U(m, 1.0).pass);        // phi(s) = s = 1 * s * 1^2
  CHECK_FALSE(check_condition_U(m, 0.5).pass);  // ratio 2 everywhere
  const auto chk = check_condition_U(log_modulus(), 2.0);
  CHECK(chk.pass);
  CHECK(chk.max_ratio == doctest::Approx(1.0).epsilon(1e-3));
  CHECK_FALSE(check_condition_U(log_modulus(), 1.5).pass);
}

TEST_CASE("bihari_C: closed-form product identity for u == 1") {
  const auto m = constant_modulus();
  // G = log turns the as-stated sum into a product: C = 2 r^2 * 4{K1+2K2K3+32K}
  const auto c =
      bihari_C(m, 1.0, 1.0, 1.0, 0.0, 0.0, 1.0, BihariVariant::AsStated);
  CHECK_FALSE(c.overflow);
  CHECK(std::abs(c.value - 264.0) / 264.0 < 1e-12);
  const auto cq = bihari_C(numeric_only(m), 1.0, 1.0, 1.0, 0.0, 0.0, 1.0,
                           BihariVariant::AsStated);
  CHECK(cq.value == doctest::Approx(264.0).epsilon(1e-8));
}

TEST_CASE("bihari_C: r = 0 gives 0 for any constants") {
  for (auto variant : {BihariVariant::AsStated, BihariVariant::TimeScaled}) {
    const auto c =
        bihari_C(log_modulus(), 2.0, 0.0, 3.0, 1.0, 5.0, 7.0, variant);
    CHECK(c.value == 0.0);
    CHECK_FALSE(c.overflow);
  }
}

TEST_CASE("bihari_C: time-scaled variant against the log oracle") {
  // u == 1: C = 2 r^2 exp(4{K1 + 2K2K3 + 32K} T); representable here, so the
  // overflow flag stays clear and the value matches the closed form
  const auto m = constant_modulus();
  const auto c =
      bihari_C(m, 1.0, 1.0, 1.0, 0.0, 0.0, 1.0, BihariVariant::TimeScaled);
  const double oracle = 2.0 * std::exp(132.0);
  CHECK_FALSE(c.overflow);
  CHECK(c.value == doctest::Approx(oracle).epsilon(1e-10));
  // a genuinely unrepresentable preimage saturates and flags
  const auto big =
      bihari_C(m, 1.0, 1.0, 1.0, 0.0, 0.0, 10.0, BihariVariant::TimeScaled);
  CHECK(big.overflow);
  CHECK(big.value == std::numeric_limits<double>::max());
}

TEST_CASE("bihari_C monotone in r and in each constant (property)") {
  const auto m = numeric_only(log_modulus());
  double prev = 0.0;
  for (double r : {0.0, 0.1, 0.5, 1.0, 2.0}) {
    const double c =
        bihari_C(m, 1.0, r, 0.5, 0.2, 0.3, 0.1, BihariVariant::AsStated).value;
    CHECK(c >= prev - 1e-12);
    prev = c;
  }
  const double base =
      bihari_C(m, 1.0, 1.0, 0.5, 0.2, 0.3, 0.1, BihariVariant::AsStated).value;
  CHECK(bihari_C(m, 1.0, 1.0, 0.9, 0.2, 0.3, 0.1, BihariVariant::AsStated)
            .value >= base);
  CHECK(bihari_C(m, 1.0, 1.0, 0.5, 0.6, 0.3, 0.1, BihariVariant::AsStated)
            .value >= base);
  CHECK(bihari_C(m, 1.0, 1.0, 0.5, 0.2, 0.7, 0.1, BihariVariant::AsStated)
            .value >= base);
  CHECK(bihari_C(m, 1.0, 1.0, 0.5, 0.2, 0.3, 0.4, BihariVariant::AsStated)
            .value >= base);
}

TEST_CASE("Phi = C u(C)") {
  const auto m = constant_modulus();
  const auto p =
      eval_Phi(m, 1.0, 1.0, 1.0, 0.0, 0.0, 1.0, BihariVariant::AsStated);
  CHECK(p.value == doctest::Approx(264.0).epsilon(1e-12));
  // r = 0 with s u(s) -> 0 at the origin
  CHECK(eval_Phi(m, 1.0, 0.0, 1.0, 0.0, 0.0, 1.0, BihariVariant::AsStated)
            .value == 0.0);
  // log modulus: u == 1 above 1/e, so Phi == C there
  const auto ml = log_modulus();
  const auto c =
      bihari_C(ml, 1.0, 0.7, 0.2, 0.0, 0.0, 0.05, BihariVariant::AsStated);
  REQUIRE(c.value > 1.0 / kE);
  const auto pl =
      eval_Phi(ml, 1.0, 0.7, 0.2, 0.0, 0.0, 0.05, BihariVariant::AsStated);
  CHECK(pl.value == doctest::Approx(c.value).epsilon(1e-12));
}

TEST_CASE("quadrature failure raises a numerical error") {
  ModulusSpec bad;
  bad.u = [](double s) { return 1.0 + 1e6 * std::abs(std::sin(1.0 / s)); };
  bad.du = [](double) { return 0.0; };
  bad.name = "pathological";
  CHECK_THROWS_AS((void)eval_phi(bad, 1.0), NumericalError);
}
