#include <doctest.h>

#include <cmath>
#include <random>
#include <stdexcept>

#include "oracle.hpp"
#include "plap/nfunction.hpp"

using namespace plap;
using oracle::hp;

namespace {

// Closed-form regularized integrand in 50-digit arithmetic.
struct HpRegularized {
  hp p, lo, hi;

  hp c() const { return pow(lo, p - 2); }
  hp big_c() const { return pow(hi, p - 2); }
  hp shift() const { return pow(lo, p) / p - pow(lo, p) / 2; }

  hp phi(hp t) const {
    if (t < lo) return shift() + c() * t * t / 2;
    if (t > hi) return pow(hi, p) / p + big_c() * (t * t - hi * hi) / 2;
    return pow(t, p) / p;
  }
  hp conj(hp r) const {
    const hp q = p / (p - 1);
    const hp r_lo = pow(lo, p - 1), r_hi = pow(hi, p - 1);
    if (r < r_lo) return r * r / (2 * c()) - shift();
    if (r > r_hi) return pow(r_hi, q) / q + (r * r - r_hi * r_hi) / (2 * big_c());
    return pow(r, q) / q;
  }
};

}  // namespace

TEST_SUITE("nfunction") {
  TEST_CASE("power family closed forms") {
    const PowerNFunction two(2.0);
    CHECK(two.phi(3.0) == doctest::Approx(4.5).epsilon(1e-15));
    CHECK(two.phi_prime(3.0) == doctest::Approx(3.0).epsilon(1e-15));
    CHECK(two.conj(3.0) == doctest::Approx(4.5).epsilon(1e-15));

    const PowerNFunction four(4.0);
    CHECK(four.phi_prime(2.0) == doctest::Approx(8.0).epsilon(1e-15));
    CHECK(four.conj_prime(8.0) == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(four.conj_prime(four.phi_prime(1.7)) == doctest::Approx(1.7).epsilon(1e-14));
  }

  TEST_CASE("exponent validation and dual exponent") {
    CHECK_THROWS_AS(PowerNFunction(1.0), std::invalid_argument);
    CHECK_THROWS_AS(PowerNFunction(0.5), std::invalid_argument);
    for (double p : {1.5, 2.0, 3.0, 10.0, 80.0}) {
      const PowerNFunction f(p);
      CHECK(std::abs(1.0 / p + 1.0 / f.dual_exponent() - 1.0) <= 2e-16);
    }
    CHECK_THROWS(PowerNFunction(4.0).phi(-1.0));
    CHECK_THROWS(PowerNFunction(4.0).conj(-1.0));
    CHECK_THROWS(RegularizedNFunction(PowerNFunction(4.0), RelaxationInterval(1e-3, 1e3)).phi_prime(-1.0));
    CHECK_THROWS_AS(RelaxationInterval(2.0, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(RelaxationInterval(0.0, 1.0), std::invalid_argument);
  }

  TEST_CASE("regularized derivative below the interval") {
    const auto f = Integrand::regularized(10.0, 1e-3, 1e3);
    // t (delta_-)^(p-2) = 1e-4 * 1e-24
    const hp want = hp("1e-4") * pow(hp("1e-3"), 8);
    CHECK(oracle::rel(f.phi_prime(1e-4), oracle::to_double(want)) <= 1e-14);
  }

  TEST_CASE("regularized conjugate derivative on the first piece") {
    const RegularizedNFunction f(PowerNFunction(10.0), RelaxationInterval(1e-3, 1e3));
    const hp lo("1e-3");
    const hp r_lo = pow(lo, 9);
    const hp r = r_lo / 2;
    const hp want = r * lo / r_lo;
    CHECK(oracle::rel(f.conj_prime(oracle::to_double(r)), oracle::to_double(want)) <= 1e-14);
  }

  TEST_CASE("values match the high-precision closed form") {
    for (double p : {2.0, 3.0, 10.0, 40.0}) {
      const RegularizedNFunction f(PowerNFunction(p), RelaxationInterval(1e-2, 1e1));
      const HpRegularized o{hp(p), hp("1e-2"), hp("1e1")};
      for (double t : {0.0, 1e-3, 5e-3, 0.02, 0.7, 3.0, 9.9, 20.0, 100.0}) {
        const double want = oracle::to_double(o.phi(hp(t)));
        CHECK(std::abs(f.phi(t) - want) <= 1e-13 * std::max(1.0, std::abs(want)));
        const double r = t * std::pow(std::clamp(t, 1e-2, 1e1), p - 2);
        const double want_c = oracle::to_double(o.conj(hp(r)));
        CHECK(std::abs(f.conj(r) - want_c) <= 1e-12 * std::max(1.0, std::abs(want_c)));
      }
    }
  }

  TEST_CASE("odd extensions") {
    const auto pw = Integrand::power(3.0);
    const auto reg = Integrand::regularized(10.0, 1e-3, 1e3);
    CHECK(a_phi(pw, 0.0) == 0.0);
    CHECK(a_phi(reg, 0.0) == 0.0);
    CHECK(a_phi_star(reg, 0.0) == 0.0);
    CHECK(v_phi(reg, 0.0) == 0.0);
    CHECK(v_phi_star(reg, 0.0) == 0.0);
    CHECK(a_phi(pw, -2.0) == doctest::Approx(-4.0).epsilon(1e-15));
    // 5 lies in the power piece: sqrt(5^8) * 5
    CHECK(v_phi(reg, 5.0) == doctest::Approx(3125.0).epsilon(1e-14));

    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-50.0, 50.0);
    for (int i = 0; i < 200; ++i) {
      const double t = u(rng);
      CHECK(a_phi(reg, -t) == -a_phi(reg, t));
      CHECK(v_phi(reg, -t) == -v_phi(reg, t));
      CHECK(a_phi_star(reg, -t) == -a_phi_star(reg, t));
      CHECK(v_phi_star(reg, -t) == -v_phi_star(reg, t));
    }
  }

  TEST_CASE("regularization errors") {
    const RegularizedNFunction f(PowerNFunction(4.0), RelaxationInterval(1.0, 3.0));
    for (double t : {1.0, 1.5, 2.9, 3.0}) CHECK(f.primal_error(t) == 0.0);
    // maximal at t = 0: delta_- phi'(delta_-) / 2 - phi(delta_-) = 1/2 - 1/4
    CHECK(f.primal_error(0.0) == doctest::Approx(0.25).epsilon(1e-15));
    const double t = 6.0;
    CHECK(f.primal_error(t) >= 0.0);
    CHECK(f.primal_error(t) <= PowerNFunction(4.0).phi(t) - PowerNFunction(4.0).phi(3.0));
    // dual error vanishes on [phi'(delta_-), phi'(delta_+)] = [1, 27]
    for (double r : {1.0, 2.0, 10.0, 27.0}) CHECK(f.dual_error(r) == 0.0);
    for (double r : {0.0, 0.3, 30.0, 1e3}) {
      CHECK(f.dual_error(r) >= 0.0);
      CHECK(f.dual_error(r) <= f.dual_error_bound(r));
    }
  }

  TEST_CASE("growth bounds") {
    const auto q = RegularizedNFunction(PowerNFunction(2.0), RelaxationInterval(1e-3, 1e3)).growth_bounds();
    CHECK(q.lower == 1.0);
    CHECK(q.upper == 1.0);
    const auto pw = PowerNFunction(2.0).growth_bounds();
    CHECK(pw.lower == 1.0);
    CHECK(pw.upper == 1.0);

    const auto g = RegularizedNFunction(PowerNFunction(10.0), RelaxationInterval(1e-3, 1e3)).growth_bounds();
    CHECK(oracle::rel(g.lower, oracle::to_double(pow(hp("1e-3"), 8))) <= 1e-14);
    CHECK(oracle::rel(g.upper, oracle::to_double(pow(hp("1e3"), 8))) <= 1e-14);

    const auto h = RegularizedNFunction(PowerNFunction(3.0), RelaxationInterval(0.5, 2.0)).growth_bounds();
    CHECK(h.lower == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(h.upper == doctest::Approx(2.0).epsilon(1e-15));

    CHECK_THROWS_AS(PowerNFunction(4.0).growth_bounds(), std::domain_error);
  }

  TEST_CASE("derivative ratio stays within the growth bounds") {
    const RegularizedNFunction f(PowerNFunction(10.0), RelaxationInterval(1e-2, 1e2));
    const auto g = f.growth_bounds();
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> lt(-8.0, 4.0);
    for (int i = 0; i < 1000; ++i) {
      const double t = std::pow(10.0, lt(rng));
      const double ratio = f.phi_prime(t) / t;
      CHECK(ratio >= g.lower * (1 - 1e-14));
      CHECK(ratio <= g.upper * (1 + 1e-14));
    }
  }

  TEST_CASE("conjugate identity and inverse relation") {
    for (double p : {2.0, 3.0, 10.0, 40.0}) {
      const auto f = Integrand::regularized(p, 1e-3, 1e3);
      const auto pw = Integrand::power(p);
      for (double t : {1e-5, 1e-3, 0.1, 0.9, 1.0, 7.0, 900.0, 1e3}) {
        for (const auto* nf : {&f, &pw}) {
          const double d = nf->phi_prime(t);
          if (!std::isfinite(d)) continue;
          const double lhs = nf->conj(d);
          const double rhs = d * t - nf->phi(t);
          CHECK(std::abs(lhs - rhs) <= 1e-9 * (1.0 + d * t));
          CHECK(oracle::rel(nf->conj_prime(d), t) <= 1e-10);
        }
      }
    }
  }

  TEST_CASE("monotone in the relaxation interval") {
    const double p = 6.0;
    const RegularizedNFunction narrow(PowerNFunction(p), RelaxationInterval(0.1, 2.0));
    const RegularizedNFunction wide(PowerNFunction(p), RelaxationInterval(0.01, 20.0));
    for (double t : {0.0, 0.005, 0.05, 0.5, 1.5, 5.0, 50.0}) {
      CHECK(narrow.phi(t) <= wide.phi(t) + 1e-15 * std::abs(wide.phi(t)));
      CHECK(narrow.conj(t) >= wide.conj(t) - 1e-15 * std::abs(wide.conj(t)));
    }
  }

  TEST_CASE("large exponents saturate instead of producing NaN") {
    const PowerNFunction f(80.0);
    const double v = f.phi(1e5);
    CHECK(std::isinf(v));
    CHECK(!std::isnan(f.phi_prime(1e5)));
  }
}
