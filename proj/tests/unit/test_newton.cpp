#include <doctest.h>

#include <random>

#include "oracle.hpp"
#include "plap/newton.hpp"
#include "plap/regression.hpp"
#include "support.hpp"

using namespace plap;
using oracle::hp;

namespace {

// One edge 0 -> 1 with vertex 0 fixed to 1: E(v) = ((1 - v)^2 + eps^2)^(p/2).
ProblemSpec one_edge(double p) {
  auto b = SparseMatrix::from_triplets(1, 2, {{0, 0, 1.0}, {0, 1, -1.0}});
  Vector g(2);
  g << 1.0, 0.0;
  return ProblemSpec(b, Vector::Ones(1), Vector::Zero(2), g, {true, false}, Integrand::power(p));
}

}  // namespace

TEST_SUITE("newton") {
  TEST_CASE("quadratic energy takes one step") {
    const auto inst = random_instance(30, 8, 5, 2.0);
    const ProblemSpec spec = build_lifted(inst, Integrand::power(2.0));
    const auto res = newton_solve(spec);
    CHECK(res.converged());
    CHECK(res.iterations == 1);
    const Eigen::MatrixXd a = inst.a.to_dense();
    const Vector u = oracle::dense_solve(a.transpose() * a, a.transpose() * inst.b);
    CHECK((regression_coefficients(inst, res.u_g) - u).norm() <= 1e-8 * u.norm());
  }

  TEST_CASE("scalar hand iteration") {
    const double p = 6.0, eps = 1e-8;
    NewtonConfig cfg;
    cfg.eps = eps;
    cfg.max_outer = 12;
    cfg.grad_tol = 1e-300;
    const auto res = newton_solve(one_edge(p), cfg);
    REQUIRE(res.steps.size() == 12);

    const hp hp_eps = eps, hp_p = p;
    auto energy = [&](const hp& v) { return pow((1 - v) * (1 - v) + hp_eps * hp_eps, hp_p / 2); };
    hp v = 0;
    for (const auto& s : res.steps) {
      const hp r = 1 - v;
      const hp q = r * r + hp_eps * hp_eps;
      const hp d1 = -hp_p * r * pow(q, hp_p / 2 - 1);
      const hp d2 = hp_p * pow(q, hp_p / 2 - 1) + hp_p * (hp_p - 2) * r * r * pow(q, hp_p / 2 - 2);
      const hp d = -d1 / d2;
      hp step = 1;
      const hp e0 = energy(v);
      while (!(energy(v + step * d) <= e0 + hp(cfg.armijo_c) * step * d1 * d)) step *= hp(cfg.shrink);
      v += step * d;
      CHECK(std::abs(s.v_free[0] - oracle::to_double(v)) <= 1e-10);
    }
  }

  TEST_CASE("line search invariants") {
    const auto inst = random_instance(60, 15, 7, 8.0);
    const ProblemSpec spec = build_lifted(inst, Integrand::power(8.0));
    NewtonConfig cfg;
    cfg.max_outer = 100;
    const auto res = newton_solve(spec, cfg);
    REQUIRE_FALSE(res.steps.empty());
    for (const auto& s : res.steps) {
      CHECK(s.directional < 0.0);
      CHECK(s.smoothed_energy <= s.previous_energy + cfg.armijo_c * s.step * s.directional +
                                     1e-15 * std::abs(s.previous_energy));
    }
  }

  TEST_CASE("gradient and Hessian agree with finite differences") {
    for (double p : {4.0, 10.0}) {
      for (std::uint64_t seed : {1u, 2u, 3u}) {
        const auto inst = random_instance(20, 10, seed, p);
        const ProblemSpec spec = build_lifted(inst, Integrand::power(p));
        REQUIRE(spec.num_free() == 10);
        const SmoothedEnergy e(spec, 1e-8);
        std::mt19937_64 rng(seed + 40);
        std::normal_distribution<double> g(0.0, 0.3);
        Vector v(10), d(10);
        for (auto& x : v) x = g(rng);
        for (auto& x : d) x = g(rng);

        const Vector grad = e.gradient(v);
        Vector fd(10);
        for (Index i = 0; i < 10; ++i) {
          const double h = 1e-6 * std::max(1.0, std::abs(v[i]));
          Vector vp = v, vm = v;
          vp[i] += h;
          vm[i] -= h;
          fd[i] = (e.value(vp) - e.value(vm)) / (2 * h);
        }
        CHECK((grad - fd).norm() <= 1e-5 * grad.norm());

        const double h = 1e-6;
        const Vector hd_fd = (e.gradient(v + h * d) - e.gradient(v - h * d)) / (2 * h);
        const Vector hd = e.hessian_apply(v, d);
        CHECK((hd - hd_fd).norm() <= 1e-4 * hd.norm());
      }
    }
  }

  TEST_CASE("moderate exponent regression converges" * doctest::timeout(300)) {
    const auto inst = random_instance(500, 450, 1, 10.0);
    const ProblemSpec spec = build_lifted(inst, Integrand::power(10.0));
    const auto res = newton_solve(spec);
    CHECK(res.converged());
    MESSAGE("p = 10: Newton converged in " << res.iterations << " iterations");
  }

  TEST_CASE("configuration checks") {
    const ProblemSpec spec = one_edge(4.0);
    NewtonConfig cfg;
    cfg.armijo_c = 1.0;
    CHECK(support::thrown_kind([&] { newton_solve(spec, cfg); }) == ErrorKind::config);
    cfg = {};
    cfg.shrink = 0.0;
    CHECK(support::thrown_kind([&] { newton_solve(spec, cfg); }) == ErrorKind::config);
    CHECK(support::thrown_kind([&] { SmoothedEnergy(spec, 0.0); }) == ErrorKind::config);
  }

  TEST_CASE("record uses the unsmoothed energy") {
    NewtonConfig cfg;
    cfg.max_outer = 3;
    const ProblemSpec spec = one_edge(4.0);
    const auto res = newton_solve(spec, cfg);
    CHECK(res.record.series == "Newton");
    REQUIRE(res.record.entries.size() == res.steps.size() + 1);
    for (std::size_t i = 0; i < res.steps.size(); ++i) {
      const double r = 1.0 - res.steps[i].v_free[0];
      CHECK(res.record.entries[i + 1].primal_energy == doctest::Approx(std::pow(r, 4) / 4).epsilon(1e-13));
    }
  }
}
