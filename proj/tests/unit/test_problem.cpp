#include <doctest.h>

#include <cmath>
#include <random>

#include "oracle.hpp"
#include "plap/problem.hpp"
#include "support.hpp"

using namespace plap;

namespace {

// Single edge 0 -> 1, vertex 0 fixed.
ProblemSpec one_edge(double p, double w, double f1, double g0, std::optional<RelaxationInterval> delta = {}) {
  auto b = SparseMatrix::from_triplets(1, 2, {{0, 0, 1.0}, {0, 1, -1.0}});
  Vector weights(1);
  weights << w;
  Vector f(2), g(2);
  f << 0.0, f1;
  g << g0, 0.0;
  Integrand integrand = delta ? Integrand(RegularizedNFunction(PowerNFunction(p), *delta))
                              : Integrand(PowerNFunction(p));
  return ProblemSpec(b, weights, f, g, {true, false}, integrand);
}

// Triangle with edges (0,1), (1,2), (0,2); vertex 0 fixed at 0 and unit loads on 1 and 2.
// By symmetry u = (0, 1, 1) and sigma = (-1, 0, -1) for every p.
ProblemSpec triangle(double p) {
  auto b = SparseMatrix::from_triplets(
      3, 3, {{0, 0, 1.0}, {0, 1, -1.0}, {1, 1, 1.0}, {1, 2, -1.0}, {2, 0, 1.0}, {2, 2, -1.0}});
  Vector f(3);
  f << 0.0, 1.0, 1.0;
  return ProblemSpec(b, Vector::Ones(3), f, Vector::Zero(3), {true, false, false}, Integrand::power(p));
}

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Index>(xs.size()));
  Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

}  // namespace

TEST_SUITE("problem") {
  TEST_CASE("one edge, quadratic energy") {
    const auto spec = one_edge(2.0, 2.0, 4.0, 1.0);
    // J(u1) = (1 - u1)^2 - 4 u1 is minimal at u1 = 3
    const Vector v = vec({0.0, 3.0});
    const Vector u_g = v + spec.g();
    const Vector sigma = dual_from_primal(spec, u_g);
    CHECK(sigma[0] == doctest::Approx(-4.0).epsilon(1e-15));
    CHECK(primal_energy(spec, u_g).value == doctest::Approx(-8.0).epsilon(1e-15));
    CHECK(dual_energy(spec, sigma).value == doctest::Approx(8.0).epsilon(1e-15));
    const auto gap = duality_gap(spec, v, sigma);
    CHECK(std::abs(gap.gap) <= 1e-14);
    CHECK(variational_residual(spec, u_g).norm() <= 1e-14);

    // at v = 0: J(g) = 1, gap = 1 + 8
    const auto gap0 = duality_gap(spec, Vector::Zero(2), sigma);
    CHECK(gap0.gap == doctest::Approx(9.0).epsilon(1e-15));
    CHECK(problem_scale(spec) == doctest::Approx(1.0 + 1.0 + 4.0).epsilon(1e-15));
  }

  TEST_CASE("feasibility residuals") {
    const auto spec = one_edge(2.0, 2.0, 4.0, 1.0);
    CHECK(dual_feasibility_residual(spec, vec({-4.0})) == 0.0);
    // sigma = -4 + e: B^T sigma on vertex 1 is 4 - e
    CHECK(dual_feasibility_residual(spec, vec({-3.0})) == doctest::Approx(1.0));
    CHECK(relative_dual_feasibility_residual(spec, vec({-3.0})) == doctest::Approx(1.0 / (3.0 + 4.0)));
    CHECK(support::thrown_kind([&] { duality_gap(spec, Vector::Zero(2), vec({-3.0})); }) ==
          ErrorKind::solver);
  }

  TEST_CASE("weak duality on random feasible pairs") {
    for (double p : {2.0, 3.0, 10.0}) {
      const auto spec = triangle(p);
      const Vector sigma = vec({-1.0, 0.0, -1.0});
      const Vector z = vec({1.0, 1.0, -1.0});
      CHECK(dual_feasibility_residual(spec, sigma) == 0.0);
      CHECK(spec.restrict_free(matvec_transpose(spec.b(), z)).norm() == 0.0);
      std::mt19937_64 rng(static_cast<std::uint64_t>(p));
      std::uniform_real_distribution<double> u(-1.5, 1.5);
      for (int i = 0; i < 50; ++i) {
        const Vector tau = sigma + u(rng) * z;
        const Vector v = vec({0.0, 1.0 + u(rng), 1.0 + u(rng)});
        CHECK(duality_gap(spec, v, tau).gap >= -1e-12);
      }
      // the exact pair closes the gap
      CHECK(std::abs(duality_gap(spec, vec({0.0, 1.0, 1.0}), sigma).gap) <= 1e-13);
    }
  }

  TEST_CASE("dual energy growth is bounded by the monotonicity form") {
    for (double p : {3.0, 6.0}) {
      const auto spec = triangle(p);
      const Vector sigma = vec({-1.0, 0.0, -1.0});
      const Vector z = vec({1.0, 1.0, -1.0});
      for (double t : {-0.9, -0.3, 0.01, 0.4, 1.2}) {
        const Vector tau = sigma + t * z;
        const double growth = dual_energy(spec, tau).value - dual_energy(spec, sigma).value;
        CHECK(growth >= 0.0);
        CHECK(growth <= dual_monotonicity_form(spec, tau, sigma) + 1e-14);
        CHECK(natural_dual_distance(spec, tau, sigma) > 0.0);
      }
      CHECK(natural_dual_distance(spec, sigma, sigma) == 0.0);
    }
  }

  TEST_CASE("relaxed dual energy majorizes the dual energy") {
    const auto spec = triangle(4.0);
    const Vector chi = vec({-1.0, 0.5, -2.0});
    for (double t : {-1.0, 0.0, 0.7}) {
      const Vector tau = vec({-1.0 + t, t, -1.0 - t});
      CHECK(relaxed_dual_energy(spec, tau, chi).value >= dual_energy(spec, tau).value - 1e-14);
    }
    CHECK(relaxed_dual_energy(spec, chi, chi).value == doctest::Approx(dual_energy(spec, chi).value));
  }

  TEST_CASE("regularized energy") {
    // p = 2 regularization changes nothing
    const auto quad = one_edge(2.0, 2.0, 4.0, 1.0);
    const auto quad_reg = quad.with_integrand(Integrand::regularized(2.0, 0.1, 10.0));
    for (double u1 : {-5.0, 0.0, 0.95, 3.0, 40.0}) {
      const Vector u_g = vec({1.0, u1});
      CHECK(primal_energy(quad_reg, u_g).value == doctest::Approx(primal_energy(quad, u_g).value));
    }
    // inside the interval the energies agree, outside the regularized one is smaller
    const auto quart = one_edge(4.0, 1.0, 8.0, 1.0);
    const auto quart_reg = quart.with_integrand(Integrand::regularized(4.0, 0.5, 1.0));
    CHECK(primal_energy(quart_reg, vec({1.0, 0.3})).value ==
          doctest::Approx(primal_energy(quart, vec({1.0, 0.3})).value));
    CHECK(primal_energy(quart_reg, vec({1.0, 3.0})).value < primal_energy(quart, vec({1.0, 3.0})).value);
    // phi_d(0) = phi(1/2) - (1/2) phi'(1/2) / 2 = 1/64 - 1/32
    CHECK(primal_energy(quart_reg, vec({1.0, 1.0})).value == doctest::Approx(1.0 / 64 - 1.0 / 32 - 8.0));
  }

  TEST_CASE("regularization gap bound") {
    // unregularized minimizer: |1 - u1|^3 = 8, u1 = 3, sigma = -8
    const auto spec = one_edge(4.0, 1.0, 8.0, 1.0);
    const auto reg = spec.with_integrand(Integrand::regularized(4.0, 0.5, 1.0));
    const Vector u_g = vec({1.0, 3.0});
    const Vector sigma = dual_from_primal(spec, u_g);
    CHECK(sigma[0] == doctest::Approx(-8.0));
    // e*_d(8) = (3/4 + 63/2) - 12 = 20.25,  e_d(2) = 4 - (1/4 + 3/2) = 2.25
    CHECK(reg_gap_bound(spec, reg, sigma, u_g) == doctest::Approx(18.0).epsilon(1e-14));

    const auto wide = spec.with_integrand(Integrand::regularized(4.0, 1e-3, 1e3));
    CHECK(reg_gap_bound(spec, wide, sigma, u_g) == 0.0);

    const auto mid = spec.with_integrand(Integrand::regularized(4.0, 0.5, 1.5));
    CHECK(reg_gap_bound(spec, mid, sigma, u_g) <= reg_gap_bound(spec, reg, sigma, u_g));

    CHECK(support::thrown_kind([&] { reg_gap_bound(spec, spec, sigma, u_g); }) == ErrorKind::config);
  }

  TEST_CASE("specification checks") {
    auto b = SparseMatrix::from_triplets(1, 2, {{0, 0, 1.0}, {0, 1, -1.0}});
    const auto id = Integrand::power(2.0);
    CHECK(support::thrown_kind([&] {
            ProblemSpec(b, vec({0.0}), Vector::Zero(2), Vector::Zero(2), {true, false}, id);
          }) == ErrorKind::config);
    CHECK(support::thrown_kind([&] {
            ProblemSpec(b, vec({1.0}), Vector::Zero(2), vec({0.0, 1.0}), {true, false}, id);
          }) == ErrorKind::config);
    CHECK(support::thrown_kind([&] {
            ProblemSpec(b, vec({1.0, 1.0}), Vector::Zero(2), Vector::Zero(2), {true, false}, id);
          }) == ErrorKind::config);
  }

  TEST_CASE("well-posedness") {
    CHECK_NOTHROW(check_well_posed(triangle(3.0)));
    CHECK(is_incidence_operator(triangle(3.0).b()));

    // two components, only the first has a fixed vertex
    auto b = SparseMatrix::from_triplets(2, 4, {{0, 0, 1.0}, {0, 1, -1.0}, {1, 2, 1.0}, {1, 3, -1.0}});
    const ProblemSpec split(b, Vector::Ones(2), Vector::Zero(4), Vector::Zero(4),
                            {true, false, false, false}, Integrand::power(2.0));
    CHECK(support::thrown_kind([&] { check_well_posed(split); }) == ErrorKind::config);

    // non-incidence operator with dependent free columns
    Eigen::MatrixXd d(3, 3);
    d << 1, 2, 0, 2, 4, 1, 3, 6, 0;
    const ProblemSpec dep(SparseMatrix::from_dense(d), Vector::Ones(3), Vector::Zero(3), Vector::Zero(3),
                          {false, false, true}, Integrand::power(2.0));
    CHECK_FALSE(is_incidence_operator(dep.b()));
    CHECK(support::thrown_kind([&] { check_well_posed(dep); }) == ErrorKind::config);
  }

  TEST_CASE("free-coordinate scatter and gather") {
    const auto spec = triangle(2.0);
    CHECK(spec.num_free() == 2);
    const Vector full = spec.expand_free(vec({5.0, 7.0}));
    CHECK(full[0] == 0.0);
    CHECK(full[1] == 5.0);
    CHECK(full[2] == 7.0);
    CHECK(spec.restrict_free(full) == vec({5.0, 7.0}));
  }

  TEST_CASE("saturation is reported") {
    const auto spec = one_edge(80.0, 1.0, 0.0, 1e6);
    const auto e = primal_energy(spec, vec({1e6, 0.0}));
    CHECK(e.saturated);
  }
}
