#pragma once

#include <cstdint>

#include "plap/problem.hpp"

namespace plap {

/// Unconstrained problem  min_u || A u - b ||_p.
struct RegressionInstance {
  SparseMatrix a;
  Vector b;
  double p = 2.0;
};

/// Lifted form: B = (A  -I) on N + M coordinates, the last M fixed to b,
/// unit weights and f = 0. Throws config error when A has dependent columns.
ProblemSpec build_lifted(const RegressionInstance& inst, const Integrand& integrand);

/// Same, with the integrand taken from inst.p and the relaxation interval.
ProblemSpec build_lifted(const RegressionInstance& inst, double delta_lower, double delta_upper);

/// First N coordinates of a lifted vector.
Vector regression_coefficients(const RegressionInstance& inst, const Vector& u_g);

/// Dense A and b with i.i.d. entries uniform on the open interval (0, 1).
RegressionInstance random_instance(Index m, Index n, std::uint64_t seed, double p = 2.0);

/// || r ||_p evaluated with the largest magnitude factored out.
double lp_norm(const Vector& r, double p);

/// || A u - b ||_p.
double lp_residual(const RegressionInstance& inst, const Vector& u_tilde);

}  // namespace plap
