#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "plap/dirls.hpp"

namespace plap {

/// Damped Newton on the smoothed energy
///   E(v) = sum_a w_a ((B(v+g))_a^2 + eps^2)^(p/2) - f.v
/// over the free coordinates, with Armijo backtracking.
struct NewtonConfig {
  double eps = 1e-8;
  double armijo_c = 1e-4;
  double shrink = 0.5;
  Index max_outer = 500;
  Index max_backtracks = 60;
  /// Absolute gradient tolerance; unset means 1e-8 * problem_scale(spec).
  std::optional<double> grad_tol;
  /// When positive, convergence additionally requires the Newton decrement
  /// -<grad E, d> / 2 to fall below rel_decrement_tol * |E|.
  double rel_decrement_tol = 0.0;
  InnerConfig inner{};
  std::function<void(const struct NewtonIterate&)> on_iterate;
};

struct NewtonIterate {
  Index n = 0;
  Vector v_free;
  double smoothed_energy = 0.0;    // E(v)
  double primal_energy = 0.0;      // J(v + g) with the unsmoothed power integrand
  double grad_norm = 0.0;
  double decrement = 0.0;          // -<grad E, d> / 2 at the step that produced v (0 for n = 0)
  double step = 0.0;               // accepted step length
  double directional = 0.0;        // <grad E, d> before the step
  double previous_energy = 0.0;    // E before the step
  Index backtracks = 0;
  double levenberg_shift = 0.0;
};

struct NewtonResult {
  Vector u_g;
  ConvergenceRecord record;
  std::vector<NewtonIterate> steps;  // accepted steps, n >= 1
  SolveStatus status = SolveStatus::max_iterations;
  Index iterations = 0;
  std::string message;

  bool converged() const noexcept { return status == SolveStatus::converged; }
};

/// Smoothed energy and its derivatives over the free coordinates.
class SmoothedEnergy {
 public:
  SmoothedEnergy(const ProblemSpec& spec, double eps);

  double value(const Vector& v_free) const;
  Vector gradient(const Vector& v_free) const;
  /// Hessian weights in logarithms: B_f^T diag(exp(h)) B_f is the Hessian.
  Vector log_hessian_weights(const Vector& v_free) const;
  Vector hessian_apply(const Vector& v_free, const Vector& d) const;

  double p() const noexcept { return p_; }

 private:
  Vector residual(const Vector& v_free) const;

  const ProblemSpec& spec_;
  double eps_;
  double p_;
};

NewtonResult newton_solve(const ProblemSpec& spec, const NewtonConfig& cfg = {});

}  // namespace plap
