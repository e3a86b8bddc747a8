#include "plap/newton.hpp"

#include <chrono>
#include <cmath>
#include <limits>

#include "plap/error.hpp"
#include "plap/numerics.hpp"

namespace plap {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

}  // namespace

SmoothedEnergy::SmoothedEnergy(const ProblemSpec& spec, double eps)
    : spec_(spec), eps_(eps), p_(spec.integrand().p()) {
  if (!(eps > 0.0)) throw config_error("Newton eps must be positive");
}

Vector SmoothedEnergy::residual(const Vector& v_free) const {
  return matvec(spec_.b(), Vector(spec_.expand_free(v_free) + spec_.g()));
}

double SmoothedEnergy::value(const Vector& v_free) const {
  const Vector r = residual(v_free);
  CompensatedSum sum;
  for (Index a = 0; a < r.size(); ++a) {
    const double s = r[a] * r[a] + eps_ * eps_;
    sum += spec_.weights()[a] * std::exp(0.5 * p_ * std::log(s));
  }
  const Vector f_free = spec_.restrict_free(spec_.f());
  for (Index i = 0; i < v_free.size(); ++i) sum += -f_free[i] * v_free[i];
  return sum.value();
}

Vector SmoothedEnergy::gradient(const Vector& v_free) const {
  const Vector r = residual(v_free);
  Vector coef(r.size());
  for (Index a = 0; a < r.size(); ++a) {
    const double s = r[a] * r[a] + eps_ * eps_;
    coef[a] = r[a] == 0.0 ? 0.0
                          : std::copysign(std::exp(std::log(spec_.weights()[a] * p_) +
                                                   (0.5 * p_ - 1.0) * std::log(s) +
                                                   std::log(std::abs(r[a]))),
                                          r[a]);
  }
  return spec_.restrict_free(matvec_transpose(spec_.b(), coef)) - spec_.restrict_free(spec_.f());
}

Vector SmoothedEnergy::log_hessian_weights(const Vector& v_free) const {
  const Vector r = residual(v_free);
  Vector h(r.size());
  for (Index a = 0; a < r.size(); ++a) {
    const double s = r[a] * r[a] + eps_ * eps_;
    // p s^(p/2-1) + p (p-2) s^(p/2-2) r^2 = p s^(p/2-1) (1 + (p-2) r^2 / s)
    h[a] = std::log(spec_.weights()[a] * p_) + (0.5 * p_ - 1.0) * std::log(s) +
           std::log1p((p_ - 2.0) * r[a] * r[a] / s);
  }
  return h;
}

Vector SmoothedEnergy::hessian_apply(const Vector& v_free, const Vector& d) const {
  const Vector h = log_hessian_weights(v_free);
  Vector bd = matvec(spec_.b(), spec_.expand_free(d));
  for (Index a = 0; a < bd.size(); ++a) bd[a] *= std::exp(h[a]);
  return spec_.restrict_free(matvec_transpose(spec_.b(), bd));
}

NewtonResult newton_solve(const ProblemSpec& spec, const NewtonConfig& cfg) {
  if (!(cfg.armijo_c > 0.0 && cfg.armijo_c < 1.0)) throw config_error("armijo_c must lie in (0, 1)");
  if (!(cfg.shrink > 0.0 && cfg.shrink < 1.0)) throw config_error("shrink must lie in (0, 1)");
  if (cfg.max_outer < 1 || cfg.max_backtracks < 1) throw config_error("Newton iteration limits must be >= 1");

  const SmoothedEnergy energy(spec, cfg.eps);
  const ProblemSpec original = spec.with_integrand(Integrand::power(spec.integrand().p()));
  const double grad_tol = cfg.grad_tol.value_or(1e-8 * problem_scale(spec));
  WeightedNormalSolver solver(spec.b(), spec.free_cols(), cfg.inner);

  NewtonResult result;
  result.record.series = "Newton";
  const auto start = std::chrono::steady_clock::now();

  NewtonIterate it;
  it.v_free = Vector::Zero(spec.num_free());
  it.smoothed_energy = energy.value(it.v_free);
  it.primal_energy = primal_energy(original, spec.expand_free(it.v_free) + spec.g());
  Vector grad = energy.gradient(it.v_free);
  it.grad_norm = grad.norm();

  auto record = [&](const NewtonIterate& s) {
    ConvergenceEntry e;
    e.iter = s.n;
    e.primal_energy = s.primal_energy;
    e.dual_energy = kNaN;
    e.gap = kNaN;
    e.ratio = kNaN;
    e.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.record.entries.push_back(e);
    if (cfg.on_iterate) cfg.on_iterate(s);
  };
  record(it);

  double last_decrement = std::numeric_limits<double>::infinity();
  auto converged = [&] {
    if (!(it.grad_norm <= grad_tol)) return false;
    return cfg.rel_decrement_tol <= 0.0 ||
           last_decrement <= cfg.rel_decrement_tol * std::abs(it.smoothed_energy);
  };

  result.status = SolveStatus::max_iterations;
  for (Index n = 1; n <= cfg.max_outer; ++n) {
    if (spec.num_free() == 0) {
      result.status = SolveStatus::converged;
      break;
    }
    // Newton direction; Levenberg shift on failure.
    const ScaledWeights sw = scale_log_weights(energy.log_hessian_weights(it.v_free));
    const double factor = std::exp(-sw.log_shift);
    Vector d;
    double lambda = 0.0;
    try {
      d = solver.solve(sw.a, Vector(-grad * factor));
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::solver) throw;
      double trace = 0.0;
      const SparseMatrix& bf = solver.restricted();
      for (Index r = 0; r < bf.rows(); ++r) {
        for (double v : bf.row_values(r)) trace += sw.a[r] * v * v;
      }
      lambda = 1e-12 * trace / static_cast<double>(bf.cols());
      try {
        d = solver.solve(sw.a, Vector(-grad * factor), nullptr, lambda);
      } catch (const Error& e2) {
        if (e2.kind() != ErrorKind::solver) throw;
        result.status = SolveStatus::inner_failure;
        result.message = "Newton iteration " + std::to_string(n) + ": " + e2.what();
        break;
      }
      lambda *= std::exp(sw.log_shift);
    }
    const double directional = grad.dot(d);
    if (!(directional < 0.0)) {
      if (converged()) {
        result.status = SolveStatus::converged;
      } else {
        result.status = SolveStatus::line_search_failed;
        result.message = "Newton direction is not a descent direction at iteration " + std::to_string(n);
      }
      break;
    }
    last_decrement = -0.5 * directional;
    if (converged()) {
      result.status = SolveStatus::converged;
      break;
    }

    double step = 1.0;
    Index backtracks = 0;
    Vector trial = it.v_free + d;
    double trial_energy = energy.value(trial);
    while (!(trial_energy <= it.smoothed_energy + cfg.armijo_c * step * directional)) {
      if (++backtracks > cfg.max_backtracks) break;
      step *= cfg.shrink;
      trial = it.v_free + step * d;
      trial_energy = energy.value(trial);
    }
    if (backtracks > cfg.max_backtracks) {
      result.status = SolveStatus::line_search_failed;
      result.message = "backtracking exhausted at iteration " + std::to_string(n);
      break;
    }

    NewtonIterate next;
    next.n = n;
    next.v_free = std::move(trial);
    next.smoothed_energy = trial_energy;
    next.primal_energy = primal_energy(original, spec.expand_free(next.v_free) + spec.g());
    next.decrement = last_decrement;
    next.step = step;
    next.directional = directional;
    next.previous_energy = it.smoothed_energy;
    next.backtracks = backtracks;
    next.levenberg_shift = lambda;
    grad = energy.gradient(next.v_free);
    next.grad_norm = grad.norm();
    it = std::move(next);
    result.steps.push_back(it);
    record(it);
    result.iterations = n;
  }

  result.u_g = spec.expand_free(it.v_free) + spec.g();
  for (Index i = 0; i < spec.num_coords(); ++i) {
    if (spec.fixed()[i]) result.u_g[i] = spec.g()[i];
  }
  return result;
}

}  // namespace plap
