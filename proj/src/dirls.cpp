#include "plap/dirls.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>

#include "plap/error.hpp"

namespace plap {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
bool meets_tolerance(const IterateState& s, double gap_tol, const DirlsConfig& cfg) {
  if (!(s.gap <= gap_tol)) return false;
  if (cfg.rel_gap_tol > 0.0 && !(s.gap <= cfg.rel_gap_tol * std::abs(s.primal_energy))) return false;
  if (cfg.sigma_step_tol <= 0.0) return true;
  return (cfg.componentwise_step ? s.sigma_step_max : s.sigma_step) <= cfg.sigma_step_tol;
}

}  // namespace

std::string_view to_string(DirlsInit init) {
  switch (init) {
    case DirlsInit::laplacian: return "laplacian";
    case DirlsInit::zero_sigma: return "zero-sigma";
    case DirlsInit::given: return "given";
  }
  return "laplacian";
}

DirlsInit dirls_init_from_string(std::string_view name) {
  if (name == "laplacian") return DirlsInit::laplacian;
  if (name == "zero-sigma" || name == "zero_sigma") return DirlsInit::zero_sigma;
  if (name == "given") return DirlsInit::given;
  throw config_error("unknown init '" + std::string(name) + "' (laplacian|zero-sigma|given)");
}

std::string_view to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::converged: return "converged";
    case SolveStatus::max_iterations: return "max_iterations";
    case SolveStatus::stagnated: return "stagnated";
    case SolveStatus::inner_failure: return "inner_failure";
    case SolveStatus::line_search_failed: return "line_search_failed";
  }
  return "unknown";
}

double ConvergenceRecord::worst_ratio(Index from_iter) const {
  double worst = kNaN;
  for (const auto& e : entries) {
    if (e.iter < from_iter || std::isnan(e.ratio)) continue;
    if (std::isnan(worst) || e.ratio > worst) worst = e.ratio;
  }
  return worst;
}

Vector ls_log_weights(const ProblemSpec& spec, const Vector& sigma) {
  if (sigma.size() != spec.num_terms()) {
    throw std::invalid_argument("ls_weights: sigma must have length M");
  }
  const Integrand& nf = spec.integrand();
  Vector log_a(sigma.size());
  for (Index i = 0; i < sigma.size(); ++i) {
    const double w = spec.weights()[i];
    log_a[i] = std::log(w) - nf.log_conj_prime_ratio(std::abs(sigma[i]) / w);
    if (!std::isfinite(log_a[i])) {
      throw config_error("LS weight " + std::to_string(i) +
                         " degenerates (zero dual component with an unregularized integrand, p = " +
                         std::to_string(nf.p()) + "); use a relaxation interval");
    }
  }
  return log_a;
}

Vector ls_weights(const ProblemSpec& spec, const Vector& sigma) {
  return ls_log_weights(spec, sigma).array().exp().matrix();
}

DirlsStepper::DirlsStepper(const ProblemSpec& spec, const DirlsConfig& cfg)
    : spec_(spec), cfg_(cfg), solver_(spec.b(), spec.free_cols(), cfg.inner),
      bg_(matvec(spec.b(), spec.g())) {}

IterateState DirlsStepper::step_with_log_weights(const Vector& log_a, Index n) {
  const Index m = spec_.num_terms();
  if (log_a.size() != m) throw std::invalid_argument("dirls step: log weights must have length M");
  IterateState out;
  out.n = n;
  out.log_a = log_a;
  out.a = log_a.array().exp().matrix();

  const ScaledWeights sw = scale_log_weights(log_a);
  Vector rhs = Vector::Zero(spec_.num_free());
  const Vector f_free = spec_.restrict_free(spec_.f());
  if (f_free.size() > 0 && f_free.cwiseAbs().maxCoeff() > 0.0) {
    const double factor = std::exp(-sw.log_shift);
    if (!std::isfinite(factor)) throw solver_error("dirls step: right-hand side scaling overflow");
    rhs = factor * f_free;
  }

  try {
    out.u_free = solver_.solve_affine(sw.a, bg_, rhs, &out.inner);
  } catch (const Error& e) {
    throw Error(e.kind(), "dIRLS iteration " + std::to_string(n) + ": " + e.what());
  }

  const Vector u_g = spec_.expand_free(out.u_free) + spec_.g();
  const Vector bu = matvec(spec_.b(), u_g);
  out.sigma.resize(m);
  for (Index i = 0; i < m; ++i) {
    out.sigma[i] = bu[i] == 0.0 ? 0.0 : std::copysign(std::exp(log_a[i] + std::log(std::abs(bu[i]))), bu[i]);
  }

  out.feasibility = dual_feasibility_residual(spec_, out.sigma);
  const DualityGap gap =
      duality_gap(spec_, spec_.expand_free(out.u_free), out.sigma, cfg_.feasibility_tol);
  out.primal_energy = gap.primal;
  out.dual_energy = gap.dual;
  out.gap = gap.gap;
  return out;
}

IterateState DirlsStepper::step(const IterateState& state) {
  IterateState next = step_with_log_weights(ls_log_weights(spec_, state.sigma), state.n + 1);
  const double norm = next.sigma.norm();
  const double diff = (next.sigma - state.sigma).norm();
  next.sigma_step = norm > 0.0 ? diff / norm : (diff == 0.0 ? 0.0 : std::numeric_limits<double>::infinity());
  next.sigma_step_max = 0.0;
  for (Index i = 0; i < next.sigma.size(); ++i) {
    const double d = std::abs(next.sigma[i] - state.sigma[i]);
    if (d == 0.0) continue;
    const double ref = std::max(std::abs(next.sigma[i]), std::abs(state.sigma[i]));
    next.sigma_step_max = std::max(next.sigma_step_max, d / ref);
  }
  return next;
}

IterateState dirls_step(const ProblemSpec& spec, const IterateState& state, const DirlsConfig& cfg) {
  DirlsStepper stepper(spec, cfg);
  return stepper.step(state);
}

DirlsResult dirls_solve(const ProblemSpec& spec, const DirlsConfig& cfg) {
  if (cfg.gap_tol && !(*cfg.gap_tol > 0.0)) throw config_error("gap_tol must be positive");
  if (cfg.max_outer < 1) throw config_error("max_outer must be >= 1");
  if (cfg.rel_gap_tol < 0.0 || cfg.sigma_step_tol < 0.0) throw config_error("relative tolerances must be >= 0");

  DirlsResult result;
  result.gap_tol = cfg.gap_tol.value_or(1e-8 * problem_scale(spec));

  Vector log_a;
  switch (cfg.init) {
    case DirlsInit::laplacian: log_a = spec.weights().array().log().matrix(); break;
    case DirlsInit::zero_sigma: log_a = ls_log_weights(spec, Vector::Zero(spec.num_terms())); break;
    case DirlsInit::given:
      if (cfg.sigma0.size() != spec.num_terms()) {
        throw config_error("init=given needs sigma0 of length M = " + std::to_string(spec.num_terms()));
      }
      log_a = ls_log_weights(spec, cfg.sigma0);
      break;
  }

  DirlsStepper stepper(spec, cfg);
  const auto start = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  };

  auto record = [&](const IterateState& s, const IterateState* prev) {
    ConvergenceEntry e;
    e.iter = s.n;
    e.primal_energy = s.primal_energy;
    e.dual_energy = s.dual_energy;
    e.gap = s.gap;
    e.ratio = kNaN;
    if (prev != nullptr) {
      if (cfg.reference_dual_energy) {
        const double num = s.dual_energy - *cfg.reference_dual_energy;
        const double den = prev->dual_energy - *cfg.reference_dual_energy;
        if (den != 0.0) e.ratio = num / den;
      } else if (prev->gap != 0.0) {
        e.ratio = s.gap / prev->gap;
      }
    }
    e.inner_iters = s.inner.iterations;
    e.seconds = elapsed();
    result.record.entries.push_back(e);
    if (cfg.on_iterate) cfg.on_iterate(s);
  };

  IterateState state;
  if (spec.num_free() == 0) {
    // Nothing to solve: u = g, and sigma = w A(Bg) is the exact dual.
    state.n = 1;
    state.u_free = Vector::Zero(0);
    state.sigma = dual_from_primal(spec, spec.g());
    state.a = log_a.array().exp().matrix();
    state.log_a = log_a;
    const DualityGap gap = duality_gap(spec, Vector::Zero(spec.num_coords()), state.sigma, cfg.feasibility_tol);
    state.primal_energy = gap.primal;
    state.dual_energy = gap.dual;
    state.gap = gap.gap;
    state.sigma_step = 0.0;
    state.sigma_step_max = 0.0;
    record(state, nullptr);
    result.status = SolveStatus::converged;
    result.state = state;
    result.sigma = state.sigma;
    result.u_g = spec.g();
    return result;
  }
  try {
    state = stepper.step_with_log_weights(log_a, 1);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::solver) throw;
    result.status = SolveStatus::inner_failure;
    result.message = e.what();
    result.u_g = spec.g();
    result.sigma = Vector::Zero(spec.num_terms());
    return result;
  }
  record(state, nullptr);
  IterateState best = state;

  for (;;) {
    if (meets_tolerance(state, result.gap_tol, cfg)) {
      result.status = SolveStatus::converged;
      best = state;
      break;
    }
    if (state.n >= cfg.max_outer) {
      result.status = SolveStatus::max_iterations;
      break;
    }
    IterateState next;
    try {
      next = stepper.step(state);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::solver) throw;
      result.status = SolveStatus::inner_failure;
      result.message = e.what();
      break;
    }
    const bool same = next.sigma == state.sigma;
    record(next, &state);
    state = std::move(next);
    if (state.gap < best.gap) best = state;
    if (same && !meets_tolerance(state, result.gap_tol, cfg)) {
      result.status = SolveStatus::stagnated;
      result.message = "dual iterate unchanged while the gap is above tolerance";
      break;
    }
  }

  result.state = best;
  result.sigma = best.sigma;
  result.u_g = spec.expand_free(best.u_free) + spec.g();
  // Fixed coordinates carry the prescribed values bit for bit.
  for (Index i = 0; i < spec.num_coords(); ++i) {
    if (spec.fixed()[i]) result.u_g[i] = spec.g()[i];
  }
  return result;
}

void write_record(const ConvergenceRecord& record, const std::filesystem::path& stem, bool with_seconds) {
  const std::filesystem::path csv_path = stem.string() + ".csv";
  const std::filesystem::path dat_path = stem.string() + ".dat";
  if (stem.has_parent_path()) std::filesystem::create_directories(stem.parent_path());
  std::ofstream csv(csv_path);
  std::ofstream dat(dat_path);
  if (!csv || !dat) throw data_error("cannot write record files at " + stem.string());
  csv.precision(17);
  dat.precision(17);
  csv << "iter,J,Jstar,gap,ratio,inner_iters" << (with_seconds ? ",seconds\n" : "\n");
  dat << "iter " << record.series << " J Jstar gap inner_iters\n";
  for (const auto& e : record.entries) {
    csv << e.iter << ',' << e.primal_energy << ',' << e.dual_energy << ',' << e.gap << ','
        << e.ratio << ',' << e.inner_iters;
    if (with_seconds) csv << ',' << e.seconds;
    csv << '\n';
    dat << e.iter << ' ' << (std::isnan(e.metric) ? e.gap : e.metric) << ' ' << e.primal_energy
        << ' ' << e.dual_energy << ' ' << e.gap << ' ' << e.inner_iters << '\n';
  }
}

}  // namespace plap
