#pragma once

#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "plap/problem.hpp"
#include "plap/weighted_solve.hpp"

namespace plap {

enum class DirlsInit {
  laplacian,   // first solve with a = w (the p = 2 problem)
  zero_sigma,  // sigma^0 = 0, i.e. right-limit weights everywhere
  given,       // DirlsConfig::sigma0
};

std::string_view to_string(DirlsInit init);
DirlsInit dirls_init_from_string(std::string_view name);

enum class SolveStatus { converged, max_iterations, stagnated, inner_failure, line_search_failed };

std::string_view to_string(SolveStatus s);

struct IterateState {
  Index n = 0;
  Vector sigma;   // length M
  Vector u_free;  // length n_free
  Vector a;       // LS weights used to produce this iterate (length M)
  Vector log_a;   // log of a; exact even where a under- or overflows
  double primal_energy = 0.0;  // J(u + g)
  double dual_energy = 0.0;    // J*(sigma)
  double gap = 0.0;
  double feasibility = 0.0;    // dual_feasibility_residual(sigma)
  double sigma_step = std::numeric_limits<double>::infinity();  // relative change of sigma
  double sigma_step_max = std::numeric_limits<double>::infinity();  // largest componentwise relative change
  InnerStats inner{};
};

struct DirlsConfig {
  /// Absolute gap tolerance; unset means 1e-8 * problem_scale(spec).
  std::optional<double> gap_tol;
  /// When positive, convergence additionally requires gap <= rel_gap_tol * |J(u + g)|.
  double rel_gap_tol = 0.0;
  /// When positive, convergence additionally requires the dual iterate to have
  /// settled: ||sigma^n - sigma^(n-1)|| <= sigma_step_tol * ||sigma^n||.
  double sigma_step_tol = 0.0;
  /// Measure the sigma step per component, max_a |d sigma_a| / |sigma_a|,
  /// instead of in the Euclidean norm. Resolves components far below ||sigma||.
  bool componentwise_step = false;
  Index max_outer = 200;
  InnerConfig inner{};
  DirlsInit init = DirlsInit::laplacian;
  Vector sigma0;  // used when init == given
  /// Relative infeasibility above which the gap certificate is refused.
  double feasibility_tol = 1e-6;
  /// Optional dual energy of the exact minimizer; enables contraction ratios.
  std::optional<double> reference_dual_energy;
  /// Called after every outer iteration.
  std::function<void(const IterateState&)> on_iterate;
};

struct ConvergenceEntry {
  Index iter = 0;
  double primal_energy = 0.0;
  double dual_energy = 0.0;
  double gap = 0.0;
  double ratio = 0.0;  // NaN when undefined
  Index inner_iters = 0;
  double seconds = 0.0;
  double metric = std::numeric_limits<double>::quiet_NaN();  // plot series value; gap when unset
};

struct ConvergenceRecord {
  std::string series = "dIRLS";
  std::vector<ConvergenceEntry> entries;

  double worst_ratio(Index from_iter = 2) const;
};

struct DirlsResult {
  Vector u_g;     // length N, fixed coordinates equal g exactly
  Vector sigma;   // length M
  IterateState state;
  ConvergenceRecord record;
  SolveStatus status = SolveStatus::max_iterations;
  double gap_tol = 0.0;
  std::string message;

  bool converged() const noexcept { return status == SolveStatus::converged; }
};

/// a_a = |sigma_a| / (phi*)'(|sigma_a| / w_a), in logarithms. sigma_a = 0 uses
/// the right limit w_a * phi'(delta_-) / delta_-.
/// Throws config error when the limit degenerates (unregularized, p > 2, sigma_a = 0).
Vector ls_log_weights(const ProblemSpec& spec, const Vector& sigma);
Vector ls_weights(const ProblemSpec& spec, const Vector& sigma);

/// One outer iteration driven by a reusable inner solver.
class DirlsStepper {
 public:
  DirlsStepper(const ProblemSpec& spec, const DirlsConfig& cfg);

  /// Weighted solve with the given log weights followed by the dual update.
  IterateState step_with_log_weights(const Vector& log_a, Index n);
  /// One step from sigma^n.
  IterateState step(const IterateState& state);

  const ProblemSpec& spec() const noexcept { return spec_; }

 private:
  const ProblemSpec& spec_;
  DirlsConfig cfg_;
  WeightedNormalSolver solver_;
  Vector bg_;
};

/// Convenience: one step from sigma^n on a freshly constructed solver.
IterateState dirls_step(const ProblemSpec& spec, const IterateState& state, const DirlsConfig& cfg);

/// Outer loop: iterate until the certificate meets the tolerance, max_outer is
/// reached, or the iteration stalls. Never throws for non-convergence; the best
/// (lowest gap) iterate is returned with the status.
DirlsResult dirls_solve(const ProblemSpec& spec, const DirlsConfig& cfg = {});

/// Writes <stem>.csv (iter,J,Jstar,gap,ratio,inner_iters,seconds) and the
/// plot table <stem>.dat (iter, <series>, J, Jstar, gap, inner_iters). The .dat
/// omits wall time so it is reproducible byte for byte; with_seconds = false
/// drops it from the CSV as well.
void write_record(const ConvergenceRecord& record, const std::filesystem::path& stem, bool with_seconds = true);

}  // namespace plap
