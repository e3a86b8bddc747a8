#pragma once

#include <optional>
#include <string>
#include <vector>

#include "plap/nfunction.hpp"
#include "plap/sparse.hpp"

namespace plap {

/// Constrained minimization of  J(v) = sum_a w_a phi(|(Bv)_a|) - f.v  over v + g
/// with v in V_0, where V_0 is spanned by the free (non-fixed) coordinates.
///
/// Fixed coordinates carry their prescribed values in g; free coordinates of g
/// are zero.
class ProblemSpec {
 public:
  ProblemSpec(SparseMatrix b, Vector weights, Vector f, Vector g, std::vector<bool> fixed,
              Integrand integrand);

  const SparseMatrix& b() const noexcept { return b_; }
  const Vector& weights() const noexcept { return weights_; }
  const Vector& f() const noexcept { return f_; }
  const Vector& g() const noexcept { return g_; }
  const std::vector<bool>& fixed() const noexcept { return fixed_; }
  const Integrand& integrand() const noexcept { return integrand_; }

  Index num_terms() const noexcept { return b_.rows(); }  // M
  Index num_coords() const noexcept { return b_.cols(); }  // N
  Index num_free() const noexcept { return static_cast<Index>(free_cols_.size()); }
  const std::vector<Index>& free_cols() const noexcept { return free_cols_; }

  /// Same operator and data with another integrand.
  ProblemSpec with_integrand(Integrand integrand) const;

  /// Scatter free-coordinate values into a full-length vector with zeros on fixed coordinates.
  Vector expand_free(const Vector& free_values) const;
  /// Gather the free coordinates of a full-length vector.
  Vector restrict_free(const Vector& full) const;

 private:
  SparseMatrix b_;
  Vector weights_;
  Vector f_;
  Vector g_;
  std::vector<bool> fixed_;
  Integrand integrand_;
  std::vector<Index> free_cols_;
};

/// Throws plap::Error(config) unless ker(B) restricted to V_0 is trivial.
/// Incidence operators (rows with one +1 and one -1) are checked structurally:
/// every connected component must contain a fixed vertex. Other operators go
/// through the randomized CG probe.
void check_well_posed(const ProblemSpec& spec);

/// True if every row of B holds exactly a +1 and a -1.
bool is_incidence_operator(const SparseMatrix& b);

/// Energy value with a flag raised when a term saturated to +-inf.
struct Energy {
  double value = 0.0;
  bool saturated = false;

  operator double() const noexcept { return value; }  // NOLINT(google-explicit-constructor)
};

/// J(v), v of length N.
Energy primal_energy(const ProblemSpec& spec, const Vector& v);

/// J*(tau) = sum_a w_a phi*(|tau_a| / w_a) - tau^T B g.
Energy dual_energy(const ProblemSpec& spec, const Vector& tau);

/// J*(tau, chi): quadratic majorant of J* around chi; chi_a = 0 uses the right-limit weight.
Energy relaxed_dual_energy(const ProblemSpec& spec, const Vector& tau, const Vector& chi);

/// || (B^T tau - f) restricted to the free coordinates ||_2.
double dual_feasibility_residual(const ProblemSpec& spec, const Vector& tau);

/// dual_feasibility_residual divided by || |B|^T |tau| ||_free + || f_free || (0 when both vanish).
double relative_dual_feasibility_residual(const ProblemSpec& spec, const Vector& tau);

struct DualityGap {
  double primal = 0.0;  // J(v + g)
  double dual = 0.0;    // J*(tau)
  double offset = 0.0;  // f.g
  double gap = 0.0;     // primal + dual + offset
  bool saturated = false;
};

/// Guaranteed error certificate  J(v+g) + J*(tau) + f.g  for v in V_0.
/// Throws plap::Error(solver) when tau violates dual feasibility by more than
/// rel_feasibility_tol (relative residual), since the bound is then invalid.
DualityGap duality_gap(const ProblemSpec& spec, const Vector& v, const Vector& tau,
                       double rel_feasibility_tol = 1e-6);

/// sum_a w_a |V_phi*(tau_a / w_a) - V_phi*(sigma_a / w_a)|^2.
double natural_dual_distance(const ProblemSpec& spec, const Vector& tau, const Vector& sigma);

/// sum_a (A_phi*(tau_a / w_a) - A_phi*(sigma_a / w_a)) (tau_a - sigma_a); bounds
/// J*(tau) - J*(sigma) from above when sigma minimizes J* and tau is feasible.
double dual_monotonicity_form(const ProblemSpec& spec, const Vector& tau, const Vector& sigma);

/// Upper bound for J_d(u_g) - J_d(u_{d,g}) from the unregularized minimizer pair:
/// sum w e*_d(|sigma| / w) - sum w e_d(|B u_g|).
double reg_gap_bound(const ProblemSpec& spec_unreg, const ProblemSpec& spec_reg,
                     const Vector& sigma_unreg, const Vector& u_g_unreg);

/// Residual of the first-order condition: (B^T (w A_phi(B u_g)) - f) on free coordinates.
Vector variational_residual(const ProblemSpec& spec, const Vector& u_g);

/// sigma_a = w_a A_phi((B u_g)_a).
Vector dual_from_primal(const ProblemSpec& spec, const Vector& u_g);

/// Tolerance scale  1 + |J(g)| + ||f|| ||g||.
double problem_scale(const ProblemSpec& spec);

}  // namespace plap
