#include "plap/problem.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "plap/error.hpp"
#include "plap/numerics.hpp"
#include "plap/weighted_solve.hpp"

namespace plap {
namespace {

void require_length(const Vector& v, Index n, const char* what) {
  if (v.size() != n) {
    throw std::invalid_argument(std::string(what) + ": expected length " + std::to_string(n) +
                                ", got " + std::to_string(v.size()));
  }
}

Energy finish(const CompensatedSum& sum) {
  const double value = sum.value();
  return {value, !std::isfinite(value)};
}

struct UnionFind {
  explicit UnionFind(Index n) : parent(static_cast<std::size_t>(n)) {
    std::iota(parent.begin(), parent.end(), Index{0});
  }
  Index find(Index x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  }
  void unite(Index a, Index b) { parent[find(a)] = find(b); }
  std::vector<Index> parent;
};

}  // namespace

ProblemSpec::ProblemSpec(SparseMatrix b, Vector weights, Vector f, Vector g,
                         std::vector<bool> fixed, Integrand integrand)
    : b_(std::move(b)),
      weights_(std::move(weights)),
      f_(std::move(f)),
      g_(std::move(g)),
      fixed_(std::move(fixed)),
      integrand_(std::move(integrand)) {
  const Index m = b_.rows();
  const Index n = b_.cols();
  if (weights_.size() != m) throw config_error("ProblemSpec: weights must have one entry per row of B");
  if (f_.size() != n || g_.size() != n || static_cast<Index>(fixed_.size()) != n) {
    throw config_error("ProblemSpec: f, g and the fixed mask must have one entry per column of B");
  }
  for (Index a = 0; a < m; ++a) {
    if (!(weights_[a] > 0.0) || !std::isfinite(weights_[a])) {
      throw config_error("ProblemSpec: weight " + std::to_string(a) + " must be positive and finite");
    }
  }
  if (!f_.allFinite() || !g_.allFinite()) throw config_error("ProblemSpec: f and g must be finite");
  for (Index i = 0; i < n; ++i) {
    if (fixed_[i]) continue;
    if (g_[i] != 0.0) {
      throw config_error("ProblemSpec: g must vanish on free coordinate " + std::to_string(i));
    }
    free_cols_.push_back(i);
  }
}

ProblemSpec ProblemSpec::with_integrand(Integrand integrand) const {
  return {b_, weights_, f_, g_, fixed_, std::move(integrand)};
}

Vector ProblemSpec::expand_free(const Vector& free_values) const {
  require_length(free_values, num_free(), "expand_free");
  Vector full = Vector::Zero(num_coords());
  for (Index k = 0; k < num_free(); ++k) full[free_cols_[k]] = free_values[k];
  return full;
}

Vector ProblemSpec::restrict_free(const Vector& full) const {
  require_length(full, num_coords(), "restrict_free");
  Vector out(num_free());
  for (Index k = 0; k < num_free(); ++k) out[k] = full[free_cols_[k]];
  return out;
}

bool is_incidence_operator(const SparseMatrix& b) {
  for (Index r = 0; r < b.rows(); ++r) {
    const auto vals = b.row_values(r);
    if (vals.size() != 2) return false;
    if (!((vals[0] == 1.0 && vals[1] == -1.0) || (vals[0] == -1.0 && vals[1] == 1.0))) return false;
  }
  return true;
}

void check_well_posed(const ProblemSpec& spec) {
  if (spec.num_free() == 0) return;
  const SparseMatrix& b = spec.b();
  if (is_incidence_operator(b)) {
    UnionFind uf(b.cols());
    for (Index r = 0; r < b.rows(); ++r) {
      const auto cols = b.row_cols(r);
      uf.unite(cols[0], cols[1]);
    }
    std::vector<bool> anchored(static_cast<std::size_t>(b.cols()), false);
    for (Index i = 0; i < b.cols(); ++i) {
      if (spec.fixed()[i]) anchored[uf.find(i)] = true;
    }
    for (Index i = 0; i < b.cols(); ++i) {
      if (!anchored[uf.find(i)]) {
        throw config_error("connected component containing vertex " + std::to_string(i) +
                           " has no fixed (labeled) vertex, so the minimizer is not unique");
      }
    }
    return;
  }
  if (!probe_injective(b, spec.free_cols())) {
    throw config_error("B restricted to the free coordinates appears rank deficient "
                       "(ker(B) intersected with V_0 must be {0})");
  }
}

Energy primal_energy(const ProblemSpec& spec, const Vector& v) {
  require_length(v, spec.num_coords(), "primal_energy");
  const Vector bv = matvec(spec.b(), v);
  const Integrand& nf = spec.integrand();
  CompensatedSum sum;
  for (Index a = 0; a < bv.size(); ++a) sum += spec.weights()[a] * nf.phi(std::abs(bv[a]));
  for (Index i = 0; i < v.size(); ++i) sum += -spec.f()[i] * v[i];
  return finish(sum);
}

Energy dual_energy(const ProblemSpec& spec, const Vector& tau) {
  require_length(tau, spec.num_terms(), "dual_energy");
  const Vector bg = matvec(spec.b(), spec.g());
  const Integrand& nf = spec.integrand();
  CompensatedSum sum;
  for (Index a = 0; a < tau.size(); ++a) {
    const double w = spec.weights()[a];
    sum += w * nf.conj(std::abs(tau[a]) / w);
    sum += -tau[a] * bg[a];
  }
  return finish(sum);
}

Energy relaxed_dual_energy(const ProblemSpec& spec, const Vector& tau, const Vector& chi) {
  require_length(tau, spec.num_terms(), "relaxed_dual_energy");
  require_length(chi, spec.num_terms(), "relaxed_dual_energy");
  const Vector bg = matvec(spec.b(), spec.g());
  const Integrand& nf = spec.integrand();
  CompensatedSum sum;
  for (Index a = 0; a < tau.size(); ++a) {
    const double w = spec.weights()[a];
    const double s = std::abs(chi[a]) / w;
    // (phi*)'(s) / |chi| = ratio(s) / w
    const double weight = std::exp(nf.log_conj_prime_ratio(s)) / w;
    const double t = std::abs(tau[a]);
    if (t != 0.0) sum += 0.5 * weight * t * t;
    if (s != 0.0) sum += -0.5 * std::abs(chi[a]) * nf.conj_prime(s);
    sum += w * nf.conj(s);
    sum += -tau[a] * bg[a];
  }
  return finish(sum);
}

double dual_feasibility_residual(const ProblemSpec& spec, const Vector& tau) {
  require_length(tau, spec.num_terms(), "dual_feasibility_residual");
  const Vector bt = matvec_transpose(spec.b(), tau) - spec.f();
  return spec.restrict_free(bt).norm();
}

double relative_dual_feasibility_residual(const ProblemSpec& spec, const Vector& tau) {
  const double residual = dual_feasibility_residual(spec, tau);
  // || |B|^T |tau| || on free coordinates
  Vector mag = Vector::Zero(spec.num_coords());
  const SparseMatrix& b = spec.b();
  for (Index r = 0; r < b.rows(); ++r) {
    const auto cols = b.row_cols(r);
    const auto vals = b.row_values(r);
    for (std::size_t k = 0; k < cols.size(); ++k) mag[cols[k]] += std::abs(vals[k] * tau[r]);
  }
  const double denom = spec.restrict_free(mag).norm() + spec.restrict_free(spec.f()).norm();
  if (denom == 0.0) return residual;
  return residual / denom;
}

DualityGap duality_gap(const ProblemSpec& spec, const Vector& v, const Vector& tau,
                       double rel_feasibility_tol) {
  const double infeasibility = relative_dual_feasibility_residual(spec, tau);
  if (!(infeasibility <= rel_feasibility_tol)) {
    throw solver_error("duality_gap: tau is not dual feasible (relative residual " +
                       std::to_string(infeasibility) + "); the certificate does not apply");
  }
  DualityGap out;
  const Energy primal = primal_energy(spec, v + spec.g());
  const Energy dual = dual_energy(spec, tau);
  out.primal = primal.value;
  out.dual = dual.value;
  out.offset = spec.f().dot(spec.g());
  CompensatedSum sum;
  sum += out.primal;
  sum += out.dual;
  sum += out.offset;
  out.gap = sum.value();
  out.saturated = primal.saturated || dual.saturated;
  return out;
}

double natural_dual_distance(const ProblemSpec& spec, const Vector& tau, const Vector& sigma) {
  require_length(tau, spec.num_terms(), "natural_dual_distance");
  require_length(sigma, spec.num_terms(), "natural_dual_distance");
  const Integrand& nf = spec.integrand();
  CompensatedSum sum;
  for (Index a = 0; a < tau.size(); ++a) {
    const double w = spec.weights()[a];
    const double d = v_phi_star(nf, tau[a] / w) - v_phi_star(nf, sigma[a] / w);
    sum += w * d * d;
  }
  return sum.value();
}

double dual_monotonicity_form(const ProblemSpec& spec, const Vector& tau, const Vector& sigma) {
  require_length(tau, spec.num_terms(), "dual_monotonicity_form");
  require_length(sigma, spec.num_terms(), "dual_monotonicity_form");
  const Integrand& nf = spec.integrand();
  CompensatedSum sum;
  for (Index a = 0; a < tau.size(); ++a) {
    const double w = spec.weights()[a];
    sum += (a_phi_star(nf, tau[a] / w) - a_phi_star(nf, sigma[a] / w)) * (tau[a] - sigma[a]);
  }
  return sum.value();
}

double reg_gap_bound(const ProblemSpec& spec_unreg, const ProblemSpec& spec_reg,
                     const Vector& sigma_unreg, const Vector& u_g_unreg) {
  const RegularizedNFunction* reg = spec_reg.integrand().regularized();
  if (reg == nullptr) throw config_error("reg_gap_bound: second spec must use a regularized integrand");
  if (spec_unreg.num_terms() != spec_reg.num_terms() ||
      spec_unreg.num_coords() != spec_reg.num_coords() ||
      spec_unreg.integrand().p() != spec_reg.integrand().p()) {
    throw config_error("reg_gap_bound: specs must share operator shape and exponent");
  }
  require_length(sigma_unreg, spec_reg.num_terms(), "reg_gap_bound");
  const Vector bu = matvec(spec_reg.b(), u_g_unreg);
  CompensatedSum sum;
  for (Index a = 0; a < bu.size(); ++a) {
    const double w = spec_reg.weights()[a];
    sum += w * reg->dual_error(std::abs(sigma_unreg[a]) / w);
    sum += -w * reg->primal_error(std::abs(bu[a]));
  }
  return sum.value();
}

Vector dual_from_primal(const ProblemSpec& spec, const Vector& u_g) {
  require_length(u_g, spec.num_coords(), "dual_from_primal");
  Vector sigma = matvec(spec.b(), u_g);
  for (Index a = 0; a < sigma.size(); ++a) {
    sigma[a] = spec.weights()[a] * a_phi(spec.integrand(), sigma[a]);
  }
  return sigma;
}

Vector variational_residual(const ProblemSpec& spec, const Vector& u_g) {
  const Vector sigma = dual_from_primal(spec, u_g);
  return spec.restrict_free(matvec_transpose(spec.b(), sigma) - spec.f());
}

double problem_scale(const ProblemSpec& spec) {
  return 1.0 + std::abs(primal_energy(spec, spec.g()).value) + spec.f().norm() * spec.g().norm();
}

}  // namespace plap
