#include "plap/weighted_solve.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

#include <Eigen/QR>

#include "plap/error.hpp"

namespace plap {
namespace {

constexpr const char* kKernelHint =
    " (the weighted least-squares problem needs ker(B) restricted to the free coordinates to be "
    "{0}; check that every connected component carries a fixed coordinate)";

double median_log(const Vector& a) {
  std::vector<double> logs(static_cast<std::size_t>(a.size()));
  for (Index i = 0; i < a.size(); ++i) logs[i] = std::log(a[i]);
  const auto mid = logs.begin() + static_cast<std::ptrdiff_t>(logs.size() / 2);
  std::nth_element(logs.begin(), mid, logs.end());
  return *mid;
}

void check_weights(const Vector& a, Index expected) {
  if (a.size() != expected) {
    throw std::invalid_argument("weighted solve: expected " + std::to_string(expected) +
                                " weights, got " + std::to_string(a.size()));
  }
  for (Index i = 0; i < a.size(); ++i) {
    if (!(a[i] > 0.0) || !std::isfinite(a[i])) {
      throw solver_error("weighted solve: weight " + std::to_string(i) +
                         " must be positive and finite, got " + std::to_string(a[i]));
    }
  }
}

}  // namespace

std::string_view to_string(InnerMethod m) {
  switch (m) {
    case InnerMethod::automatic: return "auto";
    case InnerMethod::conjugate_gradient: return "cg";
    case InnerMethod::sparse_cholesky: return "cholesky";
    case InnerMethod::dense_qr: return "qr";
  }
  return "auto";
}

InnerMethod inner_method_from_string(std::string_view name) {
  if (name == "auto") return InnerMethod::automatic;
  if (name == "cg") return InnerMethod::conjugate_gradient;
  if (name == "cholesky") return InnerMethod::sparse_cholesky;
  if (name == "qr") return InnerMethod::dense_qr;
  throw config_error("unknown inner solver '" + std::string(name) + "' (auto|cg|cholesky|qr)");
}

WeightedNormalSolver::WeightedNormalSolver(const SparseMatrix& b, std::vector<Index> free_cols,
                                           InnerConfig cfg)
    : restricted_(b.select_columns(free_cols)), free_cols_(std::move(free_cols)), cfg_(cfg) {
  if (!(cfg_.cg.rel_tol > 0.0)) throw config_error("CG rel_tol must be positive");
  if (cfg_.cg.max_iters < 0) throw config_error("CG max_iters must be >= 1");
  method_ = cfg_.method;
  if (method_ == InnerMethod::automatic) {
    const double n = static_cast<double>(restricted_.cols());
    const double density =
        n > 0 ? static_cast<double>(restricted_.nnz()) / (n * static_cast<double>(restricted_.rows()))
              : 0.0;
    method_ = (n <= 1500 && density > 0.05) ? InnerMethod::dense_qr : InnerMethod::sparse_cholesky;
  }
}

Vector WeightedNormalSolver::apply(const Vector& a, const Vector& x, double shift) const {
  Vector bx = matvec(restricted_, x);
  bx.array() *= a.array();
  Vector out = matvec_transpose(restricted_, bx);
  if (shift != 0.0) out += shift * x;
  return out;
}

Vector WeightedNormalSolver::solve(const Vector& a, const Vector& rhs, InnerStats* stats,
                                   double shift) {
  if (!(shift >= 0.0) || !std::isfinite(shift)) throw std::invalid_argument("weighted solve: shift must be >= 0");
  check_weights(a, restricted_.rows());
  if (rhs.size() != restricted_.cols()) {
    throw std::invalid_argument("weighted solve: rhs has length " + std::to_string(rhs.size()) +
                                ", expected " + std::to_string(restricted_.cols()));
  }
  InnerStats local;
  local.method = method_;
  if (restricted_.cols() == 0) {
    if (stats) *stats = local;
    return Vector(0);
  }
  // Common rescaling leaves x unchanged and centres the weights around 1.
  const double log_center = a.size() > 0 ? median_log(a) : 0.0;
  const double factor = std::exp(-log_center);
  const Vector scaled_a = (a.array().log() - log_center).exp().matrix();
  const Vector scaled_rhs = rhs * factor;
  if (!scaled_rhs.allFinite()) throw solver_error("weighted solve: right-hand side overflow");

  const double scaled_shift = shift * factor;
  Vector x;
  switch (method_) {
    case InnerMethod::conjugate_gradient: x = solve_cg(scaled_a, scaled_rhs, scaled_shift, &local); break;
    case InnerMethod::sparse_cholesky: x = solve_cholesky(scaled_a, scaled_rhs, scaled_shift, &local); break;
    case InnerMethod::dense_qr: x = solve_qr(scaled_a, scaled_rhs, nullptr, scaled_shift, &local); break;
    case InnerMethod::automatic: throw internal_error("unresolved inner method");
  }
  if (stats) *stats = local;
  return x;
}

Vector WeightedNormalSolver::affine_apply(const Vector& a, const Vector& x, const Vector& target) const {
  Vector r = matvec(restricted_, x) + target;
  r.array() *= a.array();
  return matvec_transpose(restricted_, r);
}

Vector WeightedNormalSolver::solve_affine(const Vector& a, const Vector& target, const Vector& rhs,
                                          InnerStats* stats) {
  check_weights(a, restricted_.rows());
  if (target.size() != restricted_.rows() || rhs.size() != restricted_.cols()) {
    throw std::invalid_argument("weighted solve: target must have length M and rhs one entry per unknown");
  }
  InnerStats local;
  local.method = method_;
  if (restricted_.cols() == 0) {
    if (stats) *stats = local;
    return Vector(0);
  }
  const double log_center = a.size() > 0 ? median_log(a) : 0.0;
  const Vector scaled_a = (a.array().log() - log_center).exp().matrix();
  const Vector scaled_rhs = rhs * std::exp(-log_center);
  if (!scaled_rhs.allFinite()) throw solver_error("weighted solve: right-hand side overflow");

  Vector x;
  if (method_ == InnerMethod::dense_qr) {
    x = solve_qr(scaled_a, scaled_rhs, &target, 0.0, &local);
  } else {
    const Vector full_rhs = scaled_rhs - affine_apply(scaled_a, Vector::Zero(restricted_.cols()), target);
    if (method_ == InnerMethod::sparse_cholesky) {
      x = solve_cholesky(scaled_a, full_rhs, 0.0, &local);
      x += ldlt_.solve(Vector(scaled_rhs - affine_apply(scaled_a, x, target)));
    } else {
      x = solve_cg(scaled_a, full_rhs, 0.0, &local);
    }
  }
  if (stats) *stats = local;
  return x;
}

Vector WeightedNormalSolver::solve_cg(const Vector& a, const Vector& rhs, double shift,
                                      InnerStats* stats) const {
  const Index n = restricted_.cols();
  const Index max_iters = cfg_.cg.max_iters > 0 ? cfg_.cg.max_iters : 10 * n;
  const double rhs_norm = rhs.norm();
  Vector x = Vector::Zero(n);
  stats->iterations = 0;
  stats->relative_residual = 0.0;
  if (rhs_norm == 0.0) return x;

  Vector diag = Vector::Ones(n);
  if (cfg_.cg.preconditioner == Preconditioner::jacobi) {
    diag.setZero();
    for (Index r = 0; r < restricted_.rows(); ++r) {
      const auto cols = restricted_.row_cols(r);
      const auto vals = restricted_.row_values(r);
      for (std::size_t k = 0; k < cols.size(); ++k) diag[cols[k]] += a[r] * vals[k] * vals[k];
    }
    diag.array() += shift;
    for (Index j = 0; j < n; ++j) {
      if (!(diag[j] > 0.0)) {
        throw solver_error("CG: free column " + std::to_string(j) + " has empty support" +
                           kKernelHint);
      }
    }
  }

  Vector r = rhs;
  Vector z = r.cwiseQuotient(diag);
  Vector p = z;
  double rz = r.dot(z);
  double res = rhs_norm;
  const Index window = std::max<Index>(50, n);
  double window_start = res;
  for (Index it = 1; it <= max_iters; ++it) {
    const Vector kp = apply(a, p, shift);
    const double curvature = p.dot(kp);
    if (!(curvature > 0.0)) {
      throw solver_error("CG: non-positive curvature, normal matrix is singular" +
                         std::string(kKernelHint));
    }
    const double alpha = rz / curvature;
    x += alpha * p;
    r -= alpha * kp;
    res = r.norm();
    stats->iterations = it;
    stats->relative_residual = res / rhs_norm;
    if (res <= cfg_.cg.rel_tol * rhs_norm) return x;
    if (it % window == 0) {
      if (res > 0.999 * window_start) {
        throw solver_error("CG stagnated at relative residual " +
                           std::to_string(res / rhs_norm) + " after " + std::to_string(it) +
                           " iterations" + kKernelHint);
      }
      window_start = res;
    }
    z = r.cwiseQuotient(diag);
    const double rz_next = r.dot(z);
    p = z + (rz_next / rz) * p;
    rz = rz_next;
  }
  throw solver_error("CG did not converge in " + std::to_string(max_iters) +
                     " iterations; final relative residual " + std::to_string(res / rhs_norm));
}

Vector WeightedNormalSolver::solve_cholesky(const Vector& a, const Vector& rhs, double shift,
                                            InnerStats* stats) {
  const Eigen::SparseMatrix<double> bf = restricted_.to_eigen();
  const Eigen::SparseMatrix<double> weighted = a.asDiagonal() * bf;
  Eigen::SparseMatrix<double> normal = Eigen::SparseMatrix<double>(bf.transpose()) * weighted;
  if (shift > 0.0) {
    Eigen::SparseMatrix<double> eye(normal.rows(), normal.cols());
    eye.setIdentity();
    normal += shift * eye;
  }
  if (!pattern_analyzed_) {
    ldlt_.analyzePattern(normal);
    pattern_analyzed_ = true;
  }
  ldlt_.factorize(normal);
  if (ldlt_.info() != Eigen::Success) {
    throw solver_error("sparse LDL^T factorization failed" + std::string(kKernelHint));
  }
  const Vector d = ldlt_.vectorD();
  const double dmax = d.cwiseAbs().maxCoeff();
  if (!(d.minCoeff() > 1e-14 * dmax)) {
    throw solver_error("normal matrix is numerically singular (pivot ratio " +
                       std::to_string(d.minCoeff() / dmax) + ")" + kKernelHint);
  }
  Vector x = ldlt_.solve(rhs);
  Vector res = rhs - apply(a, x, shift);
  x += ldlt_.solve(res);
  res = rhs - apply(a, x, shift);
  const double rhs_norm = rhs.norm();
  stats->iterations = 1;
  stats->relative_residual = rhs_norm > 0.0 ? res.norm() / rhs_norm : res.norm();
  return x;
}

Vector WeightedNormalSolver::solve_qr(const Vector& a, const Vector& rhs, const Vector* target,
                                      double shift, InnerStats* stats) const {
  const Index m = restricted_.rows();
  const Index n = restricted_.cols();
  if (m < n && shift == 0.0) throw solver_error("dense QR: fewer rows than unknowns" + std::string(kKernelHint));
  // Rows ordered by decreasing weight keep Householder QR stable under strong row scaling.
  std::vector<Index> order(static_cast<std::size_t>(m));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index i, Index j) { return a[i] > a[j]; });
  const Index extra = shift > 0.0 ? n : 0;
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(m + extra, n);
  for (Index k = 0; k < m; ++k) {
    const Index r = order[k];
    const double s = std::sqrt(a[r]);
    const auto cols = restricted_.row_cols(r);
    const auto vals = restricted_.row_values(r);
    for (std::size_t j = 0; j < cols.size(); ++j) w(k, cols[j]) = s * vals[j];
  }
  for (Index j = 0; j < extra; ++j) w(m + j, j) = std::sqrt(shift);
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(w);
  const Eigen::MatrixXd r_factor = qr.matrixQR().topRows(n).triangularView<Eigen::Upper>();
  const Vector rdiag = r_factor.diagonal().cwiseAbs();
  if (!(rdiag.minCoeff() > 1e-15 * static_cast<double>(n) * rdiag.maxCoeff())) {
    throw solver_error("dense QR: weighted operator is numerically rank deficient" +
                       std::string(kKernelHint));
  }
  const auto upper = r_factor.triangularView<Eigen::Upper>();
  auto semi_normal = [&](const Vector& b) {
    Vector y = upper.transpose().solve(b);
    return Vector(upper.solve(y));
  };
  auto residual = [&](const Vector& x) {
    return Vector(target ? rhs - affine_apply(a, x, *target) : rhs - apply(a, x, shift));
  };
  Vector x = semi_normal(rhs);
  if (target) {
    // Least-squares part through Q: min || sqrt(a) (B_f x + t) ||.
    Vector st = Vector::Zero(m + extra);
    for (Index k = 0; k < m; ++k) st[k] = std::sqrt(a[order[k]]) * (*target)[order[k]];
    st.applyOnTheLeft(qr.householderQ().transpose());
    x -= Vector(upper.solve(st.head(n)));
  }
  Vector res = residual(x);
  for (int step = 0; step < 2; ++step) {
    x += semi_normal(res);
    res = residual(x);
  }
  const double rhs_norm = rhs.norm();
  stats->iterations = 1;
  stats->relative_residual = rhs_norm > 0.0 ? res.norm() / rhs_norm : res.norm();
  return x;
}

ScaledWeights scale_log_weights(const Vector& log_a) {
  ScaledWeights out;
  out.a.resize(log_a.size());
  if (log_a.size() == 0) return out;
  std::vector<double> logs(log_a.begin(), log_a.end());
  const auto mid = logs.begin() + static_cast<std::ptrdiff_t>(logs.size() / 2);
  std::nth_element(logs.begin(), mid, logs.end());
  out.log_shift = *mid;
  for (Index i = 0; i < log_a.size(); ++i) {
    if (!std::isfinite(log_a[i])) throw solver_error("weighted solve: non-finite log weight");
    out.a[i] = std::exp(std::clamp(log_a[i] - out.log_shift, -700.0, 700.0));
  }
  return out;
}

Vector solve_weighted_normal(const SparseMatrix& b, const Vector& a, const Vector& rhs,
                             std::span<const Index> free_cols, const CgConfig& cfg,
                             InnerStats* stats) {
  WeightedNormalSolver solver(b, std::vector<Index>(free_cols.begin(), free_cols.end()),
                              InnerConfig{InnerMethod::conjugate_gradient, cfg});
  return solver.solve(a, rhs, stats);
}

bool probe_injective(const SparseMatrix& b, std::span<const Index> free_cols, std::uint64_t seed) {
  if (free_cols.empty()) return true;
  CgConfig cfg;
  cfg.rel_tol = 1e-8;
  WeightedNormalSolver solver(b, std::vector<Index>(free_cols.begin(), free_cols.end()),
                              InnerConfig{InnerMethod::conjugate_gradient, cfg});
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  const Vector ones = Vector::Ones(b.rows());
  for (int trial = 0; trial < 3; ++trial) {
    Vector rhs(solver.unknowns());
    for (Index i = 0; i < rhs.size(); ++i) rhs[i] = normal(rng);
    try {
      solver.solve(ones, rhs);
    } catch (const Error&) {
      return false;
    }
  }
  return true;
}

}  // namespace plap
