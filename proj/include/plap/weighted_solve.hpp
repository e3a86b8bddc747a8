#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCholesky>

#include "plap/sparse.hpp"

namespace plap {

enum class Preconditioner { none, jacobi };

struct CgConfig {
  double rel_tol = 1e-12;
  Index max_iters = 0;  // 0: 10 * n
  Preconditioner preconditioner = Preconditioner::jacobi;
};

/// Backend for the restricted weighted normal equations  B_f^T diag(a) B_f x = rhs.
enum class InnerMethod {
  automatic,           // dense_qr for small dense operators, sparse_cholesky otherwise
  conjugate_gradient,  // matrix-free Jacobi PCG
  sparse_cholesky,     // assembled normal matrix, simplicial LDL^T
  dense_qr,            // Householder QR of diag(sqrt(a)) B_f, corrected semi-normal equations
};

std::string_view to_string(InnerMethod m);
InnerMethod inner_method_from_string(std::string_view name);

struct InnerConfig {
  InnerMethod method = InnerMethod::automatic;
  CgConfig cg{};
};

struct InnerStats {
  InnerMethod method = InnerMethod::automatic;
  Index iterations = 0;
  double relative_residual = 0.0;
};

/// Repeated weighted normal-equation solves over a fixed operator and column
/// restriction. The normal matrix is never formed for the CG backend; the
/// direct backends factor per call but keep their symbolic analysis.
///
/// Weights are rescaled by their geometric median before each solve (the
/// solution is invariant under a common positive factor applied to weights and
/// right-hand side).
class WeightedNormalSolver {
 public:
  WeightedNormalSolver(const SparseMatrix& b, std::vector<Index> free_cols, InnerConfig cfg = {});

  Index rows() const noexcept { return restricted_.rows(); }
  Index unknowns() const noexcept { return restricted_.cols(); }
  const SparseMatrix& restricted() const noexcept { return restricted_; }
  InnerMethod method() const noexcept { return method_; }
  const InnerConfig& config() const noexcept { return cfg_; }

  /// a must be positive and finite. A positive shift solves the Levenberg
  /// system (B_f^T diag(a) B_f + shift I) x = rhs instead.
  Vector solve(const Vector& a, const Vector& rhs, InnerStats* stats = nullptr, double shift = 0.0);

  /// Solves B_f^T diag(a) (B_f x + target) = rhs. Residuals are formed from
  /// B_f x + target directly, so tiny fitted residuals keep their accuracy.
  Vector solve_affine(const Vector& a, const Vector& target, const Vector& rhs,
                      InnerStats* stats = nullptr);
  /// B_f^T diag(a) B_f x + shift x.
  Vector apply(const Vector& a, const Vector& x, double shift = 0.0) const;

 private:
  Vector solve_cg(const Vector& a, const Vector& rhs, double shift, InnerStats* stats) const;
  Vector solve_cholesky(const Vector& a, const Vector& rhs, double shift, InnerStats* stats);
  Vector solve_qr(const Vector& a, const Vector& rhs, const Vector* target, double shift,
                  InnerStats* stats) const;
  Vector affine_apply(const Vector& a, const Vector& x, const Vector& target) const;

  SparseMatrix restricted_;
  std::vector<Index> free_cols_;
  InnerConfig cfg_;
  InnerMethod method_;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt_;
  bool pattern_analyzed_ = false;
};

/// Weights given by their logarithms, divided by a common factor exp(shift) so
/// that they are normal doubles. Relative weights are clamped to exp(+-700).
struct ScaledWeights {
  Vector a;
  double log_shift = 0.0;
};
ScaledWeights scale_log_weights(const Vector& log_a);

/// One-shot convenience wrapper around WeightedNormalSolver with the CG backend.
Vector solve_weighted_normal(const SparseMatrix& b, const Vector& a, const Vector& rhs,
                             std::span<const Index> free_cols, const CgConfig& cfg = {},
                             InnerStats* stats = nullptr);

/// Randomized probe for ker(B_f) = {0}: three random right-hand sides solved by
/// CG with unit weights; stagnation or non-convergence rejects the operator.
bool probe_injective(const SparseMatrix& b, std::span<const Index> free_cols,
                     std::uint64_t seed = 0x5eed);

}  // namespace plap
