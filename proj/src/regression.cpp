#include "plap/regression.hpp"

#include <cmath>
#include <random>
#include <string>

#include <Eigen/QR>

#include "plap/error.hpp"

namespace plap {
namespace {

// Uniform on (0, 1): the 53 high bits shifted by half a unit.
double open_uniform(std::mt19937_64& rng) {
  return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

void check_instance(const RegressionInstance& inst) {
  if (inst.b.size() != inst.a.rows()) throw config_error("regression: b must have one entry per row of A");
  if (inst.a.rows() < inst.a.cols()) throw config_error("regression: A needs at least as many rows as columns");
  if (!(inst.p >= 2.0)) throw config_error("regression: p must be >= 2");
}

}  // namespace

ProblemSpec build_lifted(const RegressionInstance& inst, const Integrand& integrand) {
  check_instance(inst);
  const Index m = inst.a.rows();
  const Index n = inst.a.cols();
  const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(inst.a.to_dense());
  if (qr.rank() < n) {
    throw config_error("regression: A is rank deficient (rank " + std::to_string(qr.rank()) +
                       " < " + std::to_string(n) + ")");
  }
  std::vector<Triplet> t;
  t.reserve(static_cast<std::size_t>(inst.a.nnz() + m));
  for (Index r = 0; r < m; ++r) {
    const auto cols = inst.a.row_cols(r);
    const auto vals = inst.a.row_values(r);
    for (std::size_t k = 0; k < cols.size(); ++k) t.push_back({r, cols[k], vals[k]});
    t.push_back({r, n + r, -1.0});
  }
  Vector g = Vector::Zero(n + m);
  g.tail(m) = inst.b;
  std::vector<bool> fixed(static_cast<std::size_t>(n + m), false);
  for (Index i = n; i < n + m; ++i) fixed[i] = true;
  return {SparseMatrix::from_triplets(m, n + m, t), Vector::Ones(m), Vector::Zero(n + m), g,
          std::move(fixed), integrand};
}

ProblemSpec build_lifted(const RegressionInstance& inst, double delta_lower, double delta_upper) {
  check_instance(inst);
  return build_lifted(inst, Integrand::regularized(inst.p, delta_lower, delta_upper));
}

Vector regression_coefficients(const RegressionInstance& inst, const Vector& u_g) {
  if (u_g.size() != inst.a.cols() + inst.a.rows()) {
    throw std::invalid_argument("regression_coefficients: expected a lifted vector");
  }
  return u_g.head(inst.a.cols());
}

RegressionInstance random_instance(Index m, Index n, std::uint64_t seed, double p) {
  if (!(m > n && n >= 1)) throw config_error("random_instance: need M > N >= 1");
  std::mt19937_64 rng(seed);
  Eigen::MatrixXd a(m, n);
  for (Index i = 0; i < m; ++i) {
    for (Index j = 0; j < n; ++j) a(i, j) = open_uniform(rng);
  }
  Vector b(m);
  for (Index i = 0; i < m; ++i) b[i] = open_uniform(rng);
  return {SparseMatrix::from_dense(a), std::move(b), p};
}

double lp_norm(const Vector& r, double p) {
  if (r.size() == 0) return 0.0;
  const double top = r.cwiseAbs().maxCoeff();
  if (top == 0.0 || !std::isfinite(top)) return top;
  double sum = 0.0;
  for (Index i = 0; i < r.size(); ++i) sum += std::pow(std::abs(r[i]) / top, p);
  return top * std::pow(sum, 1.0 / p);
}

double lp_residual(const RegressionInstance& inst, const Vector& u_tilde) {
  return lp_norm(matvec(inst.a, u_tilde) - inst.b, inst.p);
}

}  // namespace plap
