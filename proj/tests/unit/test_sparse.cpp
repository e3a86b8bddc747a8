#include <doctest.h>

#include <fstream>
#include <random>
#include <stdexcept>

#include "oracle.hpp"
#include "plap/sparse.hpp"
#include "plap/weighted_solve.hpp"
#include "support.hpp"

using namespace plap;

namespace {

Eigen::MatrixXd random_dense(Index m, Index n, std::uint64_t seed, double density = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_real_distribution<double> keep(0.0, 1.0);
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(m, n);
  for (Index i = 0; i < m; ++i)
    for (Index j = 0; j < n; ++j)
      if (keep(rng) < density) a(i, j) = u(rng);
  return a;
}

// B_f^T diag(a) B_f x = rhs via long-double elimination on the dense normal matrix.
Vector normal_oracle(const Eigen::MatrixXd& b, const Vector& a, const Vector& rhs) {
  const Eigen::MatrixXd n = b.transpose() * a.asDiagonal() * b;
  return oracle::dense_solve(n, rhs);
}

}  // namespace

TEST_SUITE("sparse") {
  TEST_CASE("matrix-vector products") {
    Eigen::MatrixXd d(2, 2);
    d << 1, 2, 0, 3;
    const auto m = SparseMatrix::from_dense(d);
    CHECK(m.nnz() == 3);
    Vector x(2);
    x << 1, 1;
    const Vector y = matvec(m, x);
    CHECK(y[0] == 3.0);
    CHECK(y[1] == 3.0);
    Vector z(2);
    z << 1, -1;
    const Vector t = matvec_transpose(m, z);
    CHECK(t[0] == 1.0);
    CHECK(t[1] == -1.0);
    CHECK_THROWS_AS(matvec(m, Vector::Ones(3)), std::invalid_argument);
  }

  TEST_CASE("adjoint identity on random operators") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> g;
    for (int trial = 0; trial < 5; ++trial) {
      const auto d = random_dense(17, 9, 100 + trial, 0.3);
      const auto m = SparseMatrix::from_dense(d);
      Vector x(9), y(17);
      for (auto& v : x) v = g(rng);
      for (auto& v : y) v = g(rng);
      const double lhs = y.dot(matvec(m, x));
      const double rhs = matvec_transpose(m, y).dot(x);
      CHECK(std::abs(lhs - rhs) <= 1e-13 * (1.0 + std::abs(lhs)));
      CHECK((m.to_dense() - d).norm() == 0.0);
    }
  }

  TEST_CASE("canonical form is enforced") {
    CHECK_NOTHROW(SparseMatrix(2, 3, {0, 1, 2}, {2, 0}, {1.0, 1.0}));
    // unsorted columns in a row
    CHECK_THROWS_AS(SparseMatrix(1, 3, {0, 2}, {2, 0}, {1.0, 1.0}), std::invalid_argument);
    // repeated column
    CHECK_THROWS_AS(SparseMatrix(1, 3, {0, 2}, {1, 1}, {1.0, 1.0}), std::invalid_argument);
    // decreasing offsets
    CHECK_THROWS_AS(SparseMatrix(2, 3, {0, 2, 1}, {0, 1}, {1.0, 1.0}), std::invalid_argument);
    // column out of range
    CHECK_THROWS_AS(SparseMatrix(1, 2, {0, 1}, {2}, {1.0}), std::invalid_argument);
    // offsets do not start at zero
    CHECK_THROWS_AS(SparseMatrix(1, 2, {1, 1}, {}, {}), std::invalid_argument);
  }

  TEST_CASE("triplets are summed and kept in canonical order") {
    const auto m = SparseMatrix::from_triplets(2, 3, {{1, 2, 1.0}, {0, 1, 2.0}, {1, 2, 4.0}, {1, 0, 0.0}});
    CHECK(m.nnz() == 3);  // explicit zero kept
    const auto d = m.to_dense();
    CHECK(d(1, 2) == 5.0);
    CHECK(d(0, 1) == 2.0);
    CHECK(m.row_cols(1)[0] == 0);
    CHECK(m.row_cols(1)[1] == 2);
    CHECK_THROWS_AS(SparseMatrix::from_triplets(1, 1, {{0, 1, 1.0}}), std::invalid_argument);
  }

  TEST_CASE("column selection") {
    const auto d = random_dense(6, 5, 9);
    const auto m = SparseMatrix::from_dense(d);
    const std::vector<Index> keep{4, 1};
    const auto s = m.select_columns(keep).to_dense();
    CHECK(s.cols() == 2);
    CHECK((s.col(0) - d.col(4)).norm() == 0.0);
    CHECK((s.col(1) - d.col(1)).norm() == 0.0);
  }

  TEST_CASE("MatrixMarket round trip") {
    support::TempDir dir("mm");
    const auto m = SparseMatrix::from_dense(random_dense(7, 4, 21, 0.5));
    write_matrix_market(dir / "m.mtx", m);
    const auto r = read_matrix_market(dir / "m.mtx");
    CHECK(r.rows() == 7);
    CHECK(r.cols() == 4);
    CHECK((r.to_dense() - m.to_dense()).norm() == 0.0);

    std::ofstream(dir / "bad.mtx") << "not a matrix\n";
    CHECK(support::thrown_kind([&] { read_matrix_market(dir / "bad.mtx"); }) == ErrorKind::data);
    CHECK(support::thrown_kind([&] { read_matrix_market(dir / "missing.mtx"); }) == ErrorKind::data);
  }

  TEST_CASE("weighted normal solve: identity operator") {
    const auto id = SparseMatrix::identity(2);
    Vector a(2), rhs(2);
    a << 4, 9;
    rhs << 8, 9;
    for (auto method : {InnerMethod::conjugate_gradient, InnerMethod::sparse_cholesky,
                        InnerMethod::dense_qr, InnerMethod::automatic}) {
      WeightedNormalSolver s(id, {0, 1}, {.method = method});
      const Vector x = s.solve(a, rhs);
      CHECK(x[0] == doctest::Approx(2.0).epsilon(1e-13));
      CHECK(x[1] == doctest::Approx(1.0).epsilon(1e-13));
    }
  }

  TEST_CASE("weighted normal solve agrees with elimination") {
    const auto d = random_dense(20, 10, 77);
    const auto b = SparseMatrix::from_dense(d);
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> w(0.1, 10.0);
    Vector a(20), rhs(7);
    for (auto& v : a) v = w(rng);
    for (auto& v : rhs) v = w(rng) - 5.0;
    const std::vector<Index> free{0, 2, 3, 5, 6, 8, 9};
    Eigen::MatrixXd bf(20, 7);
    for (Index j = 0; j < 7; ++j) bf.col(j) = d.col(free[j]);
    const Vector want = normal_oracle(bf, a, rhs);
    for (auto method : {InnerMethod::conjugate_gradient, InnerMethod::sparse_cholesky,
                        InnerMethod::dense_qr}) {
      WeightedNormalSolver s(b, free, {.method = method});
      InnerStats stats;
      const Vector x = s.solve(a, rhs, &stats);
      CHECK(stats.method == method);
      CHECK((x - want).norm() <= 1e-10 * want.norm());
      CHECK((s.apply(a, x) - rhs).norm() <= 1e-10 * rhs.norm());
    }
    // the convenience wrapper
    const Vector x = solve_weighted_normal(b, a, rhs, free);
    CHECK((x - want).norm() <= 1e-10 * want.norm());
  }

  TEST_CASE("weighted normal solve on a square sparse operator") {
    // path-like incidence plus a diagonal, 32 x 32
    std::vector<Triplet> t;
    for (Index i = 0; i < 32; ++i) {
      t.push_back({i, i, 2.0});
      if (i + 1 < 32) t.push_back({i, i + 1, -1.0});
    }
    const auto b = SparseMatrix::from_triplets(32, 32, t);
    Vector a = Vector::LinSpaced(32, 0.5, 50.0);
    Vector rhs = Vector::LinSpaced(32, -1.0, 1.0);
    std::vector<Index> free(32);
    for (Index i = 0; i < 32; ++i) free[i] = i;
    const Vector want = normal_oracle(b.to_dense(), a, rhs);
    for (auto method : {InnerMethod::conjugate_gradient, InnerMethod::sparse_cholesky,
                        InnerMethod::dense_qr}) {
      WeightedNormalSolver s(b, free, {.method = method});
      CHECK((s.solve(a, rhs) - want).norm() <= 1e-9 * want.norm());
    }
  }

  TEST_CASE("affine solve matches the shifted right-hand side") {
    const auto d = random_dense(12, 5, 3);
    const auto b = SparseMatrix::from_dense(d);
    const Vector a = Vector::LinSpaced(12, 1.0, 3.0);
    const Vector target = Vector::LinSpaced(12, -2.0, 2.0);
    const Vector rhs = Vector::LinSpaced(5, 0.0, 1.0);
    // B^T a (B x + t) = rhs  <=>  B^T a B x = rhs - B^T a t
    const Vector shifted = rhs - d.transpose() * a.asDiagonal() * target;
    const Vector want = normal_oracle(d, a, shifted);
    for (auto method : {InnerMethod::conjugate_gradient, InnerMethod::sparse_cholesky,
                        InnerMethod::dense_qr}) {
      WeightedNormalSolver s(b, {0, 1, 2, 3, 4}, {.method = method});
      CHECK((s.solve_affine(a, target, rhs) - want).norm() <= 1e-10 * (1.0 + want.norm()));
    }
  }

  TEST_CASE("solution is invariant under a common weight scale") {
    const auto d = random_dense(15, 6, 4);
    const auto b = SparseMatrix::from_dense(d);
    const Vector a = Vector::LinSpaced(15, 1.0, 2.0);
    const Vector rhs = Vector::Ones(6);
    WeightedNormalSolver s(b, {0, 1, 2, 3, 4, 5});
    const Vector x1 = s.solve(a, rhs);
    const Vector x2 = s.solve(1e200 * a, 1e200 * rhs);
    CHECK((x1 - x2).norm() <= 1e-12 * x1.norm());
  }

  TEST_CASE("invalid weights and singular operators") {
    const auto b = SparseMatrix::identity(3);
    WeightedNormalSolver s(b, {0, 1, 2});
    Vector a = Vector::Ones(3);
    a[1] = 0.0;
    CHECK(support::thrown_kind([&] { s.solve(a, Vector::Ones(3)); }) == ErrorKind::solver);
    a[1] = -1.0;
    CHECK(support::thrown_kind([&] { s.solve(a, Vector::Ones(3)); }) == ErrorKind::solver);

    // second column duplicates the first
    Eigen::MatrixXd d(3, 2);
    d << 1, 1, 2, 2, 3, 3;
    const auto dep = SparseMatrix::from_dense(d);
    const std::vector<Index> cols{0, 1};
    CHECK_FALSE(probe_injective(dep, cols));
    CHECK(probe_injective(SparseMatrix::from_dense(random_dense(6, 3, 1)), cols));
    for (auto method : {InnerMethod::sparse_cholesky, InnerMethod::dense_qr}) {
      WeightedNormalSolver singular(dep, cols, {.method = method});
      CHECK(support::thrown_kind([&] { singular.solve(Vector::Ones(3), Vector::Ones(2)); }) ==
            ErrorKind::solver);
    }
  }

  TEST_CASE("log weight scaling") {
    Vector log_a(4);
    log_a << -1000.0, -990.0, -1005.0, -995.0;
    const auto w = scale_log_weights(log_a);
    CHECK(w.a.allFinite());
    CHECK((w.a.array() > 0.0).all());
    for (Index i = 0; i < 4; ++i)
      CHECK(std::log(w.a[i]) + w.log_shift == doctest::Approx(log_a[i]).epsilon(1e-12));
    // ratios beyond exp(700) are clamped
    Vector wide(2);
    wide << 0.0, 3000.0;
    const auto c = scale_log_weights(wide);
    CHECK(c.a.allFinite());
    CHECK(std::log(c.a[1] / c.a[0]) <= 1400.0 + 1e-9);
  }

  TEST_CASE("inner method names") {
    for (auto m : {InnerMethod::automatic, InnerMethod::conjugate_gradient, InnerMethod::sparse_cholesky,
                   InnerMethod::dense_qr})
      CHECK(inner_method_from_string(to_string(m)) == m);
    CHECK(support::thrown_kind([] { inner_method_from_string("lu"); }) == ErrorKind::config);
  }
}
