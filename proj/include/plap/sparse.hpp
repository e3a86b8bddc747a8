#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

namespace plap {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;

struct Triplet {
  Index row;
  Index col;
  double value;
};

/// Compressed-sparse-row real matrix in canonical form: row offsets
/// non-decreasing, column indices strictly increasing within each row.
class SparseMatrix {
 public:
  SparseMatrix() = default;

  /// Validates the arrays; throws std::invalid_argument if they are not canonical.
  SparseMatrix(Index rows, Index cols, std::vector<Index> row_offsets,
               std::vector<Index> col_indices, std::vector<double> values);

  /// Duplicate entries are summed; explicit zeros are kept.
  static SparseMatrix from_triplets(Index rows, Index cols, std::vector<Triplet> entries);
  static SparseMatrix from_dense(const Eigen::MatrixXd& dense);
  static SparseMatrix identity(Index n);

  Index rows() const noexcept { return rows_; }
  Index cols() const noexcept { return cols_; }
  Index nnz() const noexcept { return static_cast<Index>(values_.size()); }

  std::span<const Index> row_offsets() const noexcept { return row_offsets_; }
  std::span<const Index> col_indices() const noexcept { return col_indices_; }
  std::span<const double> values() const noexcept { return values_; }

  std::span<const Index> row_cols(Index row) const noexcept {
    return {col_indices_.data() + row_offsets_[row],
            static_cast<std::size_t>(row_offsets_[row + 1] - row_offsets_[row])};
  }
  std::span<const double> row_values(Index row) const noexcept {
    return {values_.data() + row_offsets_[row],
            static_cast<std::size_t>(row_offsets_[row + 1] - row_offsets_[row])};
  }

  /// Submatrix keeping the listed columns, renumbered 0..cols.size()-1.
  SparseMatrix select_columns(std::span<const Index> cols) const;

  Eigen::MatrixXd to_dense() const;
  Eigen::SparseMatrix<double, Eigen::RowMajor> to_eigen() const;

 private:
  Index rows_ = 0;
  Index cols_ = 0;
  std::vector<Index> row_offsets_{0};
  std::vector<Index> col_indices_;
  std::vector<double> values_;
};

/// M x.
Vector matvec(const SparseMatrix& m, const Vector& x);
/// M^T y.
Vector matvec_transpose(const SparseMatrix& m, const Vector& y);

/// Coordinate real general MatrixMarket files (debugging aid).
SparseMatrix read_matrix_market(const std::filesystem::path& path);
void write_matrix_market(const std::filesystem::path& path, const SparseMatrix& m);

}  // namespace plap
