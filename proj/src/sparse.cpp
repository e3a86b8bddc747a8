#include "plap/sparse.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>

#include "plap/error.hpp"

namespace plap {

SparseMatrix::SparseMatrix(Index rows, Index cols, std::vector<Index> row_offsets,
                           std::vector<Index> col_indices, std::vector<double> values)
    : rows_(rows),
      cols_(cols),
      row_offsets_(std::move(row_offsets)),
      col_indices_(std::move(col_indices)),
      values_(std::move(values)) {
  if (rows_ < 0 || cols_ < 0) throw std::invalid_argument("SparseMatrix: negative dimension");
  if (static_cast<Index>(row_offsets_.size()) != rows_ + 1 || row_offsets_.front() != 0) {
    throw std::invalid_argument("SparseMatrix: row_offsets must have length rows+1 and start at 0");
  }
  if (col_indices_.size() != values_.size() ||
      row_offsets_.back() != static_cast<Index>(values_.size())) {
    throw std::invalid_argument("SparseMatrix: inconsistent nonzero counts");
  }
  for (Index r = 0; r < rows_; ++r) {
    if (row_offsets_[r + 1] < row_offsets_[r]) {
      throw std::invalid_argument("SparseMatrix: row_offsets must be non-decreasing");
    }
    for (Index k = row_offsets_[r]; k < row_offsets_[r + 1]; ++k) {
      const Index c = col_indices_[k];
      if (c < 0 || c >= cols_) throw std::invalid_argument("SparseMatrix: column index out of range");
      if (k > row_offsets_[r] && col_indices_[k - 1] >= c) {
        throw std::invalid_argument("SparseMatrix: column indices must increase strictly in a row");
      }
    }
  }
}

SparseMatrix SparseMatrix::from_triplets(Index rows, Index cols, std::vector<Triplet> entries) {
  for (const auto& t : entries) {
    if (t.row < 0 || t.row >= rows || t.col < 0 || t.col >= cols) {
      throw std::invalid_argument("SparseMatrix::from_triplets: entry out of range");
    }
  }
  std::sort(entries.begin(), entries.end(), [](const Triplet& a, const Triplet& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  std::vector<Index> offsets(static_cast<std::size_t>(rows) + 1, 0);
  std::vector<Index> cols_out;
  std::vector<double> vals;
  cols_out.reserve(entries.size());
  vals.reserve(entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& t = entries[i];
    if (i > 0 && entries[i - 1].row == t.row && entries[i - 1].col == t.col) {
      vals.back() += t.value;
      continue;
    }
    cols_out.push_back(t.col);
    vals.push_back(t.value);
    ++offsets[static_cast<std::size_t>(t.row) + 1];
  }
  for (Index r = 0; r < rows; ++r) offsets[r + 1] += offsets[r];
  return {rows, cols, std::move(offsets), std::move(cols_out), std::move(vals)};
}

SparseMatrix SparseMatrix::from_dense(const Eigen::MatrixXd& dense) {
  std::vector<Index> offsets{0};
  std::vector<Index> cols;
  std::vector<double> vals;
  for (Index r = 0; r < dense.rows(); ++r) {
    for (Index c = 0; c < dense.cols(); ++c) {
      if (dense(r, c) != 0.0) {
        cols.push_back(c);
        vals.push_back(dense(r, c));
      }
    }
    offsets.push_back(static_cast<Index>(vals.size()));
  }
  return {dense.rows(), dense.cols(), std::move(offsets), std::move(cols), std::move(vals)};
}

SparseMatrix SparseMatrix::identity(Index n) {
  std::vector<Index> offsets(static_cast<std::size_t>(n) + 1);
  std::vector<Index> cols(static_cast<std::size_t>(n));
  for (Index i = 0; i <= n; ++i) offsets[i] = i;
  for (Index i = 0; i < n; ++i) cols[i] = i;
  return {n, n, std::move(offsets), std::move(cols), std::vector<double>(n, 1.0)};
}

SparseMatrix SparseMatrix::select_columns(std::span<const Index> cols) const {
  std::vector<Index> remap(static_cast<std::size_t>(cols_), -1);
  for (std::size_t j = 0; j < cols.size(); ++j) {
    if (cols[j] < 0 || cols[j] >= cols_) throw std::invalid_argument("select_columns: bad column");
    remap[cols[j]] = static_cast<Index>(j);
  }
  std::vector<Triplet> entries;
  for (Index r = 0; r < rows_; ++r) {
    for (Index k = row_offsets_[r]; k < row_offsets_[r + 1]; ++k) {
      const Index c = remap[col_indices_[k]];
      if (c >= 0) entries.push_back({r, c, values_[k]});
    }
  }
  return from_triplets(rows_, static_cast<Index>(cols.size()), std::move(entries));
}

Eigen::MatrixXd SparseMatrix::to_dense() const {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(rows_, cols_);
  for (Index r = 0; r < rows_; ++r) {
    for (Index k = row_offsets_[r]; k < row_offsets_[r + 1]; ++k) out(r, col_indices_[k]) = values_[k];
  }
  return out;
}

Eigen::SparseMatrix<double, Eigen::RowMajor> SparseMatrix::to_eigen() const {
  std::vector<Eigen::Triplet<double>> entries;
  entries.reserve(values_.size());
  for (Index r = 0; r < rows_; ++r) {
    for (Index k = row_offsets_[r]; k < row_offsets_[r + 1]; ++k) {
      entries.emplace_back(r, col_indices_[k], values_[k]);
    }
  }
  Eigen::SparseMatrix<double, Eigen::RowMajor> out(rows_, cols_);
  out.setFromTriplets(entries.begin(), entries.end());
  return out;
}

Vector matvec(const SparseMatrix& m, const Vector& x) {
  if (x.size() != m.cols()) {
    throw std::invalid_argument("matvec: expected vector of length " + std::to_string(m.cols()) +
                                ", got " + std::to_string(x.size()));
  }
  Vector y(m.rows());
  const auto offsets = m.row_offsets();
  const auto cols = m.col_indices();
  const auto vals = m.values();
  for (Index r = 0; r < m.rows(); ++r) {
    double acc = 0.0;
    for (Index k = offsets[r]; k < offsets[r + 1]; ++k) acc += vals[k] * x[cols[k]];
    y[r] = acc;
  }
  return y;
}

Vector matvec_transpose(const SparseMatrix& m, const Vector& y) {
  if (y.size() != m.rows()) {
    throw std::invalid_argument("matvec_transpose: expected vector of length " +
                                std::to_string(m.rows()) + ", got " + std::to_string(y.size()));
  }
  Vector x = Vector::Zero(m.cols());
  const auto offsets = m.row_offsets();
  const auto cols = m.col_indices();
  const auto vals = m.values();
  for (Index r = 0; r < m.rows(); ++r) {
    const double yr = y[r];
    if (yr == 0.0) continue;
    for (Index k = offsets[r]; k < offsets[r + 1]; ++k) x[cols[k]] += vals[k] * yr;
  }
  return x;
}

SparseMatrix read_matrix_market(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open MatrixMarket file " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("%%MatrixMarket", 0) != 0) {
    throw data_error(path.string() + ": missing %%MatrixMarket banner");
  }
  std::istringstream banner(line);
  std::string tag, object, format, field, symmetry;
  banner >> tag >> object >> format >> field >> symmetry;
  if (object != "matrix" || format != "coordinate" || (field != "real" && field != "integer")) {
    throw data_error(path.string() + ": only 'matrix coordinate real' files are supported");
  }
  const bool symmetric = symmetry == "symmetric";
  if (!symmetric && symmetry != "general") {
    throw data_error(path.string() + ": unsupported symmetry '" + symmetry + "'");
  }
  while (std::getline(in, line) && (line.empty() || line[0] == '%')) {
  }
  std::istringstream header(line);
  Index rows = 0, cols = 0, count = 0;
  if (!(header >> rows >> cols >> count) || rows < 0 || cols < 0 || count < 0) {
    throw data_error(path.string() + ": malformed size line");
  }
  std::vector<Triplet> entries;
  entries.reserve(static_cast<std::size_t>(count) * (symmetric ? 2 : 1));
  for (Index k = 0; k < count; ++k) {
    Index r = 0, c = 0;
    double v = 0.0;
    if (!(in >> r >> c >> v)) throw data_error(path.string() + ": truncated entry list");
    if (r < 1 || r > rows || c < 1 || c > cols) throw data_error(path.string() + ": index out of range");
    entries.push_back({r - 1, c - 1, v});
    if (symmetric && r != c) entries.push_back({c - 1, r - 1, v});
  }
  return SparseMatrix::from_triplets(rows, cols, std::move(entries));
}

void write_matrix_market(const std::filesystem::path& path, const SparseMatrix& m) {
  std::ofstream out(path);
  if (!out) throw data_error("cannot write MatrixMarket file " + path.string());
  out << "%%MatrixMarket matrix coordinate real general\n";
  out << m.rows() << ' ' << m.cols() << ' ' << m.nnz() << '\n';
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (Index r = 0; r < m.rows(); ++r) {
    const auto cols = m.row_cols(r);
    const auto vals = m.row_values(r);
    for (std::size_t k = 0; k < cols.size(); ++k) {
      out << r + 1 << ' ' << cols[k] + 1 << ' ' << vals[k] << '\n';
    }
  }
}

}  // namespace plap
