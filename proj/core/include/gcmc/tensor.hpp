#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

#include "gcmc/rng.hpp"

namespace gcmc {

/// Row-major dense matrix of doubles.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), values_(rows * cols, fill) {}
  DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  /// Builds from nested row lists; every row must have the same length.
  static DenseMatrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static DenseMatrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {values_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {values_.data() + r * cols_, cols_}; }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  bool same_shape(const DenseMatrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  void fill(double v);
  bool all_finite() const;

  DenseMatrix& operator+=(const DenseMatrix& other);
  DenseMatrix& operator-=(const DenseMatrix& other);
  DenseMatrix& operator*=(double s);

  friend bool operator==(const DenseMatrix&, const DenseMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

DenseMatrix operator+(DenseMatrix a, const DenseMatrix& b);
DenseMatrix operator-(DenseMatrix a, const DenseMatrix& b);
DenseMatrix operator*(DenseMatrix a, double s);

/// a += s * b
void axpy(double s, const DenseMatrix& b, DenseMatrix& a);

/// Largest absolute entrywise difference; shapes must match.
double max_abs_diff(const DenseMatrix& a, const DenseMatrix& b);

/// Horizontal concatenation of equally tall blocks.
DenseMatrix hstack(std::span<const DenseMatrix> blocks);
/// Copies columns [offset, offset + width) into a new matrix.
DenseMatrix column_block(const DenseMatrix& m, std::size_t offset, std::size_t width);

/// Copies the listed rows, in order.
DenseMatrix gather_rows(const DenseMatrix& m, std::span<const std::size_t> rows);

struct Triplet {
  std::size_t row;
  std::size_t col;
  double value;
};

/// Compressed sparse row matrix. Column indices are sorted within each row and
/// unique; construction from triplets enforces both.
class SparseMatrix {
 public:
  SparseMatrix() : row_offsets_(1, 0) {}
  SparseMatrix(std::size_t rows, std::size_t cols);
  SparseMatrix(std::size_t rows, std::size_t cols, std::vector<std::size_t> row_offsets,
               std::vector<std::size_t> col_indices, std::vector<double> values);

  /// Throws ContractViolation on out-of-range or duplicate coordinates.
  static SparseMatrix from_triplets(std::size_t rows, std::size_t cols,
                                    std::vector<Triplet> triplets);
  static SparseMatrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t nnz() const { return col_indices_.size(); }

  std::span<const std::size_t> row_offsets() const { return row_offsets_; }
  std::span<const std::size_t> col_indices() const { return col_indices_; }
  std::span<const double> values() const { return values_; }

  std::size_t row_nnz(std::size_t r) const { return row_offsets_[r + 1] - row_offsets_[r]; }
  std::span<const std::size_t> row_cols(std::size_t r) const {
    return {col_indices_.data() + row_offsets_[r], row_nnz(r)};
  }
  std::span<const double> row_values(std::size_t r) const {
    return {values_.data() + row_offsets_[r], row_nnz(r)};
  }

  /// Same sparsity pattern with values replaced by f(row, col, value).
  template <typename F>
  SparseMatrix map_values(F&& f) const {
    std::vector<double> out(values_.size());
    for (std::size_t r = 0; r < rows_; ++r) {
      for (std::size_t k = row_offsets_[r]; k < row_offsets_[r + 1]; ++k) {
        out[k] = f(r, col_indices_[k], values_[k]);
      }
    }
    return SparseMatrix(rows_, cols_, row_offsets_, col_indices_, std::move(out));
  }

  DenseMatrix densify() const;
  SparseMatrix transpose() const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::size_t> row_offsets_;
  std::vector<std::size_t> col_indices_;
  std::vector<double> values_;
};

// Kernels. All of them run a fixed, sequential reduction order so results are
// reproducible bit for bit.

/// a * b for sparse a, cost O(nnz(a) * b.cols()).
DenseMatrix spmm(const SparseMatrix& a, const DenseMatrix& b);

/// Rows `rows` of a * b, one output row per listed row.
DenseMatrix spmm_rows(const SparseMatrix& a, std::span<const std::size_t> rows,
                      const DenseMatrix& b);

/// out += a[rows, :]^T * g, where g has one row per entry of `rows`.
/// This is the adjoint of spmm_rows with respect to its dense operand.
void spmm_rows_transposed_add(const SparseMatrix& a, std::span<const std::size_t> rows,
                              const DenseMatrix& g, DenseMatrix& out);

/// a * b
DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);
/// a^T * b
DenseMatrix matmul_tn(const DenseMatrix& a, const DenseMatrix& b);
/// a * b^T
DenseMatrix matmul_nt(const DenseMatrix& a, const DenseMatrix& b);

/// Row-wise softmax, shifted by the row maximum.
DenseMatrix row_softmax(const DenseMatrix& logits);

struct DropoutResult {
  DenseMatrix output;
  /// Per-entry multiplier: 0 for dropped entries, 1/(1-p) for kept ones.
  DenseMatrix mask;
};

/// Inverted dropout: each entry is zeroed with probability p and survivors are
/// scaled by 1/(1-p). Entries are visited in row-major order, one draw each.
/// Throws ConfigError unless 0 <= p < 1.
DropoutResult apply_unit_dropout(const DenseMatrix& x, double p, Rng& rng);

}  // namespace gcmc
