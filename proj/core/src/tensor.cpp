#include "gcmc/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "gcmc/error.hpp"

namespace gcmc {
namespace {

std::string shape_str(std::size_t r, std::size_t c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

void require_same_shape(const DenseMatrix& a, const DenseMatrix& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ContractViolation(std::string(op) + ": shape mismatch " +
                            shape_str(a.rows(), a.cols()) + " vs " +
                            shape_str(b.rows(), b.cols()));
  }
}

}  // namespace

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (values_.size() != rows * cols) {
    throw ContractViolation("DenseMatrix: " + std::to_string(values_.size()) +
                            " values for shape " + shape_str(rows, cols));
  }
}

DenseMatrix DenseMatrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t n = rows.size();
  const std::size_t m = n == 0 ? 0 : rows.begin()->size();
  std::vector<double> values;
  values.reserve(n * m);
  for (const auto& r : rows) {
    if (r.size() != m) throw ContractViolation("DenseMatrix::from_rows: ragged rows");
    values.insert(values.end(), r.begin(), r.end());
  }
  return DenseMatrix(n, m, std::move(values));
}

DenseMatrix DenseMatrix::identity(std::size_t n) {
  DenseMatrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

void DenseMatrix::fill(double v) { std::fill(values_.begin(), values_.end(), v); }

bool DenseMatrix::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

DenseMatrix& DenseMatrix::operator+=(const DenseMatrix& other) {
  require_same_shape(*this, other, "operator+=");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
  return *this;
}

DenseMatrix& DenseMatrix::operator-=(const DenseMatrix& other) {
  require_same_shape(*this, other, "operator-=");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= other.values_[i];
  return *this;
}

DenseMatrix& DenseMatrix::operator*=(double s) {
  for (double& v : values_) v *= s;
  return *this;
}

DenseMatrix operator+(DenseMatrix a, const DenseMatrix& b) { return a += b; }
DenseMatrix operator-(DenseMatrix a, const DenseMatrix& b) { return a -= b; }
DenseMatrix operator*(DenseMatrix a, double s) { return a *= s; }

void axpy(double s, const DenseMatrix& b, DenseMatrix& a) {
  require_same_shape(a, b, "axpy");
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) av[i] += s * bv[i];
}

double max_abs_diff(const DenseMatrix& a, const DenseMatrix& b) {
  require_same_shape(a, b, "max_abs_diff");
  double worst = 0.0;
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) worst = std::max(worst, std::abs(av[i] - bv[i]));
  return worst;
}

DenseMatrix hstack(std::span<const DenseMatrix> blocks) {
  if (blocks.empty()) return {};
  const std::size_t rows = blocks.front().rows();
  std::size_t cols = 0;
  for (const auto& b : blocks) {
    if (b.rows() != rows) throw ContractViolation("hstack: blocks differ in row count");
    cols += b.cols();
  }
  DenseMatrix out(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    auto dst = out.row(r).begin();
    for (const auto& b : blocks) dst = std::copy(b.row(r).begin(), b.row(r).end(), dst);
  }
  return out;
}

DenseMatrix column_block(const DenseMatrix& m, std::size_t offset, std::size_t width) {
  if (offset + width > m.cols()) throw ContractViolation("column_block: range exceeds columns");
  DenseMatrix out(m.rows(), width);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto src = m.row(r).subspan(offset, width);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

DenseMatrix gather_rows(const DenseMatrix& m, std::span<const std::size_t> rows) {
  DenseMatrix out(rows.size(), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= m.rows()) throw ContractViolation("gather_rows: row index out of range");
    auto src = m.row(rows[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

SparseMatrix::SparseMatrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), row_offsets_(rows + 1, 0) {}

SparseMatrix::SparseMatrix(std::size_t rows, std::size_t cols,
                           std::vector<std::size_t> row_offsets,
                           std::vector<std::size_t> col_indices, std::vector<double> values)
    : rows_(rows),
      cols_(cols),
      row_offsets_(std::move(row_offsets)),
      col_indices_(std::move(col_indices)),
      values_(std::move(values)) {
  if (row_offsets_.size() != rows_ + 1 || row_offsets_.front() != 0 ||
      row_offsets_.back() != col_indices_.size() || values_.size() != col_indices_.size()) {
    throw ContractViolation("SparseMatrix: inconsistent CSR arrays");
  }
  for (std::size_t r = 0; r < rows_; ++r) {
    if (row_offsets_[r] > row_offsets_[r + 1]) {
      throw ContractViolation("SparseMatrix: row offsets decrease");
    }
    for (std::size_t k = row_offsets_[r]; k < row_offsets_[r + 1]; ++k) {
      if (col_indices_[k] >= cols_) throw ContractViolation("SparseMatrix: column out of range");
      if (k > row_offsets_[r] && col_indices_[k] <= col_indices_[k - 1]) {
        throw ContractViolation("SparseMatrix: columns unsorted or duplicated within a row");
      }
    }
  }
}

SparseMatrix SparseMatrix::from_triplets(std::size_t rows, std::size_t cols,
                                         std::vector<Triplet> triplets) {
  for (const auto& t : triplets) {
    if (t.row >= rows || t.col >= cols) {
      throw ContractViolation("SparseMatrix::from_triplets: entry (" + std::to_string(t.row) +
                              "," + std::to_string(t.col) + ") outside " +
                              shape_str(rows, cols));
    }
  }
  std::sort(triplets.begin(), triplets.end(), [](const Triplet& a, const Triplet& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  std::vector<std::size_t> offsets(rows + 1, 0);
  std::vector<std::size_t> cols_out;
  std::vector<double> vals;
  cols_out.reserve(triplets.size());
  vals.reserve(triplets.size());
  for (std::size_t k = 0; k < triplets.size(); ++k) {
    if (k > 0 && triplets[k].row == triplets[k - 1].row && triplets[k].col == triplets[k - 1].col) {
      throw ContractViolation("SparseMatrix::from_triplets: duplicate entry (" +
                              std::to_string(triplets[k].row) + "," +
                              std::to_string(triplets[k].col) + ")");
    }
    ++offsets[triplets[k].row + 1];
    cols_out.push_back(triplets[k].col);
    vals.push_back(triplets[k].value);
  }
  for (std::size_t r = 0; r < rows; ++r) offsets[r + 1] += offsets[r];
  return SparseMatrix(rows, cols, std::move(offsets), std::move(cols_out), std::move(vals));
}

SparseMatrix SparseMatrix::identity(std::size_t n) {
  std::vector<std::size_t> offsets(n + 1);
  std::vector<std::size_t> cols(n);
  for (std::size_t i = 0; i <= n; ++i) offsets[i] = i;
  for (std::size_t i = 0; i < n; ++i) cols[i] = i;
  return SparseMatrix(n, n, std::move(offsets), std::move(cols), std::vector<double>(n, 1.0));
}

DenseMatrix SparseMatrix::densify() const {
  DenseMatrix out(rows_, cols_);
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t k = row_offsets_[r]; k < row_offsets_[r + 1]; ++k) {
      out(r, col_indices_[k]) = values_[k];
    }
  }
  return out;
}

SparseMatrix SparseMatrix::transpose() const {
  std::vector<std::size_t> offsets(cols_ + 1, 0);
  for (std::size_t c : col_indices_) ++offsets[c + 1];
  for (std::size_t c = 0; c < cols_; ++c) offsets[c + 1] += offsets[c];
  std::vector<std::size_t> cursor(offsets.begin(), offsets.end() - 1);
  std::vector<std::size_t> rows_out(nnz());
  std::vector<double> vals(nnz());
  // Visiting rows in increasing order keeps the transposed rows sorted.
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t k = row_offsets_[r]; k < row_offsets_[r + 1]; ++k) {
      const std::size_t dst = cursor[col_indices_[k]]++;
      rows_out[dst] = r;
      vals[dst] = values_[k];
    }
  }
  return SparseMatrix(cols_, rows_, std::move(offsets), std::move(rows_out), std::move(vals));
}

namespace {

void sparse_row_times_dense(const SparseMatrix& a, std::size_t r, const DenseMatrix& b,
                            std::span<double> out) {
  const auto cols = a.row_cols(r);
  const auto vals = a.row_values(r);
  const std::size_t width = b.cols();
  for (std::size_t k = 0; k < cols.size(); ++k) {
    const double v = vals[k];
    const double* src = b.row(cols[k]).data();
    double* dst = out.data();
    for (std::size_t c = 0; c < width; ++c) dst[c] += v * src[c];
  }
}

}  // namespace

DenseMatrix spmm(const SparseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.rows()) {
    throw ContractViolation("spmm: " + shape_str(a.rows(), a.cols()) + " times " +
                            shape_str(b.rows(), b.cols()));
  }
  DenseMatrix out(a.rows(), b.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) sparse_row_times_dense(a, r, b, out.row(r));
  return out;
}

DenseMatrix spmm_rows(const SparseMatrix& a, std::span<const std::size_t> rows,
                      const DenseMatrix& b) {
  if (a.cols() != b.rows()) {
    throw ContractViolation("spmm_rows: " + shape_str(a.rows(), a.cols()) + " times " +
                            shape_str(b.rows(), b.cols()));
  }
  DenseMatrix out(rows.size(), b.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= a.rows()) throw ContractViolation("spmm_rows: row index out of range");
    sparse_row_times_dense(a, rows[i], b, out.row(i));
  }
  return out;
}

void spmm_rows_transposed_add(const SparseMatrix& a, std::span<const std::size_t> rows,
                              const DenseMatrix& g, DenseMatrix& out) {
  if (g.rows() != rows.size() || out.rows() != a.cols() || out.cols() != g.cols()) {
    throw ContractViolation("spmm_rows_transposed_add: shape mismatch");
  }
  const std::size_t width = g.cols();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= a.rows()) {
      throw ContractViolation("spmm_rows_transposed_add: row index out of range");
    }
    const auto cols = a.row_cols(rows[i]);
    const auto vals = a.row_values(rows[i]);
    const double* src = g.row(i).data();
    for (std::size_t k = 0; k < cols.size(); ++k) {
      const double v = vals[k];
      double* dst = out.row(cols[k]).data();
      for (std::size_t c = 0; c < width; ++c) dst[c] += v * src[c];
    }
  }
}

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.rows()) {
    throw ContractViolation("matmul: " + shape_str(a.rows(), a.cols()) + " times " +
                            shape_str(b.rows(), b.cols()));
  }
  DenseMatrix out(a.rows(), b.cols());
  const std::size_t inner = a.cols();
  const std::size_t width = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* dst = out.row(i).data();
    const double* arow = a.row(i).data();
    for (std::size_t k = 0; k < inner; ++k) {
      const double v = arow[k];
      if (v == 0.0) continue;
      const double* src = b.row(k).data();
      for (std::size_t c = 0; c < width; ++c) dst[c] += v * src[c];
    }
  }
  return out;
}

DenseMatrix matmul_tn(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.rows() != b.rows()) {
    throw ContractViolation("matmul_tn: " + shape_str(a.rows(), a.cols()) + "^T times " +
                            shape_str(b.rows(), b.cols()));
  }
  DenseMatrix out(a.cols(), b.cols());
  const std::size_t width = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* arow = a.row(i).data();
    const double* src = b.row(i).data();
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double v = arow[k];
      if (v == 0.0) continue;
      double* dst = out.row(k).data();
      for (std::size_t c = 0; c < width; ++c) dst[c] += v * src[c];
    }
  }
  return out;
}

DenseMatrix matmul_nt(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.cols()) {
    throw ContractViolation("matmul_nt: " + shape_str(a.rows(), a.cols()) + " times " +
                            shape_str(b.rows(), b.cols()) + "^T");
  }
  DenseMatrix out(a.rows(), b.rows());
  const std::size_t inner = a.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* arow = a.row(i).data();
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const double* brow = b.row(j).data();
      double acc = 0.0;
      for (std::size_t k = 0; k < inner; ++k) acc += arow[k] * brow[k];
      out(i, j) = acc;
    }
  }
  return out;
}

DenseMatrix row_softmax(const DenseMatrix& logits) {
  DenseMatrix out(logits.rows(), logits.cols());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    const auto in = logits.row(r);
    if (in.empty()) continue;
    const double shift = *std::max_element(in.begin(), in.end());
    auto dst = out.row(r);
    double total = 0.0;
    for (std::size_t c = 0; c < in.size(); ++c) {
      dst[c] = std::exp(in[c] - shift);
      total += dst[c];
    }
    for (double& v : dst) v /= total;
  }
  return out;
}

DropoutResult apply_unit_dropout(const DenseMatrix& x, double p, Rng& rng) {
  if (!(p >= 0.0 && p < 1.0)) {
    throw ConfigError("dropout probability must lie in [0, 1), got " + std::to_string(p));
  }
  DropoutResult result{x, DenseMatrix(x.rows(), x.cols(), 1.0)};
  if (p == 0.0) return result;
  const double keep_scale = 1.0 / (1.0 - p);
  auto out = result.output.values();
  auto mask = result.mask.values();
  for (std::size_t i = 0; i < out.size(); ++i) {
    mask[i] = rng.bernoulli(p) ? 0.0 : keep_scale;
    out[i] *= mask[i];
  }
  return result;
}

}  // namespace gcmc
