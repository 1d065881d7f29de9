#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace dga {

/// Row-major dense matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }
  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Square compressed-sparse-row matrix. Column indices are sorted within each row.
struct CsrMatrix {
  std::size_t n = 0;
  std::vector<std::size_t> row_ptr{0};
  std::vector<std::size_t> col_idx;
  std::vector<double> values;

  std::size_t nnz() const { return col_idx.size(); }
  Matrix to_dense() const;
};

/// Rectangular CSR used for sparse node features (rows = nodes).
struct CsrRect {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::size_t> row_ptr{0};
  std::vector<std::size_t> col_idx;
  std::vector<double> values;

  static CsrRect from_dense(const Matrix& m);
};

enum class Exec { serial, parallel };

/// Process-wide execution policy for the kernels below. The parallel kernels
/// partition output rows across threads and keep the serial summation order,
/// so both policies produce bit-identical results.
void set_exec(Exec e);
Exec exec();

namespace kernels {

// C = A * B
Matrix matmul(const Matrix& a, const Matrix& b);
// C = A^T * B
Matrix matmul_tn(const Matrix& a, const Matrix& b);
// C = A * B^T
Matrix matmul_nt(const Matrix& a, const Matrix& b);
// C = S * B for sparse square S
Matrix spmm(const CsrMatrix& s, const Matrix& b);
// C = X * B for sparse rectangular X
Matrix spmm(const CsrRect& x, const Matrix& b);
// C = X^T * B for sparse rectangular X
Matrix spmm_tn(const CsrRect& x, const Matrix& b);

namespace serial {
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix matmul_tn(const Matrix& a, const Matrix& b);
Matrix matmul_nt(const Matrix& a, const Matrix& b);
Matrix spmm(const CsrMatrix& s, const Matrix& b);
Matrix spmm(const CsrRect& x, const Matrix& b);
Matrix spmm_tn(const CsrRect& x, const Matrix& b);
}  // namespace serial

namespace parallel {
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix matmul_tn(const Matrix& a, const Matrix& b);
Matrix matmul_nt(const Matrix& a, const Matrix& b);
Matrix spmm(const CsrMatrix& s, const Matrix& b);
Matrix spmm(const CsrRect& x, const Matrix& b);
Matrix spmm_tn(const CsrRect& x, const Matrix& b);
}  // namespace parallel

}  // namespace kernels

double frobenius_norm(const Matrix& m);
bool all_finite(const Matrix& m);

}  // namespace dga
