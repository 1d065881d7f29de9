#include "dga/kernels.hpp"

#include <atomic>
#include <cmath>
#include <string>

#include "dga/error.hpp"

namespace dga {

namespace {

std::atomic<Exec> g_exec{Exec::parallel};

void check(bool ok, const char* op, std::size_t a, std::size_t b) {
  if (!ok)
    throw InputError(std::string(op) + ": inner dimension mismatch (" + std::to_string(a) + " vs " +
                     std::to_string(b) + ")");
}

// Each row kernel below is shared by the serial and parallel drivers so the
// floating-point summation order is the same under both.

inline void matmul_row(const Matrix& a, const Matrix& b, Matrix& c, std::size_t i) {
  auto out = c.row(i);
  for (std::size_t k = 0; k < a.cols(); ++k) {
    const double aik = a(i, k);
    if (aik == 0.0) continue;
    auto brow = b.row(k);
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += aik * brow[j];
  }
}

inline void matmul_tn_row(const Matrix& a, const Matrix& b, Matrix& c, std::size_t i) {
  auto out = c.row(i);
  for (std::size_t k = 0; k < a.rows(); ++k) {
    const double aki = a(k, i);
    if (aki == 0.0) continue;
    auto brow = b.row(k);
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += aki * brow[j];
  }
}

inline void matmul_nt_row(const Matrix& a, const Matrix& b, Matrix& c, std::size_t i) {
  auto arow = a.row(i);
  for (std::size_t j = 0; j < b.rows(); ++j) {
    auto brow = b.row(j);
    double s = 0.0;
    for (std::size_t k = 0; k < arow.size(); ++k) s += arow[k] * brow[k];
    c(i, j) = s;
  }
}

inline void spmm_row(const CsrMatrix& s, const Matrix& b, Matrix& c, std::size_t i) {
  auto out = c.row(i);
  for (std::size_t p = s.row_ptr[i]; p < s.row_ptr[i + 1]; ++p) {
    const double v = s.values[p];
    auto brow = b.row(s.col_idx[p]);
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += v * brow[j];
  }
}

inline void spmm_rect_row(const CsrRect& x, const Matrix& b, Matrix& c, std::size_t i) {
  auto out = c.row(i);
  for (std::size_t p = x.row_ptr[i]; p < x.row_ptr[i + 1]; ++p) {
    const double v = x.values[p];
    auto brow = b.row(x.col_idx[p]);
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += v * brow[j];
  }
}

// Transposed structure of x with source rows kept in increasing order, so
// accumulating a transposed row matches the serial scatter order.
CsrRect transpose(const CsrRect& x) {
  CsrRect t;
  t.rows = x.cols;
  t.cols = x.rows;
  t.row_ptr.assign(x.cols + 1, 0);
  for (auto c : x.col_idx) ++t.row_ptr[c + 1];
  for (std::size_t i = 0; i < x.cols; ++i) t.row_ptr[i + 1] += t.row_ptr[i];
  t.col_idx.resize(x.col_idx.size());
  t.values.resize(x.values.size());
  std::vector<std::size_t> cursor(t.row_ptr.begin(), t.row_ptr.end() - 1);
  for (std::size_t r = 0; r < x.rows; ++r) {
    for (std::size_t p = x.row_ptr[r]; p < x.row_ptr[r + 1]; ++p) {
      auto& at = cursor[x.col_idx[p]];
      t.col_idx[at] = r;
      t.values[at] = x.values[p];
      ++at;
    }
  }
  return t;
}

template <typename RowFn>
void for_rows_serial(std::size_t n, RowFn&& fn) {
  for (std::size_t i = 0; i < n; ++i) fn(i);
}

template <typename RowFn>
void for_rows_parallel(std::size_t n, RowFn&& fn) {
  const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < count; ++i) fn(static_cast<std::size_t>(i));
}

}  // namespace

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix CsrMatrix::to_dense() const {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t p = row_ptr[i]; p < row_ptr[i + 1]; ++p) m(i, col_idx[p]) = values[p];
  return m;
}

CsrRect CsrRect::from_dense(const Matrix& m) {
  CsrRect x;
  x.rows = m.rows();
  x.cols = m.cols();
  x.row_ptr.reserve(m.rows() + 1);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) {
      if (m(i, j) != 0.0) {
        x.col_idx.push_back(j);
        x.values.push_back(m(i, j));
      }
    }
    x.row_ptr.push_back(x.col_idx.size());
  }
  return x;
}

void set_exec(Exec e) { g_exec.store(e); }
Exec exec() { return g_exec.load(); }

namespace kernels {

#define DGA_DEFINE_KERNELS(NS, FOR_ROWS)                                        \
  namespace NS {                                                                \
  Matrix matmul(const Matrix& a, const Matrix& b) {                             \
    check(a.cols() == b.rows(), "matmul", a.cols(), b.rows());                  \
    Matrix c(a.rows(), b.cols());                                               \
    FOR_ROWS(a.rows(), [&](std::size_t i) { matmul_row(a, b, c, i); });         \
    return c;                                                                   \
  }                                                                             \
  Matrix matmul_tn(const Matrix& a, const Matrix& b) {                          \
    check(a.rows() == b.rows(), "matmul_tn", a.rows(), b.rows());               \
    Matrix c(a.cols(), b.cols());                                               \
    FOR_ROWS(a.cols(), [&](std::size_t i) { matmul_tn_row(a, b, c, i); });      \
    return c;                                                                   \
  }                                                                             \
  Matrix matmul_nt(const Matrix& a, const Matrix& b) {                          \
    check(a.cols() == b.cols(), "matmul_nt", a.cols(), b.cols());               \
    Matrix c(a.rows(), b.rows());                                               \
    FOR_ROWS(a.rows(), [&](std::size_t i) { matmul_nt_row(a, b, c, i); });      \
    return c;                                                                   \
  }                                                                             \
  Matrix spmm(const CsrMatrix& s, const Matrix& b) {                            \
    check(s.n == b.rows(), "spmm", s.n, b.rows());                              \
    Matrix c(s.n, b.cols());                                                    \
    FOR_ROWS(s.n, [&](std::size_t i) { spmm_row(s, b, c, i); });                \
    return c;                                                                   \
  }                                                                             \
  Matrix spmm(const CsrRect& x, const Matrix& b) {                              \
    check(x.cols == b.rows(), "spmm", x.cols, b.rows());                        \
    Matrix c(x.rows, b.cols());                                                 \
    FOR_ROWS(x.rows, [&](std::size_t i) { spmm_rect_row(x, b, c, i); });        \
    return c;                                                                   \
  }                                                                             \
  Matrix spmm_tn(const CsrRect& x, const Matrix& b) {                           \
    check(x.rows == b.rows(), "spmm_tn", x.rows, b.rows());                     \
    const CsrRect t = transpose(x);                                             \
    Matrix c(t.rows, b.cols());                                                 \
    FOR_ROWS(t.rows, [&](std::size_t i) { spmm_rect_row(t, b, c, i); });        \
    return c;                                                                   \
  }                                                                             \
  }

DGA_DEFINE_KERNELS(serial, for_rows_serial)
DGA_DEFINE_KERNELS(parallel, for_rows_parallel)

#undef DGA_DEFINE_KERNELS

Matrix matmul(const Matrix& a, const Matrix& b) {
  return exec() == Exec::parallel ? parallel::matmul(a, b) : serial::matmul(a, b);
}
Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  return exec() == Exec::parallel ? parallel::matmul_tn(a, b) : serial::matmul_tn(a, b);
}
Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  return exec() == Exec::parallel ? parallel::matmul_nt(a, b) : serial::matmul_nt(a, b);
}
Matrix spmm(const CsrMatrix& s, const Matrix& b) {
  return exec() == Exec::parallel ? parallel::spmm(s, b) : serial::spmm(s, b);
}
Matrix spmm(const CsrRect& x, const Matrix& b) {
  return exec() == Exec::parallel ? parallel::spmm(x, b) : serial::spmm(x, b);
}
Matrix spmm_tn(const CsrRect& x, const Matrix& b) {
  return exec() == Exec::parallel ? parallel::spmm_tn(x, b) : serial::spmm_tn(x, b);
}

}  // namespace kernels

double frobenius_norm(const Matrix& m) {
  double s = 0.0;
  for (double v : m.values()) s += v * v;
  return std::sqrt(s);
}

bool all_finite(const Matrix& m) {
  for (double v : m.values())
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace dga
