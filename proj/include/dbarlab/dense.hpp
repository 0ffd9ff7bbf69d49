#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace dbarlab {

using cplx = std::complex<double>;

/// Small dense complex matrix, row-major.
class CMatrix {
public:
  CMatrix() = default;
  CMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols) {}

  static CMatrix identity(std::size_t n) {
    CMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  cplx& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  cplx const& operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  CMatrix adjoint() const {
    CMatrix a(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t j = 0; j < cols_; ++j) a(j, i) = std::conj((*this)(i, j));
    return a;
  }

  friend CMatrix operator*(CMatrix const& a, CMatrix const& b) {
    if (a.cols_ != b.rows_) throw std::invalid_argument("matrix product dimension mismatch");
    CMatrix c(a.rows_, b.cols_);
    for (std::size_t i = 0; i < a.rows_; ++i)
      for (std::size_t k = 0; k < a.cols_; ++k) {
        cplx const aik = a(i, k);
        for (std::size_t j = 0; j < b.cols_; ++j) c(i, j) += aik * b(k, j);
      }
    return c;
  }
  friend CMatrix operator+(CMatrix a, CMatrix const& b) {
    for (std::size_t i = 0; i < a.data_.size(); ++i) a.data_[i] += b.data_[i];
    return a;
  }
  friend CMatrix operator-(CMatrix a, CMatrix const& b) {
    for (std::size_t i = 0; i < a.data_.size(); ++i) a.data_[i] -= b.data_[i];
    return a;
  }
  friend CMatrix operator*(cplx s, CMatrix a) {
    for (auto& v : a.data_) v *= s;
    return a;
  }

  std::vector<cplx> apply(std::vector<cplx> const& x) const {
    std::vector<cplx> y(rows_);
    for (std::size_t i = 0; i < rows_; ++i) {
      cplx s = 0.0;
      for (std::size_t j = 0; j < cols_; ++j) s += (*this)(i, j) * x[j];
      y[i] = s;
    }
    return y;
  }

  double max_abs() const {
    double m = 0.0;
    for (auto const& v : data_) m = std::max(m, std::abs(v));
    return m;
  }
  /// max |A - A^*|
  double hermitian_defect() const {
    double d = 0.0;
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t j = 0; j < cols_; ++j) d = std::max(d, std::abs((*this)(i, j) - std::conj((*this)(j, i))));
    return d;
  }
  double frobenius() const {
    double s = 0.0;
    for (auto const& v : data_) s += std::norm(v);
    return std::sqrt(s);
  }
  cplx trace() const {
    cplx t = 0.0;
    for (std::size_t i = 0; i < std::min(rows_, cols_); ++i) t += (*this)(i, i);
    return t;
  }

private:
  std::size_t rows_ = 0, cols_ = 0;
  std::vector<cplx> data_;
};

struct EigenDecomposition {
  std::vector<double> values; // ascending
  CMatrix vectors;            // column i belongs to values[i]; empty if not requested
  int sweeps = 0;
};

/// Cyclic Jacobi on the Hermitian part (H + H*)/2. Equal eigenvalues keep the
/// order in which the rotations left them.
inline EigenDecomposition jacobi_eigen(CMatrix const& h, bool want_vectors = true, int max_sweeps = 100) {
  std::size_t const n = h.rows();
  if (h.cols() != n) throw std::invalid_argument("jacobi_eigen: matrix must be square");
  CMatrix a(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) a(i, j) = 0.5 * (h(i, j) + std::conj(h(j, i)));
  for (std::size_t i = 0; i < n; ++i) a(i, i) = a(i, i).real();
  CMatrix v = want_vectors ? CMatrix::identity(n) : CMatrix();

  double const scale = std::max(a.frobenius(), std::numeric_limits<double>::min());
  int sweep = 0;
  for (; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += std::norm(a(p, q));
    if (std::sqrt(2.0 * off) <= 1e-16 * scale) break;

    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        double const b = std::abs(a(p, q));
        if (b == 0.0) continue;
        double const app = a(p, p).real(), aqq = a(q, q).real();
        // skip rotations that cannot change the diagonal in floating point
        if (sweep > 3 && b < 1e-18 * (std::abs(app) + std::abs(aqq))) {
          a(p, q) = a(q, p) = 0.0;
          continue;
        }
        cplx const e = a(p, q) / b; // phase of a_pq
        double const theta = 0.5 * std::atan2(2.0 * b, aqq - app);
        double const c = std::cos(theta), s = std::sin(theta);
        // U = diag(1, conj(e)) * [[c, s], [-s, c]]
        cplx const upp = c, upq = s, uqp = -s * std::conj(e), uqq = c * std::conj(e);
        for (std::size_t k = 0; k < n; ++k) {
          cplx const akp = a(k, p), akq = a(k, q);
          a(k, p) = akp * upp + akq * uqp;
          a(k, q) = akp * upq + akq * uqq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          cplx const apk = a(p, k), aqk = a(q, k);
          a(p, k) = std::conj(upp) * apk + std::conj(uqp) * aqk;
          a(q, k) = std::conj(upq) * apk + std::conj(uqq) * aqk;
        }
        a(p, q) = a(q, p) = 0.0;
        a(p, p) = a(p, p).real();
        a(q, q) = a(q, q).real();
        if (want_vectors) {
          for (std::size_t k = 0; k < n; ++k) {
            cplx const vkp = v(k, p), vkq = v(k, q);
            v(k, p) = vkp * upp + vkq * uqp;
            v(k, q) = vkp * upq + vkq * uqq;
          }
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto i, auto j) { return a(i, i).real() < a(j, j).real(); });
  EigenDecomposition out;
  out.sweeps = sweep;
  out.values.resize(n);
  if (want_vectors) out.vectors = CMatrix(n, n);
  for (std::size_t c = 0; c < n; ++c) {
    out.values[c] = a(order[c], order[c]).real();
    if (want_vectors)
      for (std::size_t r = 0; r < n; ++r) out.vectors(r, c) = v(r, order[c]);
  }
  return out;
}

} // namespace dbarlab
