#pragma once

// Complex compressed-sparse-row matrices: assembly from triplets, products,
// Gram matrices B*B and Matrix Market export.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <iomanip>
#include <ostream>
#include <span>
#include <stdexcept>
#include <vector>

#include "dbarlab/dense.hpp"
#include "dbarlab/io.hpp"

namespace dbarlab {

class SparseMatrix {
public:
  SparseMatrix() = default;
  SparseMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), row_ptr_(rows + 1, 0) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t nonzeros() const noexcept { return values_.size(); }
  bool hermitian() const noexcept { return hermitian_; }
  void set_hermitian(bool h) noexcept { hermitian_ = h; }

  std::vector<std::size_t> const& row_ptr() const noexcept { return row_ptr_; }
  std::vector<std::uint32_t> const& col_idx() const noexcept { return col_; }
  std::vector<cplx> const& values() const noexcept { return values_; }

  /// out = A x
  void multiply(std::span<cplx const> x, std::span<cplx> out) const {
    if (x.size() != cols_ || out.size() != rows_) throw std::invalid_argument("sparse multiply: dimension mismatch");
    auto const* v = reinterpret_cast<double const*>(values_.data());
    auto const* px = reinterpret_cast<double const*>(x.data());
    for (std::size_t r = 0; r < rows_; ++r) {
      double re = 0.0, im = 0.0;
      for (std::size_t t = row_ptr_[r]; t < row_ptr_[r + 1]; ++t) {
        double const ar = v[2 * t], ai = v[2 * t + 1];
        double const xr = px[2 * col_[t]], xi = px[2 * col_[t] + 1];
        re += ar * xr - ai * xi;
        im += ar * xi + ai * xr;
      }
      out[r] = cplx(re, im);
    }
  }
  std::vector<cplx> operator*(std::vector<cplx> const& x) const {
    std::vector<cplx> y(rows_);
    multiply(x, y);
    return y;
  }

  cplx entry(std::size_t r, std::size_t c) const {
    auto const b = col_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[r]);
    auto const e = col_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[r + 1]);
    auto it = std::lower_bound(b, e, static_cast<std::uint32_t>(c));
    if (it == e || *it != c) return 0.0;
    return values_[static_cast<std::size_t>(it - col_.begin())];
  }
  std::vector<double> diagonal_real() const {
    std::vector<double> d(std::min(rows_, cols_));
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = entry(i, i).real();
    return d;
  }

  SparseMatrix adjoint() const {
    SparseMatrix a(cols_, rows_);
    for (auto c : col_) ++a.row_ptr_[c + 1];
    for (std::size_t i = 0; i < cols_; ++i) a.row_ptr_[i + 1] += a.row_ptr_[i];
    a.col_.resize(col_.size());
    a.values_.resize(values_.size());
    std::vector<std::size_t> fill(a.row_ptr_.begin(), a.row_ptr_.end() - 1);
    for (std::size_t r = 0; r < rows_; ++r)
      for (std::size_t t = row_ptr_[r]; t < row_ptr_[r + 1]; ++t) {
        std::size_t const dst = fill[col_[t]]++;
        a.col_[dst] = static_cast<std::uint32_t>(r);
        a.values_[dst] = std::conj(values_[t]);
      }
    return a;
  }

  /// max row sum of |a_ij|; bounds the spectral norm of a Hermitian matrix.
  double norm_inf() const {
    double best = 0.0;
    for (std::size_t r = 0; r < rows_; ++r) {
      double s = 0.0;
      for (std::size_t t = row_ptr_[r]; t < row_ptr_[r + 1]; ++t) s += std::abs(values_[t]);
      best = std::max(best, s);
    }
    return best;
  }
  double max_abs() const {
    double m = 0.0;
    for (auto const& v : values_) m = std::max(m, std::abs(v));
    return m;
  }
  /// max |a_ij - conj(a_ji)|
  double hermitian_defect() const {
    if (rows_ != cols_) throw std::invalid_argument("hermitian_defect: matrix is not square");
    double d = 0.0;
    for (std::size_t r = 0; r < rows_; ++r)
      for (std::size_t t = row_ptr_[r]; t < row_ptr_[r + 1]; ++t)
        d = std::max(d, std::abs(values_[t] - std::conj(entry(col_[t], r))));
    return d;
  }
  bool all_finite() const {
    return std::all_of(values_.begin(), values_.end(), [](cplx const& v) { return std::isfinite(v.real()) && std::isfinite(v.imag()); });
  }

  CMatrix to_dense() const {
    CMatrix d(rows_, cols_);
    for (std::size_t r = 0; r < rows_; ++r)
      for (std::size_t t = row_ptr_[r]; t < row_ptr_[r + 1]; ++t) d(r, col_[t]) += values_[t];
    return d;
  }

  friend SparseMatrix operator+(SparseMatrix const& a, SparseMatrix const& b);
  friend SparseMatrix gram(SparseMatrix const& b);
  friend class TripletBuilder;

private:
  std::size_t rows_ = 0, cols_ = 0;
  std::vector<std::size_t> row_ptr_{0};
  std::vector<std::uint32_t> col_;
  std::vector<cplx> values_;
  bool hermitian_ = false;
};

/// Accumulates (row, col, value) entries; duplicates are summed.
class TripletBuilder {
public:
  TripletBuilder(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols) {
    if (cols > UINT32_MAX) throw std::length_error("sparse matrix: too many columns");
  }
  void add(std::size_t r, std::size_t c, cplx v) {
    if (r >= rows_ || c >= cols_) throw std::out_of_range("sparse matrix: entry out of range");
    entries_.push_back({r, static_cast<std::uint32_t>(c), v});
  }
  std::size_t size() const noexcept { return entries_.size(); }

  SparseMatrix build() {
    std::sort(entries_.begin(), entries_.end(), [](Entry const& a, Entry const& b) { return a.r != b.r ? a.r < b.r : a.c < b.c; });
    SparseMatrix m(rows_, cols_);
    for (std::size_t i = 0; i < entries_.size();) {
      std::size_t j = i;
      cplx s = 0.0;
      while (j < entries_.size() && entries_[j].r == entries_[i].r && entries_[j].c == entries_[i].c) s += entries_[j++].v;
      m.col_.push_back(entries_[i].c);
      m.values_.push_back(s);
      ++m.row_ptr_[entries_[i].r + 1];
      i = j;
    }
    for (std::size_t r = 0; r < rows_; ++r) m.row_ptr_[r + 1] += m.row_ptr_[r];
    entries_.clear();
    return m;
  }

private:
  struct Entry {
    std::size_t r;
    std::uint32_t c;
    cplx v;
  };
  std::size_t rows_, cols_;
  std::vector<Entry> entries_;
};

inline SparseMatrix operator+(SparseMatrix const& a, SparseMatrix const& b) {
  if (a.rows_ != b.rows_ || a.cols_ != b.cols_) throw std::invalid_argument("sparse sum: dimension mismatch");
  SparseMatrix out(a.rows_, a.cols_);
  for (std::size_t r = 0; r < a.rows_; ++r) {
    std::size_t i = a.row_ptr_[r], j = b.row_ptr_[r];
    std::size_t const ie = a.row_ptr_[r + 1], je = b.row_ptr_[r + 1];
    while (i < ie || j < je) {
      if (j >= je || (i < ie && a.col_[i] < b.col_[j])) {
        out.col_.push_back(a.col_[i]);
        out.values_.push_back(a.values_[i++]);
      } else if (i >= ie || b.col_[j] < a.col_[i]) {
        out.col_.push_back(b.col_[j]);
        out.values_.push_back(b.values_[j++]);
      } else {
        out.col_.push_back(a.col_[i]);
        out.values_.push_back(a.values_[i++] + b.values_[j++]);
      }
    }
    out.row_ptr_[r + 1] = out.col_.size();
  }
  out.hermitian_ = a.hermitian_ && b.hermitian_;
  return out;
}

/// B* B, Hermitian positive semidefinite by construction.
inline SparseMatrix gram(SparseMatrix const& b) {
  SparseMatrix const bt = b.adjoint();
  SparseMatrix out(b.cols_, b.cols_);
  std::vector<cplx> acc(b.cols_);
  std::vector<std::int64_t> mark(b.cols_, -1);
  std::vector<std::uint32_t> touched;
  for (std::size_t i = 0; i < b.cols_; ++i) {
    touched.clear();
    // row i of B*B = sum_r conj(B[r,i]) B[r,:]
    for (std::size_t t = bt.row_ptr_[i]; t < bt.row_ptr_[i + 1]; ++t) {
      std::size_t const r = bt.col_[t];
      cplx const w = bt.values_[t];
      for (std::size_t s = b.row_ptr_[r]; s < b.row_ptr_[r + 1]; ++s) {
        std::uint32_t const c = b.col_[s];
        if (mark[c] != static_cast<std::int64_t>(i)) {
          mark[c] = static_cast<std::int64_t>(i);
          acc[c] = 0.0;
          touched.push_back(c);
        }
        acc[c] += w * b.values_[s];
      }
    }
    std::sort(touched.begin(), touched.end());
    for (auto c : touched) {
      out.col_.push_back(c);
      out.values_.push_back(c == i ? cplx(acc[c].real(), 0.0) : acc[c]);
    }
    out.row_ptr_[i + 1] = out.col_.size();
  }
  out.hermitian_ = true;
  return out;
}

/// Matrix Market coordinate export (complex general, 1-based indices).
inline void write_matrix_market(std::ostream& os, SparseMatrix const& a) {
  os << "%%MatrixMarket matrix coordinate complex general\n";
  os << a.rows() << ' ' << a.cols() << ' ' << a.nonzeros() << '\n';
  auto const& ptr = a.row_ptr();
  auto const& col = a.col_idx();
  auto const& val = a.values();
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t t = ptr[r]; t < ptr[r + 1]; ++t)
      os << r + 1 << ' ' << col[t] + 1 << ' ' << format_double(val[t].real()) << ' ' << format_double(val[t].imag()) << '\n';
}

} // namespace dbarlab
