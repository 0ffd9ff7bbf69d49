#pragma once

// Finite-difference discretization of the weighted dbar-complex on a
// truncated uniform grid of C^n = R^{2n}.
//
// Axes are ordered (x1, y1, ..., xn, yn); point indices are row-major with x1
// slowest. Differences are second-order central with zero extension outside
// the box, so compactly supported forms see no boundary.

#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dbarlab/forms.hpp"
#include "dbarlab/weights.hpp"

namespace dbarlab {

class SizeError : public std::length_error {
public:
  using std::length_error::length_error;
};

inline constexpr std::size_t default_max_entries = std::size_t{1} << 27;

class Grid {
public:
  Grid() = default;
  Grid(std::size_t n, double R, std::size_t m, std::size_t max_entries = default_max_entries) : n_(n), R_(R), m_(m) {
    if (n < 1) throw std::invalid_argument("grid: n must be >= 1");
    if (!(R > 0.0)) throw std::invalid_argument("grid: R must be positive");
    if (m < 8) throw std::invalid_argument("grid: m must be >= 8");
    h_ = 2.0 * R / static_cast<double>(m - 1);
    points_ = 1;
    for (std::size_t a = 0; a < 2 * n; ++a) {
      if (points_ > max_entries / m) throw SizeError("grid: " + std::to_string(m) + "^" + std::to_string(2 * n) + " points exceed the memory bound");
      points_ *= m;
    }
    max_entries_ = max_entries;
  }

  std::size_t n() const noexcept { return n_; }
  double R() const noexcept { return R_; }
  std::size_t m() const noexcept { return m_; }
  double h() const noexcept { return h_; }
  std::size_t axes() const noexcept { return 2 * n_; }
  std::size_t points() const noexcept { return points_; }
  std::size_t max_entries() const noexcept { return max_entries_; }
  /// h^{2n}, the quadrature weight of one cell.
  double cell_volume() const { return std::pow(h_, static_cast<double>(2 * n_)); }

  double coord(std::size_t i) const noexcept { return -R_ + static_cast<double>(i) * h_; }
  std::size_t stride(std::size_t axis) const noexcept {
    std::size_t s = 1;
    for (std::size_t a = axis + 1; a < 2 * n_; ++a) s *= m_;
    return s;
  }
  std::size_t axis_index(std::size_t point, std::size_t axis) const noexcept { return (point / stride(axis)) % m_; }

  Point point(std::size_t idx) const {
    Point z(n_);
    for (std::size_t j = 0; j < n_; ++j) z[j] = cplx(coord(axis_index(idx, 2 * j)), coord(axis_index(idx, 2 * j + 1)));
    return z;
  }
  /// max_a |coordinate_a| at a point (the sup-norm of its real coordinates).
  double sup_coord(std::size_t idx) const {
    double s = 0.0;
    for (std::size_t a = 0; a < 2 * n_; ++a) s = std::max(s, std::abs(coord(axis_index(idx, a))));
    return s;
  }

  friend bool operator==(Grid const& a, Grid const& b) {
    return a.n_ == b.n_ && a.R_ == b.R_ && a.m_ == b.m_;
  }

private:
  std::size_t n_ = 1;
  double R_ = 1.0;
  std::size_t m_ = 8;
  double h_ = 0.0;
  std::size_t points_ = 0;
  std::size_t max_entries_ = default_max_entries;
};

inline Grid make_grid(std::size_t n, double R, std::size_t m, std::size_t max_entries = default_max_entries) {
  return Grid(n, R, m, max_entries);
}

/// Coefficients of a (0,q)-form; component-major (multi-index rank), then point.
class GridForm {
public:
  GridForm(Grid const& g, std::size_t q) : grid_(g), q_(q), components_(binomial(g.n(), q)) {
    if (components_ > 0 && g.points() > g.max_entries() / components_)
      throw SizeError("grid form: C(n,q) * points exceeds the memory bound");
    data_.assign(components_ * g.points(), cplx(0.0));
  }

  Grid const& grid() const noexcept { return grid_; }
  std::size_t q() const noexcept { return q_; }
  std::size_t components() const noexcept { return components_; }
  std::span<cplx> component(std::size_t rank) { return {data_.data() + rank * grid_.points(), grid_.points()}; }
  std::span<cplx const> component(std::size_t rank) const { return {data_.data() + rank * grid_.points(), grid_.points()}; }
  std::vector<cplx>& data() noexcept { return data_; }
  std::vector<cplx> const& data() const noexcept { return data_; }
  cplx& at(std::size_t rank, std::size_t point) { return data_[rank * grid_.points() + point]; }
  cplx at(std::size_t rank, std::size_t point) const { return data_[rank * grid_.points() + point]; }

  GridForm& operator+=(GridForm const& o) {
    check_same(o);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }
  GridForm& operator-=(GridForm const& o) {
    check_same(o);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
  }
  GridForm& operator*=(cplx s) {
    for (auto& v : data_) v *= s;
    return *this;
  }

private:
  void check_same(GridForm const& o) const {
    if (!(o.grid_ == grid_) || o.q_ != q_) throw std::invalid_argument("grid form: shape mismatch");
  }

  Grid grid_;
  std::size_t q_;
  std::size_t components_;
  std::vector<cplx> data_;
};

/// phi, d phi/dz_k and e^{-phi} tabulated on the grid.
struct WeightField {
  Grid grid;
  std::vector<double> phi;
  std::vector<std::vector<cplx>> dphi; // dphi[k][point] = d phi / d z_{k+1}
  std::vector<double> density;         // e^{-phi}
};

inline WeightField tabulate_weight(WeightExpr const& w, Grid const& g) {
  if (w.dim != g.n()) throw DimensionError("tabulate_weight: weight and grid dimensions differ");
  auto const grad = complex_gradient(w);
  WeightField f{g, std::vector<double>(g.points()), std::vector<std::vector<cplx>>(g.n(), std::vector<cplx>(g.points())),
                std::vector<double>(g.points())};
  for (std::size_t p = 0; p < g.points(); ++p) {
    Point const z = g.point(p);
    double const v = w.evaluate(z).real();
    f.phi[p] = v;
    f.density[p] = std::exp(-v);
    for (std::size_t k = 0; k < g.n(); ++k) f.dphi[k][p] = grad[k].evaluate(z);
  }
  return f;
}

// ---------------------------------------------------------------------------
// difference operators

/// dst = D_axis src (central, zero extension).
inline void axis_difference(Grid const& g, std::size_t axis, std::span<cplx const> src, std::span<cplx> dst, cplx scale = 1.0) {
  std::size_t const inner = g.stride(axis);
  std::size_t const m = g.m();
  std::size_t const outer = g.points() / (inner * m);
  cplx const c = scale / (2.0 * g.h());
  for (std::size_t o = 0; o < outer; ++o) {
    std::size_t const base = o * m * inner;
    for (std::size_t i = 0; i < m; ++i) {
      cplx* out = dst.data() + base + i * inner;
      cplx const* up = i + 1 < m ? src.data() + base + (i + 1) * inner : nullptr;
      cplx const* dn = i > 0 ? src.data() + base + (i - 1) * inner : nullptr;
      for (std::size_t t = 0; t < inner; ++t) {
        cplx d = 0.0;
        if (up) d += up[t];
        if (dn) d -= dn[t];
        out[t] += c * d;
      }
    }
  }
}

/// dst += dbar_j src = 1/2 (D_xj + i D_yj) src, j = 1..n.
inline void add_dbar_j(Grid const& g, std::size_t j, std::span<cplx const> src, std::span<cplx> dst, cplx scale = 1.0) {
  axis_difference(g, 2 * (j - 1), src, dst, 0.5 * scale);
  axis_difference(g, 2 * (j - 1) + 1, src, dst, cplx(0.0, 0.5) * scale);
}

/// dst += d_j src = 1/2 (D_xj - i D_yj) src.
inline void add_d_j(Grid const& g, std::size_t j, std::span<cplx const> src, std::span<cplx> dst, cplx scale = 1.0) {
  axis_difference(g, 2 * (j - 1), src, dst, 0.5 * scale);
  axis_difference(g, 2 * (j - 1) + 1, src, dst, cplx(0.0, -0.5) * scale);
}

inline std::vector<cplx> dbar_j(Grid const& g, std::size_t j, std::span<cplx const> src) {
  std::vector<cplx> out(src.size());
  add_dbar_j(g, j, src, out);
  return out;
}

/// delta_k f = d_k f - (d phi / d z_k) f
inline std::vector<cplx> delta_k(WeightField const& wf, std::size_t k, std::span<cplx const> src) {
  std::vector<cplx> out(src.size());
  add_d_j(wf.grid, k, src, out);
  for (std::size_t p = 0; p < out.size(); ++p) out[p] -= wf.dphi[k - 1][p] * src[p];
  return out;
}

/// dbar u = sum'_J sum_j dbar_j u_J dzbar_j ^ dzbar_J. Degree n maps to the
/// empty (0, n+1)-form.
inline GridForm dbar(GridForm const& u) {
  Grid const& g = u.grid();
  GridForm out(g, u.q() + 1);
  if (out.components() == 0) return out;
  MultiIndexTable const tq(g.n(), u.q()), tp(g.n(), u.q() + 1);
  for (std::size_t r = 0; r < tq.size(); ++r) {
    for (std::size_t j = 1; j <= g.n(); ++j) {
      auto w = wedge_insert(j, tq[r]);
      if (!w) continue;
      add_dbar_j(g, j, u.component(r), out.component(tp.rank(w->tuple)), static_cast<double>(w->sign));
    }
  }
  return out;
}

/// dbar*_phi u = - sum'_K sum_k delta_k u_{kK} dzbar_K.
inline GridForm dbar_star(GridForm const& u, WeightField const& wf) {
  Grid const& g = u.grid();
  if (u.q() < 1) throw std::invalid_argument("dbar_star: degree must be >= 1");
  if (!(wf.grid == g)) throw std::invalid_argument("dbar_star: weight field lives on a different grid");
  GridForm out(g, u.q() - 1);
  MultiIndexTable const tq(g.n(), u.q()), tm(g.n(), u.q() - 1);
  for (std::size_t r = 0; r < tm.size(); ++r) {
    auto dst = out.component(r);
    for (std::size_t k = 1; k <= g.n(); ++k) {
      auto w = wedge_insert(k, tm[r]);
      if (!w) continue;
      auto const src = u.component(tq.rank(w->tuple));
      double const s = -static_cast<double>(w->sign);
      add_d_j(g, k, src, dst, s);
      auto const& dphi = wf.dphi[k - 1];
      for (std::size_t p = 0; p < g.points(); ++p) dst[p] -= s * dphi[p] * src[p];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// weighted quadrature

inline cplx inner(GridForm const& u, GridForm const& v, WeightField const& wf) {
  if (!(u.grid() == v.grid()) || u.q() != v.q()) throw std::invalid_argument("inner: shape mismatch");
  std::size_t const P = u.grid().points();
  cplx s = 0.0;
  for (std::size_t r = 0; r < u.components(); ++r) {
    auto const a = u.component(r), b = v.component(r);
    for (std::size_t p = 0; p < P; ++p) s += wf.density[p] * a[p] * std::conj(b[p]);
  }
  return s * u.grid().cell_volume();
}

inline double norm_sq(GridForm const& u, WeightField const& wf) {
  std::size_t const P = u.grid().points();
  double s = 0.0;
  for (std::size_t r = 0; r < u.components(); ++r) {
    auto const a = u.component(r);
    for (std::size_t p = 0; p < P; ++p) s += wf.density[p] * std::norm(a[p]);
  }
  return s * u.grid().cell_volume();
}

/// Weighted L^2 norm of a single scalar field.
inline double scalar_norm_sq(std::span<cplx const> f, WeightField const& wf) {
  double s = 0.0;
  for (std::size_t p = 0; p < f.size(); ++p) s += wf.density[p] * std::norm(f[p]);
  return s * wf.grid.cell_volume();
}

/// Q_phi(u, v) = (dbar u, dbar v)_phi + (dbar* u, dbar* v)_phi
inline cplx q_form(GridForm const& u, GridForm const& v, WeightField const& wf) {
  cplx s = 0.0;
  GridForm const du = dbar(u), dv = dbar(v);
  if (du.components() > 0) s += inner(du, dv, wf);
  s += inner(dbar_star(u, wf), dbar_star(v, wf), wf);
  return s;
}

// ---------------------------------------------------------------------------
// test forms

/// b(t) = (1 - t^2)^3 on |t| < 1.
inline double bump_profile(double t) {
  if (std::abs(t) >= 1.0) return 0.0;
  double const s = 1.0 - t * t;
  return s * s * s;
}

struct BumpSpec {
  double support = 0.0; // half-width of the support box; 0 means 0.8 R
  int degree = 1;       // total degree of the polynomial factor (0, 1 or 2)
  std::uint64_t seed = 1;
};

/// Each component is prod_a b(x_a / support) times a polynomial in the real
/// coordinates with seeded complex Gaussian coefficients.
inline GridForm make_bump_form(Grid const& g, std::size_t q, BumpSpec const& spec) {
  GridForm u(g, q);
  double const support = spec.support > 0.0 ? spec.support : 0.8 * g.R();
  std::size_t const A = g.axes();
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  auto rc = [&] { return cplx(nd(rng), nd(rng)); };
  // coefficient layout: constant, linear (A), quadratic (A(A+1)/2)
  for (std::size_t r = 0; r < u.components(); ++r) {
    cplx const c0 = rc();
    std::vector<cplx> c1(spec.degree >= 1 ? A : 0), c2(spec.degree >= 2 ? A * (A + 1) / 2 : 0);
    for (auto& c : c1) c = rc() / support;
    for (auto& c : c2) c = rc() / (support * support);
    auto comp = u.component(r);
    std::vector<double> x(A);
    for (std::size_t p = 0; p < g.points(); ++p) {
      double b = 1.0;
      for (std::size_t a = 0; a < A && b != 0.0; ++a) {
        x[a] = g.coord(g.axis_index(p, a));
        b *= bump_profile(x[a] / support);
      }
      if (b == 0.0) continue;
      cplx poly = c0;
      for (std::size_t a = 0; a < c1.size(); ++a) poly += c1[a] * x[a];
      std::size_t t = 0;
      for (std::size_t a = 0; a < A && !c2.empty(); ++a)
        for (std::size_t c = a; c < A; ++c) poly += c2[t++] * x[a] * x[c];
      comp[p] = b * poly;
    }
  }
  return u;
}

/// Samples a scalar function of z on the grid into one component.
template <typename F>
GridForm sample_form(Grid const& g, std::size_t q, std::size_t rank, F&& f) {
  GridForm u(g, q);
  auto comp = u.component(rank);
  for (std::size_t p = 0; p < g.points(); ++p) comp[p] = f(g.point(p));
  return u;
}

// ---------------------------------------------------------------------------
// binary layout: u64 n, u64 q, f64 R, u64 m, then (re, im) f64 pairs in
// component-major order; all little-endian.

namespace detail {

template <typename T>
void put_le(std::ostream& os, T v) {
  static_assert(sizeof(T) == 8);
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
  char buf[8];
  std::memcpy(buf, &bits, 8);
  os.write(buf, 8);
}

template <typename T>
T get_le(std::istream& is) {
  char buf[8];
  if (!is.read(buf, 8)) throw std::runtime_error("grid form: truncated input");
  std::uint64_t bits;
  std::memcpy(&bits, buf, 8);
  if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
  T v;
  std::memcpy(&v, &bits, 8);
  return v;
}

} // namespace detail

inline void write_grid_form(std::ostream& os, GridForm const& u) {
  detail::put_le<std::uint64_t>(os, u.grid().n());
  detail::put_le<std::uint64_t>(os, u.q());
  detail::put_le<double>(os, u.grid().R());
  detail::put_le<std::uint64_t>(os, u.grid().m());
  for (auto const& c : u.data()) {
    detail::put_le<double>(os, c.real());
    detail::put_le<double>(os, c.imag());
  }
}

inline GridForm read_grid_form(std::istream& is) {
  auto const n = detail::get_le<std::uint64_t>(is);
  auto const q = detail::get_le<std::uint64_t>(is);
  auto const R = detail::get_le<double>(is);
  auto const m = detail::get_le<std::uint64_t>(is);
  GridForm u(Grid(n, R, m), q);
  for (auto& c : u.data()) {
    double const re = detail::get_le<double>(is);
    double const im = detail::get_le<double>(is);
    c = cplx(re, im);
  }
  for (auto const& c : u.data())
    if (std::isnan(c.real()) || std::isnan(c.imag())) throw std::runtime_error("grid form: NaN coefficient");
  return u;
}

} // namespace dbarlab
