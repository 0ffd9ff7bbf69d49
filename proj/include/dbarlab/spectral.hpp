#pragma once

// Discrete weighted box operator and its low-lying spectrum.
//
// Everything here works in the frame v = h^n e^{-phi/2} u, where the weighted
// inner product becomes the plain l2 product. The difference operators are
// conjugated, Dt = e^{-phi/2} Dbar e^{phi/2}, discretized either exactly
// (neighbour factors e^{(phi(y)-phi(x))/2}; consistent with dbar on the grid,
// but only resolved while h |grad phi| is small) or in gauge form
// Dt_j = Dbar_j + (1/2) dphi/dzbar_j (polynomial coefficients, well scaled for
// fast-growing weights). The box is assembled as
//
//   A = B1* B1 + C C*,   B1 = Dt_q  (inputs on the domain, outputs anywhere),
//                        C  = Dt_{q-1} (outputs on the domain, inputs anywhere)
//
// which is Hermitian positive semidefinite by construction. Outputs of B1 and
// inputs of C live on a one-cell halo around the domain, so the box of a
// smaller domain is a principal submatrix of the box of a larger one.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <memory>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dbarlab/calculus.hpp"
#include "dbarlab/io.hpp"
#include "dbarlab/iterative.hpp"
#include "dbarlab/levi.hpp"
#include "dbarlab/sparse.hpp"

namespace dbarlab {

enum class DomainShape { box, ball };

inline char const* to_string(DomainShape s) { return s == DomainShape::box ? "box" : "ball"; }

/// Active grid points plus the halo lattice with m+2 points per axis.
class SpectralDomain {
public:
  SpectralDomain(Grid const& g, DomainShape shape = DomainShape::box) : grid_(g), shape_(shape), em_(g.m() + 2) {
    std::size_t const A = g.axes();
    ext_points_ = 1;
    for (std::size_t a = 0; a < A; ++a) ext_points_ *= em_;
    ext_stride_.assign(A, 1);
    for (std::size_t a = A - 1; a-- > 0;) ext_stride_[a] = ext_stride_[a + 1] * em_;
    active_of_ext_.assign(ext_points_, -1);
    double const r2 = g.R() * g.R() * (1.0 + 1e-12);
    for (std::size_t p = 0; p < g.points(); ++p) {
      if (shape == DomainShape::ball) {
        Point const z = g.point(p);
        double s = 0.0;
        for (auto const& c : z) s += std::norm(c);
        if (s > r2) continue;
      }
      std::size_t const e = ext_of_grid(p);
      active_of_ext_[e] = static_cast<std::int64_t>(grid_of_active_.size());
      grid_of_active_.push_back(p);
      ext_of_active_.push_back(e);
    }
  }

  Grid const& grid() const noexcept { return grid_; }
  DomainShape shape() const noexcept { return shape_; }
  std::size_t active() const noexcept { return grid_of_active_.size(); }
  std::size_t ext_points() const noexcept { return ext_points_; }
  std::size_t ext_m() const noexcept { return em_; }
  std::size_t ext_stride(std::size_t axis) const noexcept { return ext_stride_[axis]; }
  std::int64_t active_of_ext(std::size_t e) const noexcept { return active_of_ext_[e]; }
  std::size_t grid_of_active(std::size_t i) const noexcept { return grid_of_active_[i]; }
  std::size_t ext_of_active(std::size_t i) const noexcept { return ext_of_active_[i]; }

  std::size_t ext_of_grid(std::size_t p) const {
    std::size_t e = 0;
    for (std::size_t a = 0; a < grid_.axes(); ++a) e += (grid_.axis_index(p, a) + 1) * ext_stride_[a];
    return e;
  }
  /// -1 for halo points
  std::int64_t grid_of_ext(std::size_t e) const {
    std::size_t p = 0;
    for (std::size_t a = 0; a < grid_.axes(); ++a) {
      std::size_t const i = (e / ext_stride_[a]) % em_;
      if (i == 0 || i == em_ - 1) return -1;
      p += (i - 1) * grid_.stride(a);
    }
    return static_cast<std::int64_t>(p);
  }
  std::size_t ext_axis_index(std::size_t e, std::size_t axis) const { return (e / ext_stride_[axis]) % em_; }
  Point ext_point(std::size_t e) const {
    Point z(grid_.n());
    auto coord = [&](std::size_t i) { return -grid_.R() + (static_cast<double>(i) - 1.0) * grid_.h(); };
    for (std::size_t j = 0; j < grid_.n(); ++j)
      z[j] = cplx(coord(ext_axis_index(e, 2 * j)), coord(ext_axis_index(e, 2 * j + 1)));
    return z;
  }

private:
  Grid grid_;
  DomainShape shape_;
  std::size_t em_;
  std::size_t ext_points_ = 0;
  std::vector<std::size_t> ext_stride_;
  std::vector<std::int64_t> active_of_ext_;
  std::vector<std::size_t> grid_of_active_, ext_of_active_;
};

enum class Discretization { conjugated, gauge };

inline char const* to_string(Discretization d) { return d == Discretization::conjugated ? "conjugated" : "gauge"; }

/// phi on the halo lattice.
inline std::vector<double> tabulate_phi_ext(WeightExpr const& w, SpectralDomain const& d) {
  if (w.dim != d.grid().n()) throw DimensionError("spectral: weight and grid dimensions differ");
  std::vector<double> phi(d.ext_points());
  for (std::size_t e = 0; e < phi.size(); ++e) phi[e] = w.evaluate(d.ext_point(e)).real();
  return phi;
}

/// (1/2) dphi/dzbar_j on the halo lattice, stored [j][e].
inline std::vector<std::vector<cplx>> tabulate_gauge_ext(WeightExpr const& w, SpectralDomain const& d) {
  auto const grad = complex_gradient(w);
  std::vector<std::vector<cplx>> out(w.dim, std::vector<cplx>(d.ext_points()));
  for (std::size_t e = 0; e < d.ext_points(); ++e) {
    Point const z = d.ext_point(e);
    for (std::size_t j = 0; j < w.dim; ++j) out[j][e] = 0.5 * std::conj(grad[j].evaluate(z));
  }
  return out;
}

namespace detail {

// Conjugated Dt_q with rows/cols restricted to ext points where the maps are
// non-negative. Row = rank(L) * out_count + out_map, col = rank(J) * in_count + in_map.
// With a non-null gauge table the gauge form is used and phi is ignored.
inline SparseMatrix build_dtilde(SpectralDomain const& d, std::vector<double> const& phi, std::size_t q,
                                 std::vector<std::int64_t> const& in_map, std::size_t in_count,
                                 std::vector<std::int64_t> const& out_map, std::size_t out_count,
                                 std::vector<std::vector<cplx>> const* gauge = nullptr) {
  std::size_t const n = d.grid().n();
  MultiIndexTable const tin(n, q), tout(n, q + 1);
  std::size_t const rows = tout.size() * out_count, cols = tin.size() * in_count;
  if (cols > d.grid().max_entries() || rows > 4 * d.grid().max_entries())
    throw SizeError("spectral: operator exceeds the memory bound");
  TripletBuilder tb(rows, cols);
  double const inv2h = 1.0 / (2.0 * d.grid().h());
  std::size_t const em = d.ext_m();
  for (std::size_t e = 0; e < d.ext_points(); ++e) {
    if (out_map[e] < 0) continue;
    for (std::size_t L = 0; L < tout.size(); ++L) {
      std::size_t const row = L * out_count + static_cast<std::size_t>(out_map[e]);
      for (std::size_t pos = 0; pos < q + 1; ++pos) {
        std::size_t const j = tout[L][pos];
        MultiIndex K = tout[L];
        K.erase(K.begin() + static_cast<std::ptrdiff_t>(pos));
        double const sign = pos % 2 == 0 ? 1.0 : -1.0; // dzbar_j ^ dzbar_K = (-1)^pos dzbar_L
        std::size_t const colblock = tin.rank(K) * in_count;
        if (gauge && in_map[e] >= 0) tb.add(row, colblock + static_cast<std::size_t>(in_map[e]), sign * (*gauge)[j - 1][e]);
        for (std::size_t ax = 0; ax < 2; ++ax) {
          std::size_t const axis = 2 * (j - 1) + ax;
          cplx const c = ax == 0 ? cplx(0.5) : cplx(0.0, 0.5);
          std::size_t const i = d.ext_axis_index(e, axis);
          std::size_t const st = d.ext_stride(axis);
          for (int s : {+1, -1}) {
            if ((s > 0 && i + 1 >= em) || (s < 0 && i == 0)) continue;
            std::size_t const nb = s > 0 ? e + st : e - st;
            if (in_map[nb] < 0) continue;
            if (gauge) {
              tb.add(row, colblock + static_cast<std::size_t>(in_map[nb]), sign * c * (s * inv2h));
              continue;
            }
            double const ex = 0.5 * (phi[nb] - phi[e]);
            if (ex > 340.0) throw OverflowError("spectral: weight varies too fast across one cell (exponent " + std::to_string(ex) + ")");
            tb.add(row, colblock + static_cast<std::size_t>(in_map[nb]), sign * c * (s * inv2h * std::exp(ex)));
          }
        }
      }
    }
  }
  return tb.build();
}

inline std::vector<std::int64_t> all_ext_map(std::size_t count) {
  std::vector<std::int64_t> m(count);
  for (std::size_t i = 0; i < count; ++i) m[i] = static_cast<std::int64_t>(i);
  return m;
}

inline std::vector<std::int64_t> active_map(SpectralDomain const& d) {
  std::vector<std::int64_t> m(d.ext_points());
  for (std::size_t e = 0; e < m.size(); ++e) m[e] = d.active_of_ext(e);
  return m;
}

} // namespace detail

/// Conjugated Dt_q: q-forms on the domain -> (q+1)-forms on the halo lattice.
inline SparseMatrix assemble_dbar(WeightExpr const& w, SpectralDomain const& d, std::size_t q,
                                  Discretization disc = Discretization::conjugated) {
  auto const phi = tabulate_phi_ext(w, d);
  std::vector<std::vector<cplx>> gauge;
  if (disc == Discretization::gauge) gauge = tabulate_gauge_ext(w, d);
  return detail::build_dtilde(d, phi, q, detail::active_map(d), d.active(), detail::all_ext_map(d.ext_points()),
                              d.ext_points(), disc == Discretization::gauge ? &gauge : nullptr);
}

/// The assembled box together with the frame data needed to map forms in and out.
struct BoxOperator {
  SparseMatrix matrix;
  std::shared_ptr<SpectralDomain const> domain;
  std::size_t q = 1;
  Discretization discretization = Discretization::conjugated;
  std::vector<double> phi_ext;
  SparseMatrix lower; // C = Dt_{q-1} with outputs on the domain (empty for q = 0)
  double norm = 0.0;  // ||A||_inf, an upper bound for the spectral norm

  std::size_t dimension() const noexcept { return matrix.rows(); }
};

inline BoxOperator assemble_box(WeightExpr const& w, SpectralDomain const& d, std::size_t q,
                                Discretization disc = Discretization::conjugated) {
  std::size_t const n = d.grid().n();
  if (q > n) throw std::invalid_argument("assemble_box: q must be <= n");
  BoxOperator box;
  box.domain = std::make_shared<SpectralDomain const>(d);
  box.q = q;
  box.discretization = disc;
  box.phi_ext = tabulate_phi_ext(w, d);
  std::vector<std::vector<cplx>> gauge_table;
  if (disc == Discretization::gauge) gauge_table = tabulate_gauge_ext(w, d);
  auto const* gauge = disc == Discretization::gauge ? &gauge_table : nullptr;
  auto const act = detail::active_map(d);
  auto const all = detail::all_ext_map(d.ext_points());
  std::size_t const dim = binomial(n, q) * d.active();
  SparseMatrix a(dim, dim);
  bool have = false;
  if (q < n) {
    a = gram(detail::build_dtilde(d, box.phi_ext, q, act, d.active(), all, d.ext_points(), gauge));
    have = true;
  }
  if (q >= 1) {
    box.lower = detail::build_dtilde(d, box.phi_ext, q - 1, all, d.ext_points(), act, d.active(), gauge);
    SparseMatrix lo = gram(box.lower.adjoint());
    a = have ? a + lo : std::move(lo);
  }
  if (!a.all_finite()) throw OverflowError("assemble_box: non-finite entries");
  a.set_hermitian(true);
  box.norm = a.norm_inf();
  box.matrix = std::move(a);
  return box;
}

inline BoxOperator assemble_box(WeightExpr const& w, Grid const& g, std::size_t q, DomainShape shape = DomainShape::box,
                                Discretization disc = Discretization::conjugated) {
  return assemble_box(w, SpectralDomain(g, shape), q, disc);
}

// ---------------------------------------------------------------------------
// frame changes

inline double frame_scale(Grid const& g) { return std::pow(g.h(), static_cast<double>(g.n())); }

/// u (weighted frame on the grid) -> v = h^n e^{-phi/2} u on the active dofs.
inline Vec to_frame(BoxOperator const& box, GridForm const& u) {
  SpectralDomain const& d = *box.domain;
  if (!(u.grid() == d.grid()) || u.q() != box.q) throw std::invalid_argument("to_frame: form does not match the operator");
  double const hn = frame_scale(d.grid());
  Vec v(box.dimension());
  for (std::size_t r = 0; r < u.components(); ++r)
    for (std::size_t i = 0; i < d.active(); ++i)
      v[r * d.active() + i] = hn * std::exp(-0.5 * box.phi_ext[d.ext_of_active(i)]) * u.at(r, d.grid_of_active(i));
  return v;
}

inline GridForm from_frame(BoxOperator const& box, std::span<cplx const> v) {
  SpectralDomain const& d = *box.domain;
  GridForm u(d.grid(), box.q);
  double const hn = frame_scale(d.grid());
  for (std::size_t r = 0; r < u.components(); ++r)
    for (std::size_t i = 0; i < d.active(); ++i)
      u.at(r, d.grid_of_active(i)) = std::exp(0.5 * box.phi_ext[d.ext_of_active(i)]) * v[r * d.active() + i] / hn;
  return u;
}

// ---------------------------------------------------------------------------
// eigenvalues

enum class EigenMode { direct, shift_invert, lobpcg };

struct EigenOptions {
  double tol = 1e-6;
  std::size_t max_iter = 5000;
  std::uint64_t seed = 1;
  EigenMode mode = EigenMode::direct;
  double inner_tol = 1e-11; // CG tolerance for shift-invert solves
};

struct EigenPairs {
  std::vector<double> values; // ascending
  std::vector<Vec> vectors;
  std::vector<double> residuals; // ||A v - lambda v||
  double norm = 0.0;
  std::size_t iterations = 0;
  std::size_t inner_iterations = 0;
  bool converged = false;
};

/// Lowest k eigenpairs of a Hermitian PSD sparse matrix.
inline EigenPairs lowest_eigenvalues(SparseMatrix const& a, std::size_t k, EigenOptions const& opt = {}) {
  if (k > 32) throw std::invalid_argument("lowest_eigenvalues: k must be <= 32");
  if (k > a.rows()) throw std::invalid_argument("lowest_eigenvalues: k exceeds the dimension");
  EigenPairs out;
  out.norm = a.norm_inf();
  LanczosOptions lo;
  lo.tol = opt.tol;
  lo.max_iter = opt.max_iter;
  lo.seed = opt.seed;
  if (opt.mode == EigenMode::lobpcg) {
    LobpcgOptions bo;
    bo.tol = opt.tol;
    bo.max_iter = opt.max_iter;
    bo.seed = opt.seed;
    auto br = lobpcg_lowest(a, k, bo);
    out.values = std::move(br.values);
    out.vectors = std::move(br.vectors);
    out.residuals = std::move(br.residuals);
    out.iterations = br.iterations;
    out.converged = br.converged;
    return out;
  }
  LanczosResult lr;
  if (opt.mode == EigenMode::direct) {
    LinearOperator op = [&](std::span<cplx const> x, std::span<cplx> y) { a.multiply(x, y); };
    lr = lanczos_extremal(op, a.rows(), k, out.norm, lo);
    out.values = lr.values;
  } else {
    CgOptions co;
    co.tol = opt.inner_tol;
    LinearOperator op = [&](std::span<cplx const> x, std::span<cplx> y) {
      auto r = conjugate_gradient(a, x, co);
      out.inner_iterations += r.iterations;
      if (!r.converged) throw StagnationError(r.relative_residual, r.iterations);
      std::copy(r.x.begin(), r.x.end(), y.begin());
    };
    lo.largest = true;
    lo.relative_to_value = true;
    lr = lanczos_extremal(op, a.rows(), k, 1.0, lo);
    for (double t : lr.values) out.values.push_back(1.0 / t);
  }
  out.vectors = std::move(lr.vectors);
  out.iterations = lr.iterations;
  Vec av(a.rows());
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    a.multiply(out.vectors[i], av);
    axpy(-out.values[i], out.vectors[i], av);
    out.residuals.push_back(norm2(av));
  }
  out.converged = lr.converged;
  for (double r : out.residuals)
    if (!(r <= opt.tol * out.norm)) out.converged = false;
  return out;
}

// ---------------------------------------------------------------------------
// compactness diagnostic

enum class TrendClass { diverging, plateau, inconclusive };

inline char const* to_string(TrendClass t) {
  switch (t) {
  case TrendClass::diverging: return "DIVERGING";
  case TrendClass::plateau: return "PLATEAU";
  case TrendClass::inconclusive: return "INCONCLUSIVE";
  }
  return "INCONCLUSIVE";
}

struct DiagnosticOptions {
  double m_per_R = 4.0; // m = m_per_R * R + 1, so h = 2 / m_per_R at every radius
  std::size_t k = 4;
  std::uint64_t seed = 1;
  double growth = 1.3;  // DIVERGING threshold on the k-th eigenvalue
  double plateau = 0.05; // PLATEAU threshold on the first k eigenvalues
  double tol = 1e-3;     // residual relative to the eigenvalue; bounds its error by 0.1%
  std::size_t max_iter = 400; // per radius; resolved weights need about half of this
  DomainShape shape = DomainShape::ball;
  EigenMode mode = EigenMode::lobpcg;
  Discretization discretization = Discretization::conjugated;
};

struct SpectrumRecord {
  double R = 0.0;
  std::size_t m = 0;
  double h = 0.0;
  std::size_t dimension = 0;
  std::vector<double> values;
  std::vector<double> residuals;
  double norm = 0.0;
  bool converged = false;
  std::string failure;
};

struct SpectrumReport {
  std::string weight;
  std::size_t q = 1;
  std::size_t k = 0;
  std::vector<SpectrumRecord> records;
  TrendClass classification = TrendClass::inconclusive;
};

/// The documented threshold predicates on the last two radii.
inline TrendClass classify_trend(std::vector<SpectrumRecord> const& recs, std::size_t k, double growth, double plateau) {
  if (recs.size() < 2 || k == 0) return TrendClass::inconclusive;
  auto const& a = recs[recs.size() - 2];
  auto const& b = recs.back();
  if (!a.converged || !b.converged || a.values.size() < k || b.values.size() < k) return TrendClass::inconclusive;
  if (a.values[k - 1] > 0.0 && b.values[k - 1] >= growth * a.values[k - 1]) return TrendClass::diverging;
  bool flat = true;
  for (std::size_t i = 0; i < k; ++i) {
    double const base = std::max(std::abs(a.values[i]), std::numeric_limits<double>::min());
    if (!(std::abs(b.values[i] - a.values[i]) < plateau * base)) flat = false;
  }
  return flat ? TrendClass::plateau : TrendClass::inconclusive;
}

inline SpectrumReport compactness_diagnostic(WeightExpr const& w, std::string const& weight_id, std::size_t q,
                                             std::vector<double> const& radii, DiagnosticOptions const& opt = {}) {
  if (radii.size() < 3) throw std::invalid_argument("compactness_diagnostic: need at least 3 radii");
  for (std::size_t i = 1; i < radii.size(); ++i)
    if (!(radii[i] > radii[i - 1])) throw std::invalid_argument("compactness_diagnostic: radii must increase");
  SpectrumReport rep{weight_id, q, opt.k, {}, TrendClass::inconclusive};
  for (double R : radii) {
    SpectrumRecord rec;
    rec.R = R;
    rec.m = static_cast<std::size_t>(std::lround(opt.m_per_R * R)) + 1;
    try {
      Grid const g(w.dim, R, rec.m);
      rec.h = g.h();
      BoxOperator const box = assemble_box(w, SpectralDomain(g, opt.shape), q, opt.discretization);
      rec.dimension = box.dimension();
      rec.norm = box.norm;
      EigenOptions eo;
      eo.tol = opt.tol;
      eo.seed = opt.seed;
      eo.mode = opt.mode;
      eo.max_iter = opt.max_iter;
      auto const ep = lowest_eigenvalues(box.matrix, std::min(opt.k, box.dimension()), eo);
      rec.values = ep.values;
      rec.residuals = ep.residuals;
      rec.converged = ep.converged;
      if (!ep.converged) rec.failure = "eigensolver did not converge within " + std::to_string(opt.max_iter) + " iterations";
    } catch (std::exception const& e) {
      rec.converged = false;
      rec.failure = e.what();
    }
    rep.records.push_back(std::move(rec));
  }
  rep.classification = classify_trend(rep.records, opt.k, opt.growth, opt.plateau);
  return rep;
}

inline void write_csv(std::ostream& os, SpectrumReport const& rep) {
  os << "weight,q,R,m,k";
  for (std::size_t i = 1; i <= rep.k; ++i) os << ",lambda_" << i;
  for (std::size_t i = 1; i <= rep.k; ++i) os << ",residual_" << i;
  os << ",classification\n";
  for (auto const& r : rep.records) {
    os << rep.weight << ',' << rep.q << ',' << format_double(r.R) << ',' << r.m << ',' << rep.k;
    for (std::size_t i = 0; i < rep.k; ++i) os << ',' << (i < r.values.size() ? format_double(r.values[i]) : "nan");
    for (std::size_t i = 0; i < rep.k; ++i) os << ',' << (i < r.residuals.size() ? format_double(r.residuals[i]) : "nan");
    os << ',' << to_string(rep.classification) << '\n';
  }
  for (auto const& r : rep.records)
    if (!r.failure.empty()) os << "# R=" << format_double(r.R) << " failure: " << r.failure << '\n';
  os << "# classification: " << to_string(rep.classification) << '\n';
}

// ---------------------------------------------------------------------------
// Neumann operator and canonical solution

struct NeumannResult {
  GridForm u;
  double relative_residual = 0.0;
  std::size_t iterations = 0;
};

/// u ~ N f: CG on A x = b in the conjugated frame, then back-transform.
inline NeumannResult solve_neumann(BoxOperator const& box, GridForm const& f, double tol = 1e-8, std::size_t max_iter = 20000) {
  Vec const b = to_frame(box, f);
  CgOptions co;
  co.tol = tol;
  co.max_iter = max_iter;
  auto r = conjugate_gradient(box.matrix, b, co);
  if (!r.converged) throw StagnationError(r.relative_residual, r.iterations);
  return {from_frame(box, r.x), r.relative_residual, r.iterations};
}

/// Solve in the frame directly (for callers that already hold frame vectors).
inline CgResult solve_neumann_frame(BoxOperator const& box, std::span<cplx const> b, double tol = 1e-8, std::size_t max_iter = 20000) {
  CgOptions co;
  co.tol = tol;
  co.max_iter = max_iter;
  auto r = conjugate_gradient(box.matrix, b, co);
  if (!r.converged) throw StagnationError(r.relative_residual, r.iterations);
  return r;
}

class NotClosedError : public std::invalid_argument {
public:
  explicit NotClosedError(double measured)
      : std::invalid_argument("canonical_solution: input is not dbar-closed (||dbar f|| / ||f|| = " + std::to_string(measured) + ")"),
        measured_(measured) {}
  double measured() const noexcept { return measured_; }

private:
  double measured_;
};

struct CanonicalResult {
  GridForm u;             // (0, q-1)-form on the grid
  Vec frame;              // the same solution in the frame, on the halo lattice
  double residual = 0.0;  // ||dbar u - f||_phi / ||f||_phi
  double closedness = 0.0; // ||dbar f||_phi / ||f||_phi
  std::size_t iterations = 0;
};

/// u = dbar*_phi N f, the solution of dbar u = f orthogonal to ker dbar.
inline CanonicalResult canonical_solution(WeightExpr const& w, Grid const& g, GridForm const& f, double tol = 1e-10) {
  if (f.q() < 1) throw std::invalid_argument("canonical_solution: f must have degree >= 1");
  WeightField const wf = tabulate_weight(w, g);
  double const nf = std::sqrt(norm_sq(f, wf));
  CanonicalResult out{GridForm(g, f.q() - 1), {}, 0.0, 0.0, 0};
  if (nf == 0.0) return out;
  GridForm const df = dbar(f);
  out.closedness = df.components() > 0 ? std::sqrt(norm_sq(df, wf)) / nf : 0.0;
  if (out.closedness > 1e-6) throw NotClosedError(out.closedness);

  BoxOperator const box = assemble_box(w, SpectralDomain(g, DomainShape::box), f.q());
  auto const sol = solve_neumann_frame(box, to_frame(box, f), tol);
  out.iterations = sol.iterations;
  out.frame = box.lower.adjoint() * sol.x;

  SpectralDomain const& d = *box.domain;
  double const hn = frame_scale(g);
  std::size_t const ext = d.ext_points();
  for (std::size_t r = 0; r < out.u.components(); ++r)
    for (std::size_t e = 0; e < ext; ++e) {
      auto const p = d.grid_of_ext(e);
      if (p < 0) continue;
      out.u.at(r, static_cast<std::size_t>(p)) = std::exp(0.5 * box.phi_ext[e]) * out.frame[r * ext + e] / hn;
    }
  GridForm diff = dbar(out.u);
  diff -= f;
  out.residual = std::sqrt(norm_sq(diff, wf)) / nf;
  return out;
}

} // namespace dbarlab
