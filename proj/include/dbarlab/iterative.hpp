#pragma once

// Iterative Hermitian eigen- and linear solvers used by the spectral module.
//
// Lanczos runs with full reorthogonalization and explicit locking: converged
// Ritz pairs are deflated and the iteration restarts orthogonally to them, so
// repeated eigenvalues are found with their multiplicity. LOBPCG with diagonal
// scaling covers operators whose norm is too large for plain Lanczos.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dbarlab/sparse.hpp"

namespace dbarlab {

using Vec = std::vector<cplx>;
using LinearOperator = std::function<void(std::span<cplx const>, std::span<cplx>)>;

// Kernels spelled out in real arithmetic: std::complex products carry
// NaN-recovery branches that block vectorization.
inline cplx dot(std::span<cplx const> a, std::span<cplx const> b) {
  auto const* pa = reinterpret_cast<double const*>(a.data());
  auto const* pb = reinterpret_cast<double const*>(b.data());
  double re = 0.0, im = 0.0;
  for (std::size_t i = 0; i < 2 * a.size(); i += 2) {
    re += pa[i] * pb[i] + pa[i + 1] * pb[i + 1];
    im += pa[i] * pb[i + 1] - pa[i + 1] * pb[i];
  }
  return {re, im};
}
inline double norm2(std::span<cplx const> a) {
  auto const* pa = reinterpret_cast<double const*>(a.data());
  double s = 0.0;
  for (std::size_t i = 0; i < 2 * a.size(); ++i) s += pa[i] * pa[i];
  return std::sqrt(s);
}
inline void axpy(cplx a, std::span<cplx const> x, std::span<cplx> y) {
  auto const* px = reinterpret_cast<double const*>(x.data());
  auto* py = reinterpret_cast<double*>(y.data());
  double const ar = a.real(), ai = a.imag();
  for (std::size_t i = 0; i < 2 * x.size(); i += 2) {
    py[i] += ar * px[i] - ai * px[i + 1];
    py[i + 1] += ar * px[i + 1] + ai * px[i];
  }
}
inline void scale(std::span<cplx> x, cplx a) {
  for (auto& v : x) v *= a;
}

inline Vec random_vector(std::size_t dim, std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Vec v(dim);
  for (auto& c : v) c = cplx(nd(rng), nd(rng));
  return v;
}

/// Eigen-decomposition of the real symmetric tridiagonal matrix with diagonal
/// d and sub-diagonal e (implicit QL with Wilkinson-style shifts). Values come
/// back ascending; z(row, col) column-major in a flat vector, z[i + n*k].
struct TridiagonalEigen {
  std::vector<double> values;
  std::vector<double> vectors;
};

inline TridiagonalEigen tridiagonal_eigen(std::vector<double> d, std::vector<double> e) {
  std::size_t const n = d.size();
  std::vector<double> z(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) z[i + n * i] = 1.0;
  e.resize(n, 0.0);
  if (n > 0) e[n - 1] = 0.0;
  for (std::size_t l = 0; l < n; ++l) {
    int iter = 0;
    std::size_t m;
    do {
      for (m = l; m + 1 < n; ++m) {
        double const dd = std::abs(d[m]) + std::abs(d[m + 1]);
        if (std::abs(e[m]) <= std::numeric_limits<double>::epsilon() * dd) break;
      }
      if (m != l) {
        if (++iter > 60) throw std::runtime_error("tridiagonal_eigen: no convergence");
        double g = (d[l + 1] - d[l]) / (2.0 * e[l]);
        double r = std::hypot(g, 1.0);
        g = d[m] - d[l] + e[l] / (g + std::copysign(r, g));
        double s = 1.0, c = 1.0, p = 0.0;
        std::size_t i = m;
        bool early = false;
        while (i-- > l) {
          double f = s * e[i];
          double const b = c * e[i];
          r = std::hypot(f, g);
          e[i + 1] = r;
          if (r == 0.0) {
            d[i + 1] -= p;
            e[m] = 0.0;
            early = true;
            break;
          }
          s = f / r;
          c = g / r;
          g = d[i + 1] - p;
          r = (d[i] - g) * s + 2.0 * c * b;
          p = s * r;
          d[i + 1] = g + p;
          g = c * r - b;
          for (std::size_t k = 0; k < n; ++k) {
            f = z[k + n * (i + 1)];
            z[k + n * (i + 1)] = s * z[k + n * i] + c * f;
            z[k + n * i] = c * z[k + n * i] - s * f;
          }
        }
        if (early) continue;
        d[l] -= p;
        e[l] = g;
        e[m] = 0.0;
      }
    } while (m != l);
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return d[a] < d[b]; });
  TridiagonalEigen out{std::vector<double>(n), std::vector<double>(n * n)};
  for (std::size_t k = 0; k < n; ++k) {
    out.values[k] = d[order[k]];
    for (std::size_t i = 0; i < n; ++i) out.vectors[i + n * k] = z[i + n * order[k]];
  }
  return out;
}

struct LanczosOptions {
  double tol = 1e-6;         // residual tolerance relative to the operator norm
  std::size_t max_iter = 5000; // total operator applications
  std::size_t max_basis = 120;
  std::uint64_t seed = 1;
  bool largest = false;      // hunt the top of the spectrum instead of the bottom
  bool relative_to_value = false; // residual <= tol * |theta| instead of tol * op_norm
};

struct LanczosResult {
  std::vector<double> values; // ascending for the bottom, descending for the top
  std::vector<Vec> vectors;
  std::vector<double> residuals; // ||Op v - theta v||
  std::size_t iterations = 0;
  bool converged = false;
};

/// Extremal eigenpairs of a Hermitian operator. op_norm scales the tolerance.
inline LanczosResult lanczos_extremal(LinearOperator const& op, std::size_t dim, std::size_t k, double op_norm,
                                      LanczosOptions const& opt) {
  if (k == 0) return {{}, {}, {}, 0, true};
  if (k > dim) throw std::invalid_argument("lanczos: k exceeds the dimension");
  std::mt19937_64 rng(opt.seed);
  double const tol_norm = opt.tol * std::max(op_norm, std::numeric_limits<double>::min());
  auto threshold = [&](double theta) { return opt.relative_to_value ? opt.tol * std::abs(theta) : tol_norm; };
  auto better = [&](double a, double b) { return opt.largest ? a > b : a < b; };

  std::vector<Vec> locked;
  std::vector<double> locked_vals, locked_res;
  std::size_t iterations = 0;
  Vec start;
  int quiet_checks = 0; // consecutive verification cycles that found nothing new

  auto orthogonalize = [&](Vec& w, std::vector<Vec> const& basis) {
    for (auto const& b : basis) axpy(-dot(b, w), b, w);
  };

  while (iterations < opt.max_iter) {
    std::size_t const free_dim = dim - locked.size();
    if (free_dim == 0) break;
    bool const verifying = locked.size() >= k;
    if (verifying && quiet_checks >= 1) break;

    // start vector: random or a carried-over Ritz approximation
    Vec v = start.empty() ? random_vector(dim, rng) : start;
    start.clear();
    for (int pass = 0; pass < 2; ++pass) orthogonalize(v, locked);
    double nv = norm2(v);
    if (nv == 0.0) {
      v = random_vector(dim, rng);
      for (int pass = 0; pass < 2; ++pass) orthogonalize(v, locked);
      nv = norm2(v);
    }
    scale(v, 1.0 / nv);

    std::size_t const basis_cap = std::min(free_dim, std::max<std::size_t>(opt.max_basis, 2 * k + 10));
    std::vector<Vec> V{v};
    std::vector<double> alpha, beta;
    Vec w(dim);
    TridiagonalEigen te;
    bool invariant = false;
    for (std::size_t j = 0; j < basis_cap && iterations < opt.max_iter; ++j) {
      op(V[j], w);
      ++iterations;
      double const a = dot(V[j], w).real();
      alpha.push_back(a);
      axpy(-a, V[j], w);
      if (j > 0) axpy(-beta[j - 1], V[j - 1], w);
      for (int pass = 0; pass < 2; ++pass) {
        orthogonalize(w, locked);
        orthogonalize(w, V);
      }
      double const b = norm2(w);
      beta.push_back(b);
      std::size_t const sz = alpha.size();
      bool const last = j + 1 == basis_cap || iterations >= opt.max_iter;
      if (b <= 1e-14 * std::max(op_norm, std::abs(a))) invariant = true;
      if (invariant || last || sz % 5 == 0) {
        te = tridiagonal_eigen(alpha, std::vector<double>(beta.begin(), beta.end() - 1));
        // enough wanted-end pairs converged?
        std::size_t const need = verifying ? 1 : std::min(k - locked.size(), sz);
        bool ok = true;
        for (std::size_t t = 0; t < need && ok; ++t) {
          std::size_t const idx = opt.largest ? sz - 1 - t : t;
          if (b * std::abs(te.vectors[(sz - 1) + sz * idx]) > threshold(te.values[idx])) ok = false;
        }
        if (ok || invariant || last) break;
      }
      if (invariant) break;
      Vec nxt(w);
      scale(nxt, 1.0 / b);
      V.push_back(std::move(nxt));
    }
    std::size_t const sz = alpha.size();
    if (te.values.size() != sz) te = tridiagonal_eigen(alpha, std::vector<double>(beta.begin(), beta.end() - 1));
    double const bl = beta.back();

    auto ritz_vector = [&](std::size_t idx) {
      Vec y(dim, 0.0);
      for (std::size_t i = 0; i < sz; ++i) axpy(te.vectors[i + sz * idx], V[i], y);
      double const ny = norm2(y);
      scale(y, 1.0 / ny);
      return y;
    };

    bool found_new = false;
    for (std::size_t t = 0; t < sz; ++t) {
      std::size_t const idx = opt.largest ? sz - 1 - t : t;
      double const res = invariant ? 0.0 : bl * std::abs(te.vectors[(sz - 1) + sz * idx]);
      double const theta = te.values[idx];
      if (res > threshold(theta)) {
        start = ritz_vector(idx); // continue from the best unconverged approximation
        break;
      }
      if (verifying) {
        // only worth keeping if it beats the current k-th locked value
        std::vector<double> sorted = locked_vals;
        std::sort(sorted.begin(), sorted.end(), [&](double x, double y) { return better(x, y); });
        if (!better(theta, sorted[k - 1]) || std::abs(theta - sorted[k - 1]) <= threshold(theta)) break;
      }
      locked.push_back(ritz_vector(idx));
      locked_vals.push_back(theta);
      locked_res.push_back(res);
      found_new = true;
      if (!verifying && locked.size() >= k) break;
    }
    if (verifying) quiet_checks = found_new ? 0 : quiet_checks + 1;
  }

  LanczosResult out;
  out.iterations = iterations;
  std::vector<std::size_t> order(locked.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return better(locked_vals[a], locked_vals[b]); });
  for (std::size_t t = 0; t < std::min(k, order.size()); ++t) {
    out.values.push_back(locked_vals[order[t]]);
    out.vectors.push_back(std::move(locked[order[t]]));
    out.residuals.push_back(locked_res[order[t]]);
  }
  out.converged = out.values.size() == k;
  return out;
}

// ---------------------------------------------------------------------------
// conjugate gradients

struct CgOptions {
  double tol = 1e-8; // relative residual ||b - Ax|| / ||b||
  std::size_t max_iter = 20000;
  bool jacobi = true; // diagonal scaling
};

struct CgResult {
  Vec x;
  double relative_residual = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

class StagnationError : public std::runtime_error {
public:
  StagnationError(double achieved, std::size_t iterations)
      : std::runtime_error("cg: stagnated at relative residual " + std::to_string(achieved) + " after " +
                           std::to_string(iterations) + " iterations"),
        achieved_(achieved) {}
  double achieved() const noexcept { return achieved_; }

private:
  double achieved_;
};

/// Preconditioned CG for a Hermitian positive (semi)definite sparse matrix.
inline CgResult conjugate_gradient(SparseMatrix const& a, std::span<cplx const> b, CgOptions const& opt) {
  std::size_t const n = a.rows();
  if (b.size() != n) throw std::invalid_argument("cg: dimension mismatch");
  CgResult res{Vec(n, 0.0), 0.0, 0, true};
  double const nb = norm2(b);
  if (nb == 0.0) return res;
  std::vector<double> dinv(n, 1.0);
  if (opt.jacobi) {
    auto const d = a.diagonal_real();
    for (std::size_t i = 0; i < n; ++i) dinv[i] = d[i] > 0.0 ? 1.0 / d[i] : 1.0;
  }
  double dmax = 0.0;
  for (double d : a.diagonal_real()) dmax = std::max(dmax, std::abs(d));
  Vec r(b.begin(), b.end()), z(n), p(n), ap(n);
  // restart from the true residual when the recurrence drifts from it
  for (int restart = 0; restart < 4; ++restart) {
    for (std::size_t i = 0; i < n; ++i) z[i] = dinv[i] * r[i];
    p = z;
    double rz = dot(r, z).real();
    while (res.iterations < opt.max_iter) {
      a.multiply(p, ap);
      double const pap = dot(p, ap).real();
      // a direction the operator (numerically) annihilates: breakdown
      double const np = norm2(p);
      if (!(pap > 1e-14 * dmax * np * np)) break;
      double const alpha = rz / pap;
      axpy(alpha, p, res.x);
      axpy(-alpha, ap, r);
      ++res.iterations;
      if (norm2(r) / nb <= 0.5 * opt.tol) break;
      for (std::size_t i = 0; i < n; ++i) z[i] = dinv[i] * r[i];
      double const rz_new = dot(r, z).real();
      double const beta = rz_new / rz;
      rz = rz_new;
      for (std::size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
    }
    a.multiply(res.x, ap);
    for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - ap[i];
    res.relative_residual = norm2(r) / nb;
    res.converged = res.relative_residual <= opt.tol;
    if (res.converged || res.iterations >= opt.max_iter) break;
  }
  return res;
}

// ---------------------------------------------------------------------------
// LOBPCG

struct LobpcgOptions {
  double tol = 1e-6; // ||A x - lambda x|| <= tol * max(|lambda|, 1e-8 min_i A_ii)
  std::size_t max_iter = 3000;
  std::size_t guard = 4; // extra block columns beyond the k wanted
  std::uint64_t seed = 1;
};

struct LobpcgResult {
  std::vector<double> values;
  std::vector<Vec> vectors;
  std::vector<double> residuals;
  std::size_t iterations = 0;
  bool converged = false;
};

namespace detail {

using Block = std::vector<Vec>;

inline constexpr std::size_t block_chunk = 2048; // entries per cache tile

inline CMatrix block_gram(Block const& s, Block const& t) {
  CMatrix g(s.size(), t.size());
  std::size_t const dim = s.empty() ? 0 : s[0].size();
  for (std::size_t lo = 0; lo < dim; lo += block_chunk) {
    std::size_t const len = std::min(block_chunk, dim - lo);
    for (std::size_t i = 0; i < s.size(); ++i)
      for (std::size_t j = 0; j < t.size(); ++j)
        g(i, j) += dot(std::span<cplx const>(s[i]).subspan(lo, len), std::span<cplx const>(t[j]).subspan(lo, len));
  }
  return g;
}

/// S* T for a product known to be Hermitian (T = S or T = A S): only the
/// upper triangle is computed.
inline CMatrix block_gram_hermitian(Block const& s, Block const& t) {
  CMatrix g(s.size(), s.size());
  std::size_t const dim = s.empty() ? 0 : s[0].size();
  for (std::size_t lo = 0; lo < dim; lo += block_chunk) {
    std::size_t const len = std::min(block_chunk, dim - lo);
    for (std::size_t i = 0; i < s.size(); ++i)
      for (std::size_t j = i; j < s.size(); ++j)
        g(i, j) += dot(std::span<cplx const>(s[i]).subspan(lo, len), std::span<cplx const>(t[j]).subspan(lo, len));
  }
  for (std::size_t i = 0; i < s.size(); ++i) {
    g(i, i) = g(i, i).real();
    for (std::size_t j = i + 1; j < s.size(); ++j) g(j, i) = std::conj(g(i, j));
  }
  return g;
}

/// out_j = sum_i s_i c(row0 + i, j)
inline Block block_combine(Block const& s, CMatrix const& c, std::size_t row0 = 0) {
  std::size_t const dim = s.empty() ? 0 : s[0].size();
  Block out(c.cols(), Vec(dim, 0.0));
  for (std::size_t lo = 0; lo < dim; lo += block_chunk) {
    std::size_t const len = std::min(block_chunk, dim - lo);
    for (std::size_t j = 0; j < c.cols(); ++j) {
      std::span<cplx> dst = std::span<cplx>(out[j]).subspan(lo, len);
      for (std::size_t i = 0; i < s.size(); ++i) {
        cplx const f = c(row0 + i, j);
        if (f != cplx(0.0)) axpy(f, std::span<cplx const>(s[i]).subspan(lo, len), dst);
      }
    }
  }
  return out;
}

inline void hermitize(CMatrix& h) {
  for (std::size_t i = 0; i < h.rows(); ++i) {
    h(i, i) = h(i, i).real();
    for (std::size_t j = i + 1; j < h.cols(); ++j) {
      cplx const v = 0.5 * (h(i, j) + std::conj(h(j, i)));
      h(i, j) = v;
      h(j, i) = std::conj(v);
    }
  }
}

} // namespace detail

/// Lowest k eigenpairs of a Hermitian PSD matrix by locally optimal block
/// preconditioned CG with Jacobi preconditioning.
inline LobpcgResult lobpcg_lowest(SparseMatrix const& a, std::size_t k, LobpcgOptions const& opt = {}) {
  using detail::Block;
  std::size_t const n = a.rows();
  if (k == 0) return {{}, {}, {}, 0, true};
  if (k > n) throw std::invalid_argument("lobpcg: k exceeds the dimension");
  std::size_t const b = std::min(n, k + opt.guard);
  LobpcgResult out;

  auto const diag = a.diagonal_real();
  std::vector<double> dinv(n);
  // absolute floor for near-zero eigenvalues; ||A|| would be useless here
  // because fast-growing weights put enormous entries far from the spectrum's bottom
  double dmin = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    dinv[i] = diag[i] > 0.0 ? 1.0 / diag[i] : 1.0;
    if (diag[i] > 0.0) dmin = std::min(dmin, diag[i]);
  }
  double const floor = std::isfinite(dmin) ? 1e-8 * dmin : 0.0;

  auto apply = [&](Block const& x) {
    Block ax(x.size(), Vec(n));
    for (std::size_t i = 0; i < x.size(); ++i) a.multiply(x[i], ax[i]);
    return ax;
  };
  // orthonormal basis of span(S) through the eigen-decomposition of its Gram
  // matrix, dropping numerically dependent directions
  auto orthonormal_coeffs = [](Block& s, Block& as) {
    for (std::size_t i = 0; i < s.size(); ++i) {
      double const nv = norm2(s[i]);
      if (nv > 0.0) {
        scale(s[i], 1.0 / nv);
        scale(as[i], 1.0 / nv);
      }
    }
    auto const ge = jacobi_eigen(detail::block_gram_hermitian(s, s));
    double const top = ge.values.empty() ? 0.0 : ge.values.back();
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < ge.values.size(); ++i)
      if (ge.values[i] > 1e-12 * top) keep.push_back(i);
    CMatrix c(s.size(), keep.size());
    for (std::size_t t = 0; t < keep.size(); ++t)
      for (std::size_t r = 0; r < s.size(); ++r) c(r, t) = ge.vectors(r, keep[t]) / std::sqrt(ge.values[keep[t]]);
    return c;
  };

  // scaled random start keeps the initial energy moderate
  std::mt19937_64 rng(opt.seed);
  Block x(b);
  for (auto& v : x) {
    v = random_vector(n, rng);
    for (std::size_t i = 0; i < n; ++i) v[i] *= dinv[i];
  }
  Block ax = apply(x);
  Block p, ap;
  std::vector<double> lambda(b, 0.0), res(b, 0.0);

  for (std::size_t it = 0;; ++it) {
    // Rayleigh-Ritz on span[X, W, P]
    Block s = x, as = ax;
    if (it > 0) {
      Block w(b, Vec(n));
      for (std::size_t j = 0; j < b; ++j)
        for (std::size_t i = 0; i < n; ++i) w[j][i] = dinv[i] * (ax[j][i] - lambda[j] * x[j][i]);
      Block aw = apply(w);
      s.insert(s.end(), w.begin(), w.end());
      as.insert(as.end(), aw.begin(), aw.end());
      s.insert(s.end(), p.begin(), p.end());
      as.insert(as.end(), ap.begin(), ap.end());
    }
    CMatrix const c = orthonormal_coeffs(s, as);
    if (c.cols() < b) throw std::runtime_error("lobpcg: basis collapsed");
    CMatrix h = c.adjoint() * detail::block_gram_hermitian(s, as) * c;
    detail::hermitize(h);
    auto const he = jacobi_eigen(h);
    CMatrix y(c.cols(), b);
    for (std::size_t r = 0; r < c.cols(); ++r)
      for (std::size_t j = 0; j < b; ++j) y(r, j) = he.vectors(r, j);
    CMatrix const z = c * y;
    Block xo(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(b));
    Block axo(as.begin(), as.begin() + static_cast<std::ptrdiff_t>(b));
    if (it > 0) {
      // P = the part of the update outside the old X block; X = X z_X + P
      Block swp(s.begin() + static_cast<std::ptrdiff_t>(b), s.end());
      Block aswp(as.begin() + static_cast<std::ptrdiff_t>(b), as.end());
      p = detail::block_combine(swp, z, b);
      ap = detail::block_combine(aswp, z, b);
      CMatrix zx(b, b);
      for (std::size_t r = 0; r < b; ++r)
        for (std::size_t j = 0; j < b; ++j) zx(r, j) = z(r, j);
      x = detail::block_combine(xo, zx);
      ax = detail::block_combine(axo, zx);
      for (std::size_t j = 0; j < b; ++j) {
        axpy(1.0, p[j], x[j]);
        axpy(1.0, ap[j], ax[j]);
      }
    } else {
      x = detail::block_combine(xo, z);
      ax = detail::block_combine(axo, z);
    }
    for (std::size_t j = 0; j < b; ++j) lambda[j] = he.values[j];
    // the recurrences for AX and AP drift; refresh them from true products
    if ((it + 1) % 16 == 0) {
      ax = apply(x);
      ap = apply(p);
    }

    auto residuals = [&] {
      bool ok = true;
      for (std::size_t j = 0; j < b; ++j) {
        Vec r = ax[j];
        axpy(-lambda[j], x[j], r);
        res[j] = norm2(r) / norm2(x[j]);
        if (j < k && !(res[j] <= opt.tol * std::max(std::abs(lambda[j]), floor))) ok = false;
      }
      return ok;
    };
    bool done = residuals();
    if (done) {
      // confirm against true products, the recurrence for AX drifts
      ax = apply(x);
      done = residuals();
    }
    out.iterations = it + 1;
    if (done || it + 1 >= opt.max_iter) {
      out.converged = done;
      break;
    }
  }
  for (std::size_t j = 0; j < k; ++j) {
    out.values.push_back(lambda[j]);
    out.vectors.push_back(x[j]);
    out.residuals.push_back(res[j]);
  }
  return out;
}

} // namespace dbarlab
