#pragma once

// Eigenanalysis of Levi matrices and sampled evaluation of the
// existence (liminf s_q > 0) and compactness (s_q -> infinity) criteria.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "dbarlab/dense.hpp"
#include "dbarlab/io.hpp"
#include "dbarlab/weights.hpp"

namespace dbarlab {

class NonHermitianError : public std::invalid_argument {
public:
  NonHermitianError(double asymmetry)
      : std::invalid_argument("matrix is not Hermitian (max |H - H*| = " + format_double(asymmetry) + ")"),
        asymmetry_(asymmetry) {}
  double asymmetry() const noexcept { return asymmetry_; }

private:
  double asymmetry_;
};

/// Ascending eigenvalues of a small Hermitian matrix (n <= 16).
inline std::vector<double> hermitian_eigenvalues(CMatrix const& h) {
  std::size_t const n = h.rows();
  if (h.cols() != n) throw std::invalid_argument("hermitian_eigenvalues: matrix must be square");
  if (n > 16) throw std::invalid_argument("hermitian_eigenvalues: dimension above 16, use the sparse solver");
  double const scale = std::max(1.0, h.max_abs());
  double const defect = h.hermitian_defect();
  if (defect > 1e-8 * scale) throw NonHermitianError(defect);
  return jacobi_eigen(h, false).values;
}

/// Levi matrix, its spectrum and the partial sums s_q at one point.
struct LeviSample {
  Point point;
  CMatrix levi;
  std::vector<double> eigenvalues; // ascending
  std::vector<double> s;           // s[q-1] = sum of the q smallest eigenvalues

  double s_q(std::size_t q) const { return s.at(q - 1); }
};

inline LeviSample levi_sample(LeviMatrix const& levi, Point const& z) {
  LeviSample out;
  out.point = z;
  out.levi = levi.evaluate(z);
  out.eigenvalues = hermitian_eigenvalues(out.levi);
  out.s.resize(out.eigenvalues.size());
  std::partial_sum(out.eigenvalues.begin(), out.eigenvalues.end(), out.s.begin());
  return out;
}

inline double s_q_at(LeviMatrix const& levi, Point const& z, std::size_t q) {
  if (q < 1 || q > levi.dim()) throw std::invalid_argument("s_q_at: q must satisfy 1 <= q <= n");
  auto const ev = hermitian_eigenvalues(levi.evaluate(z));
  return std::accumulate(ev.begin(), ev.begin() + static_cast<std::ptrdiff_t>(q), 0.0);
}

inline double s_q_at(WeightExpr const& w, Point const& z, std::size_t q) { return s_q_at(levi_matrix(w), z, q); }

// ---------------------------------------------------------------------------
// Criterion scan

enum class CriterionClass { likely_existence, likely_compact, fails, inconclusive };

inline char const* to_string(CriterionClass c) {
  switch (c) {
  case CriterionClass::likely_existence: return "LIKELY_EXISTENCE";
  case CriterionClass::likely_compact: return "LIKELY_COMPACT";
  case CriterionClass::fails: return "FAILS";
  case CriterionClass::inconclusive: return "INCONCLUSIVE";
  }
  return "?";
}

/// Heuristic thresholds; a finite sample cannot decide a limit.
struct CriterionOptions {
  double existence_threshold = 1e-3;
  double growth_factor = 1.5;       // min s_q(last) / min s_q(third from last) for LIKELY_COMPACT
  double compactness_threshold = 1.0; // min s_q at the largest radius for LIKELY_COMPACT
};

struct CriterionReport {
  std::size_t q = 1;
  std::size_t dim = 1;
  std::vector<double> radii;
  std::vector<double> per_radius_min_s_q;
  std::vector<Point> per_radius_argmin; // unit directions
  CriterionClass classification = CriterionClass::inconclusive;
  Point witness; // minimizing point at the largest radius
};

/// Unit directions on the sphere in C^n: the 2n axis directions followed by
/// `count` scrambled Halton points pushed through Box-Muller and normalized.
inline std::vector<Point> sphere_directions(std::size_t n, std::size_t count, std::uint64_t seed) {
  static constexpr std::array<unsigned, 32> primes{2,  3,  5,  7,  11, 13, 17, 19, 23, 29, 31,  37,  41,  43,  47,  53,
                                                   59, 61, 67, 71, 73, 79, 83, 89, 97, 101, 103, 107, 109, 113, 127, 131};
  if (2 * n > primes.size()) throw std::invalid_argument("sphere_directions: dimension too large");
  std::vector<Point> dirs;
  for (std::size_t j = 0; j < n; ++j) {
    Point e(n, 0.0);
    e[j] = 1.0;
    dirs.push_back(e);
    e[j] = cplx(0.0, 1.0);
    dirs.push_back(e);
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::vector<double> shift(2 * n);
  for (auto& s : shift) s = u01(rng);

  auto radical_inverse = [](std::size_t i, unsigned base) {
    double f = 1.0, r = 0.0;
    while (i > 0) {
      f /= base;
      r += f * static_cast<double>(i % base);
      i /= base;
    }
    return r;
  };
  std::vector<double> g(2 * n);
  for (std::size_t i = 1; i <= count; ++i) {
    for (std::size_t d = 0; d < 2 * n; ++d) {
      double x = radical_inverse(i, primes[d]) + shift[d];
      x -= std::floor(x);
      g[d] = std::clamp(x, 1e-12, 1.0 - 1e-12);
    }
    Point p(n);
    double norm2 = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      double const r = std::sqrt(-2.0 * std::log(g[2 * j]));
      double const t = 2.0 * std::numbers::pi * g[2 * j + 1];
      p[j] = cplx(r * std::cos(t), r * std::sin(t));
      norm2 += std::norm(p[j]);
    }
    double const inv = 1.0 / std::sqrt(norm2);
    for (auto& c : p) c *= inv;
    dirs.push_back(std::move(p));
  }
  return dirs;
}

inline CriterionClass classify_criterion(std::vector<double> const& mins, CriterionOptions const& opt) {
  std::size_t const k = mins.size();
  double const last = mins[k - 1];
  if (last < opt.existence_threshold) return CriterionClass::fails;
  bool const increasing = mins[k - 3] < mins[k - 2] && mins[k - 2] < mins[k - 1];
  if (increasing && last >= opt.compactness_threshold && last >= opt.growth_factor * mins[k - 3])
    return CriterionClass::likely_compact;
  // a minimum that keeps shrinking by the growth factor may still tend to zero
  if (last * opt.growth_factor < mins[k - 3]) return CriterionClass::inconclusive;
  return CriterionClass::likely_existence;
}

inline CriterionReport criterion_scan(WeightExpr const& w, std::size_t q, std::vector<double> const& radii,
                                      std::size_t directions_per_radius, std::uint64_t seed,
                                      CriterionOptions const& opt = {}) {
  if (q < 1 || q > w.dim) throw std::invalid_argument("criterion_scan: q must satisfy 1 <= q <= n");
  if (radii.size() < 3) throw std::invalid_argument("criterion_scan: at least three radii are required");
  for (std::size_t i = 0; i < radii.size(); ++i) {
    if (!(radii[i] > 0.0)) throw std::invalid_argument("criterion_scan: radii must be positive");
    if (i > 0 && !(radii[i] > radii[i - 1])) throw std::invalid_argument("criterion_scan: radii must be strictly increasing");
  }
  if (directions_per_radius < 8) throw std::invalid_argument("criterion_scan: directions_per_radius must be >= 8");

  LeviMatrix const levi = levi_matrix(w);
  auto const dirs = sphere_directions(w.dim, directions_per_radius, seed);
  CriterionReport rep;
  rep.q = q;
  rep.dim = w.dim;
  rep.radii = radii;
  for (double const r : radii) {
    double best = std::numeric_limits<double>::infinity();
    Point best_dir;
    for (auto const& d : dirs) {
      Point z(d.size());
      for (std::size_t j = 0; j < d.size(); ++j) z[j] = r * d[j];
      double const s = s_q_at(levi, z, q);
      if (s < best) {
        best = s;
        best_dir = d;
      }
    }
    rep.per_radius_min_s_q.push_back(best);
    rep.per_radius_argmin.push_back(best_dir);
  }
  rep.classification = classify_criterion(rep.per_radius_min_s_q, opt);
  rep.witness = rep.per_radius_argmin.back();
  for (auto& c : rep.witness) c *= radii.back();
  return rep;
}

inline void write_csv(std::ostream& os, CriterionReport const& rep) {
  os << "radius,min_s_q";
  for (std::size_t j = 1; j <= rep.dim; ++j) os << ",argmin_direction_re_" << j;
  for (std::size_t j = 1; j <= rep.dim; ++j) os << ",argmin_direction_im_" << j;
  os << '\n';
  for (std::size_t i = 0; i < rep.radii.size(); ++i) {
    os << format_double(rep.radii[i]) << ',' << format_double(rep.per_radius_min_s_q[i]);
    for (auto const& c : rep.per_radius_argmin[i]) os << ',' << format_double(c.real());
    for (auto const& c : rep.per_radius_argmin[i]) os << ',' << format_double(c.imag());
    os << '\n';
  }
  os << "# classification: " << to_string(rep.classification) << '\n';
}

} // namespace dbarlab
