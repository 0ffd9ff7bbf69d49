#pragma once

// Quadrature checks of the weighted Kohn-Morrey formula, the basic estimate,
// the s_q curvature lower bound and the tail-mass bound, all on bump-supported
// test forms so the truncation boundary never enters.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <ostream>
#include <vector>

#include "dbarlab/calculus.hpp"
#include "dbarlab/forms.hpp"
#include "dbarlab/io.hpp"
#include "dbarlab/levi.hpp"

namespace dbarlab {

/// Per-trial seeds derived from a master seed (splitmix64 step).
inline std::uint64_t split_seed(std::uint64_t master, std::uint64_t trial) {
  std::uint64_t z = master + 0x9e3779b97f4a7c15ULL * (trial + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

struct IdentityReport {
  double lhs = 0.0;      // ||dbar u||^2 + ||dbar* u||^2
  double rhs_grad = 0.0; // sum'_J sum_j ||dbar_j u_J||^2
  double rhs_curv = 0.0; // sum'_K sum_jk int phi_jk u_jK conj(u_kK) e^{-phi}
  double rel_err = 0.0;
  std::size_t n = 0, q = 0, m = 0;
  double R = 0.0;
  std::uint64_t seed = 0;
};

/// rhs_curv of an arbitrary form; also returns int s_q |u|^2 e^{-phi} through sq_integral.
inline double curvature_integral(GridForm const& u, WeightField const& wf, LeviMatrix const& levi, double* sq_integral = nullptr) {
  Grid const& g = u.grid();
  std::size_t const q = u.q();
  if (q == 0) {
    if (sq_integral) *sq_integral = 0.0;
    return 0.0;
  }
  MultiIndexTable const tq(g.n(), q), tm(g.n(), q - 1);
  std::vector<cplx> coeff(u.components());
  double curv = 0.0, sq = 0.0;
  for (std::size_t p = 0; p < g.points(); ++p) {
    bool zero = true;
    for (std::size_t r = 0; r < coeff.size(); ++r) {
      coeff[r] = u.at(r, p);
      if (coeff[r] != cplx(0.0)) zero = false;
    }
    if (zero || wf.density[p] == 0.0) continue;
    CMatrix const h = levi.evaluate(g.point(p));
    curv += wf.density[p] * curvature_action(h, coeff, tq, tm);
    if (sq_integral) {
      auto const ev = hermitian_eigenvalues(h);
      double s = 0.0;
      for (std::size_t i = 0; i < q; ++i) s += ev[i];
      sq += wf.density[p] * s * pointwise_norm_sq(coeff);
    }
  }
  if (sq_integral) *sq_integral = sq * g.cell_volume();
  return curv * g.cell_volume();
}

inline double gradient_term(GridForm const& u, WeightField const& wf) {
  Grid const& g = u.grid();
  double s = 0.0;
  for (std::size_t r = 0; r < u.components(); ++r)
    for (std::size_t j = 1; j <= g.n(); ++j) s += scalar_norm_sq(dbar_j(g, j, u.component(r)), wf);
  return s;
}

inline double relative_residual(double lhs, double rhs) {
  double const den = std::max(lhs, rhs);
  if (den == 0.0) return 0.0;
  return std::abs(lhs - rhs) / den;
}

/// Both sides of the Kohn-Morrey formula for a given form.
inline IdentityReport kohn_morrey_report(WeightExpr const& w, GridForm const& u, WeightField const& wf) {
  Grid const& g = u.grid();
  IdentityReport rep;
  rep.n = g.n();
  rep.q = u.q();
  rep.m = g.m();
  rep.R = g.R();
  rep.lhs = q_form(u, u, wf).real();
  rep.rhs_grad = gradient_term(u, wf);
  rep.rhs_curv = curvature_integral(u, wf, levi_matrix(w));
  rep.rel_err = relative_residual(rep.lhs, rep.rhs_grad + rep.rhs_curv);
  return rep;
}

/// Kohn-Morrey residual on a seeded bump form (support 0.8 R, degree-1 polynomial factor).
inline IdentityReport kohn_morrey_check(WeightExpr const& w, std::size_t q, Grid const& g, std::uint64_t seed) {
  if (q < 1 || q > g.n()) throw std::invalid_argument("kohn_morrey_check: need 1 <= q <= n");
  WeightField const wf = tabulate_weight(w, g);
  GridForm const u = make_bump_form(g, q, {0.0, 1, seed});
  IdentityReport rep = kohn_morrey_report(w, u, wf);
  rep.seed = seed;
  return rep;
}

inline std::vector<IdentityReport> kohn_morrey_trials(WeightExpr const& w, std::size_t q, Grid const& g, std::size_t trials,
                                                      std::uint64_t seed) {
  if (q < 1 || q > g.n()) throw std::invalid_argument("kohn_morrey_trials: need 1 <= q <= n");
  WeightField const wf = tabulate_weight(w, g);
  std::vector<IdentityReport> out;
  for (std::size_t t = 0; t < trials; ++t) {
    std::uint64_t const s = split_seed(seed, t);
    IdentityReport rep = kohn_morrey_report(w, make_bump_form(g, q, {0.0, 1, s}), wf);
    rep.seed = s;
    out.push_back(rep);
  }
  return out;
}

inline void write_csv(std::ostream& os, std::vector<IdentityReport> const& reps) {
  os << "seed,lhs,rhs_grad,rhs_curv,rel_err\n";
  for (auto const& r : reps)
    os << r.seed << ',' << format_double(r.lhs) << ',' << format_double(r.rhs_grad) << ',' << format_double(r.rhs_curv) << ','
       << format_double(r.rel_err) << '\n';
}

inline void write_summary(std::ostream& os, std::vector<IdentityReport> const& reps) {
  double worst = 0.0;
  for (auto const& r : reps) worst = std::max(worst, r.rel_err);
  os << "# trials: " << reps.size() << '\n' << "# worst rel_err: " << format_double(worst) << '\n';
}

// ---------------------------------------------------------------------------

struct BasicEstimate {
  double constant = 0.0; // max norm_sq(u) / q_form(u,u) over the trials
  std::vector<double> ratios;
};

inline BasicEstimate basic_estimate_probe(WeightExpr const& w, std::size_t q, Grid const& g, std::size_t trials, std::uint64_t seed) {
  WeightField const wf = tabulate_weight(w, g);
  BasicEstimate est;
  for (std::size_t t = 0; t < trials; ++t) {
    GridForm const u = make_bump_form(g, q, {0.0, 1, split_seed(seed, t)});
    double const qf = q_form(u, u, wf).real();
    double const nu = norm_sq(u, wf);
    double const ratio = qf > 0.0 ? nu / qf : std::numeric_limits<double>::infinity();
    est.ratios.push_back(ratio);
    est.constant = std::max(est.constant, ratio);
  }
  return est;
}

struct CurvatureBoundResult {
  bool passed = true;
  double worst_margin = std::numeric_limits<double>::infinity();     // min (rhs_curv - int s_q|u|^2) / scale
  double worst_lhs_margin = std::numeric_limits<double>::infinity(); // min (lhs + slack - int s_q|u|^2) / scale
};

/// rhs_curv >= int s_q |u|^2 e^{-phi} and lhs >= the same integral minus
/// an h^2-sized discretization slack, over seeded bump forms.
inline CurvatureBoundResult curvature_lower_bound_check(WeightExpr const& w, std::size_t q, Grid const& g, std::size_t trials,
                                                        std::uint64_t seed, double tol = 1e-8) {
  WeightField const wf = tabulate_weight(w, g);
  LeviMatrix const levi = levi_matrix(w);
  CurvatureBoundResult res;
  for (std::size_t t = 0; t < trials; ++t) {
    GridForm const u = make_bump_form(g, q, {0.0, 1, split_seed(seed, t)});
    double sq = 0.0;
    double const curv = curvature_integral(u, wf, levi, &sq);
    double const lhs = q_form(u, u, wf).real();
    double const scale = std::max({std::abs(curv), std::abs(sq), std::numeric_limits<double>::min()});
    double const slack = g.h() * g.h() * std::max(lhs, sq);
    double const m1 = (curv - sq) / scale;
    double const m2 = (lhs + slack - sq) / scale;
    res.worst_margin = std::min(res.worst_margin, m1);
    res.worst_lhs_margin = std::min(res.worst_lhs_margin, m2);
    if (m1 < -tol || m2 < -tol) res.passed = false;
  }
  return res;
}

struct TailRow {
  double fraction = 0.0;
  double radius = 0.0;   // fraction * R
  double tail_mass = 0.0; // int_{|z| > radius} |u|^2 e^{-phi}
  double q_norm_sq = 0.0; // Q_phi(u, u)
  double inf_s_q = 0.0;   // over grid points with |z| >= radius
  double bound = 0.0;     // q_norm_sq / inf_s_q
  bool violated = false;
};

inline std::vector<TailRow> tail_mass_report(GridForm const& u, WeightField const& wf, WeightExpr const& w,
                                             std::vector<double> const& fractions, double slack = 1e-8) {
  Grid const& g = u.grid();
  LeviMatrix const levi = levi_matrix(w);
  double const qn = u.q() >= 1 ? q_form(u, u, wf).real() : norm_sq(dbar(u), wf);
  // |z| and s_q per point, computed once
  std::vector<double> radius(g.points()), sq(g.points()), mass(g.points());
  for (std::size_t p = 0; p < g.points(); ++p) {
    Point const z = g.point(p);
    double r2 = 0.0;
    for (auto const& c : z) r2 += std::norm(c);
    radius[p] = std::sqrt(r2);
    sq[p] = u.q() >= 1 ? s_q_at(levi, z, u.q()) : 0.0;
    double m = 0.0;
    for (std::size_t r = 0; r < u.components(); ++r) m += std::norm(u.at(r, p));
    mass[p] = wf.density[p] * m;
  }
  std::vector<TailRow> rows;
  for (double f : fractions) {
    TailRow row;
    row.fraction = f;
    row.radius = f * g.R();
    row.q_norm_sq = qn;
    double inf_s = std::numeric_limits<double>::infinity(), tail = 0.0;
    for (std::size_t p = 0; p < g.points(); ++p) {
      if (radius[p] < row.radius) continue;
      inf_s = std::min(inf_s, sq[p]);
      if (radius[p] > row.radius || f == 0.0) tail += mass[p];
    }
    row.tail_mass = tail * g.cell_volume();
    row.inf_s_q = inf_s;
    row.bound = inf_s > 0.0 ? qn / inf_s : std::numeric_limits<double>::infinity();
    row.violated = row.tail_mass > row.bound + slack;
    rows.push_back(row);
  }
  return rows;
}

inline void write_csv(std::ostream& os, std::vector<TailRow> const& rows) {
  os << "fraction,radius,tail_mass,q_norm_sq,inf_s_q,bound,violated\n";
  for (auto const& r : rows)
    os << format_double(r.fraction) << ',' << format_double(r.radius) << ',' << format_double(r.tail_mass) << ','
       << format_double(r.q_norm_sq) << ',' << format_double(r.inf_s_q) << ',' << format_double(r.bound) << ','
       << (r.violated ? 1 : 0) << '\n';
}

} // namespace dbarlab
