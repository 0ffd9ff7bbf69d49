#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "dbarlab/spectral.hpp"

using namespace dbarlab;

namespace {

double dense_min(BoxOperator const& box) { return jacobi_eigen(box.matrix.to_dense(), false).values.front(); }

SpectrumRecord record(double R, std::vector<double> values, bool converged = true) {
  SpectrumRecord r;
  r.R = R;
  r.values = std::move(values);
  r.residuals.assign(r.values.size(), 0.0);
  r.converged = converged;
  return r;
}

} // namespace

TEST(SpectralDomain, BoxAndBallIndexing) {
  Grid const g(1, 2.0, 9);
  SpectralDomain const box(g, DomainShape::box), ball(g, DomainShape::ball);
  EXPECT_EQ(box.active(), g.points());
  EXPECT_LT(ball.active(), box.active());
  EXPECT_EQ(box.ext_m(), 11u);
  EXPECT_EQ(box.ext_points(), 121u);
  for (std::size_t p = 0; p < g.points(); ++p) {
    std::size_t const e = box.ext_of_grid(p);
    EXPECT_EQ(box.grid_of_ext(e), static_cast<std::int64_t>(p));
    EXPECT_EQ(box.ext_point(e), g.point(p));
  }
  EXPECT_EQ(box.grid_of_ext(0), -1);
  for (std::size_t i = 0; i < ball.active(); ++i) {
    Point const z = g.point(ball.grid_of_active(i));
    EXPECT_LE(std::norm(z[0]), 4.0 + 1e-9);
  }
}

TEST(BoxOperator, HermitianAndPositiveForBuiltins) {
  std::mt19937_64 rng(71);
  for (auto const& b : builtin_weights()) {
    auto const w = builtin_weight(b.name, 2);
    for (std::size_t q = 1; q <= 2; ++q) {
      for (auto disc : {Discretization::conjugated, Discretization::gauge}) {
        auto const box = assemble_box(w, Grid(2, 1.5, 8), q, DomainShape::ball, disc);
        EXPECT_EQ(box.matrix.hermitian_defect(), 0.0) << b.name;
        EigenOptions eo;
        eo.tol = 1e-10;
        auto const ep = lowest_eigenvalues(box.matrix, 1, eo);
        EXPECT_GE(ep.values[0], -1e-8 * box.norm) << b.name << " q=" << q << " " << to_string(disc);
        for (int t = 0; t < 3; ++t) {
          Vec const u = random_vector(box.dimension(), rng), v = random_vector(box.dimension(), rng);
          cplx const auv = dot(box.matrix * u, v), avu = dot(box.matrix * v, u);
          EXPECT_LE(std::abs(auv - std::conj(avu)), 1e-12 * box.norm * norm2(u) * norm2(v));
        }
      }
    }
  }
  EXPECT_THROW(assemble_box(builtin_weight("gaussian", 1), Grid(1, 2.0, 9), 2), std::invalid_argument);
}

TEST(BoxOperator, FlatWeightBottomTendsToZero) {
  // flat weight: the box is a quarter Laplacian, so lambda_min ~ 1 / R^2
  // (the Dirichlet halo and the wide stencil soften the factor 16 somewhat)
  auto const w = parse_weight("0", 1);
  double prev = std::numeric_limits<double>::infinity();
  std::vector<double> mins;
  for (double R : {2.0, 4.0, 8.0}) {
    auto const box = assemble_box(w, Grid(1, R, static_cast<std::size_t>(4.0 * R) + 1), 1);
    EigenOptions eo;
    eo.tol = 1e-10;
    auto const ep = lowest_eigenvalues(box.matrix, 1, eo);
    ASSERT_TRUE(ep.converged);
    EXPECT_LT(ep.values[0], prev);
    EXPECT_GT(ep.values[0], 0.0);
    prev = ep.values[0];
    mins.push_back(ep.values[0]);
  }
  EXPECT_LT(mins.back(), 0.125 * mins.front());
}

TEST(BoxOperator, GaussianGap) {
  auto const w = parse_weight("modsq(z1)", 1);
  auto const box = assemble_box(w, Grid(1, 6.0, 64), 1);
  EigenOptions eo;
  eo.tol = 1e-10;
  eo.mode = EigenMode::lobpcg;
  auto const ep = lowest_eigenvalues(box.matrix, 5, eo);
  ASSERT_TRUE(ep.converged);
  EXPECT_LE(ep.values[0], 1.2);
  for (double v : ep.values) EXPECT_GE(v, 0.9);
}

TEST(BoxOperator, LanczosMatchesDenseOracle) {
  auto const w = parse_weight("modsq(z1)", 1);
  auto const box = assemble_box(w, Grid(1, 6.0, 24), 1);
  auto const ref = jacobi_eigen(box.matrix.to_dense(), false);
  EigenOptions eo;
  eo.tol = 1e-12;
  auto const ep = lowest_eigenvalues(box.matrix, 4, eo);
  ASSERT_TRUE(ep.converged);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(ep.values[i], ref.values[i], 1e-8);
  eo.mode = EigenMode::shift_invert;
  auto const si = lowest_eigenvalues(box.matrix, 2, eo);
  ASSERT_TRUE(si.converged);
  for (std::size_t i = 0; i < 2; ++i) EXPECT_NEAR(si.values[i], ref.values[i], 1e-8);
}

TEST(LowestEigenvalues, DiagonalAndLimits) {
  std::size_t const N = 300;
  TripletBuilder tb(N, N);
  for (std::size_t i = 0; i < N; ++i) tb.add(i, i, static_cast<double>(N - i));
  auto a = tb.build();
  a.set_hermitian(true);
  EigenOptions eo;
  eo.tol = 1e-10;
  for (auto mode : {EigenMode::direct, EigenMode::lobpcg}) {
    eo.mode = mode;
    auto const ep = lowest_eigenvalues(a, 3, eo);
    ASSERT_TRUE(ep.converged);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(ep.values[i], static_cast<double>(i + 1), 1e-6);
  }
  std::mt19937_64 rng(72);
  std::normal_distribution<double> g;
  TripletBuilder hb(200, 200);
  for (std::size_t r = 0; r < 200; ++r)
    for (std::size_t c = r; c < 200; ++c)
      if (r == c || (r * 7 + c * 13) % 9 == 0) {
        cplx const v = r == c ? cplx(g(rng)) : cplx(g(rng), g(rng));
        hb.add(r, c, v);
        if (r != c) hb.add(c, r, std::conj(v));
      }
  auto h = hb.build();
  h.set_hermitian(true);
  auto const ref = jacobi_eigen(h.to_dense(), false);
  eo.mode = EigenMode::direct;
  eo.tol = 1e-12;
  auto const hp = lowest_eigenvalues(h, 6, eo);
  ASSERT_TRUE(hp.converged);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(hp.values[i], ref.values[i], 1e-8);
  EXPECT_THROW(lowest_eigenvalues(a, 33, eo), std::invalid_argument);
  EXPECT_THROW(lowest_eigenvalues(a, N + 1, eo), std::invalid_argument);
}

TEST(BoxOperator, EigenvaluesNonincreasingInRadius) {
  // nested domains at fixed h: Dirichlet bracketing, over every built-in weight
  for (auto const& b : builtin_weights()) {
    std::size_t const n = b.min_dim;
    auto const w = builtin_weight(b.name, n);
    for (std::size_t q = 1; q <= n; ++q) {
      double prev = std::numeric_limits<double>::infinity(), prev_err = 0.0;
      for (double R : {2.0, 2.5, 3.0}) {
        auto const box = assemble_box(w, Grid(n, R, static_cast<std::size_t>(4.0 * R) + 1), q, DomainShape::ball);
        double l = 0.0, err = 0.0;
        if (n == 1) {
          l = dense_min(box);
          err = 1e-12 * box.norm;
        } else {
          EigenOptions eo;
          // the non-compact cases cluster at the bottom; the radius gaps are O(0.1)
          eo.tol = 1e-4;
          eo.mode = EigenMode::lobpcg;
          auto const ep = lowest_eigenvalues(box.matrix, 1, eo);
          ASSERT_TRUE(ep.converged) << b.name;
          l = ep.values[0];
          err = ep.residuals[0];
        }
        EXPECT_LE(l, prev + err + prev_err) << b.name << " q=" << q << " R=" << R;
        prev = l;
        prev_err = err;
      }
    }
  }
}

TEST(Frame, RoundTripAndQuadraticForm) {
  // v* A v reproduces the weighted Dirichlet form up to O(h^2)
  auto const w = parse_weight("modsq(z1)", 1);
  std::vector<double> errs;
  for (std::size_t m : {33u, 65u}) {
    Grid const g(1, 4.0, m);
    auto const box = assemble_box(w, g, 1);
    GridForm const u = make_bump_form(g, 1, {2.4, 1, 3});
    Vec const v = to_frame(box, u);
    GridForm const back = from_frame(box, v);
    for (std::size_t p = 0; p < g.points(); ++p) EXPECT_NEAR(std::abs(back.at(0, p) - u.at(0, p)), 0.0, 1e-12);
    auto const wf = tabulate_weight(w, g);
    double const q = q_form(u, u, wf).real();
    double const vav = dot(v, box.matrix * v).real();
    errs.push_back(std::abs(vav - q) / q);
  }
  EXPECT_LE(errs[0], 5e-2);
  double const ratio = errs[0] / errs[1];
  EXPECT_GT(ratio, 3.0) << errs[0] << " " << errs[1];
  EXPECT_LT(ratio, 5.0) << errs[0] << " " << errs[1];
}

TEST(Frame, DbarPartIsExact) {
  // for q = n there is no dbar part; for q = 0 the box is ||Dt v||^2 = ||dbar u||^2 exactly
  auto const w = builtin_weight("example_a", 2);
  Grid const g(2, 2.0, 10);
  SpectralDomain const d(g);
  auto const b = assemble_dbar(w, d, 0);
  GridForm const u = make_bump_form(g, 0, {1.4, 1, 4});
  auto const box = assemble_box(w, d, 0);
  Vec const v = to_frame(box, u);
  auto const wf = tabulate_weight(w, g);
  double const lhs = std::pow(norm2(b * v), 2);
  double const rhs = norm_sq(dbar(u), wf);
  EXPECT_NEAR(lhs, rhs, 1e-10 * rhs);
}

TEST(ClassifyTrend, Rules) {
  std::vector<SpectrumRecord> recs{record(3, {1.0, 2.0}), record(4, {1.0, 2.0}), record(5, {1.01, 2.02})};
  EXPECT_EQ(classify_trend(recs, 2, 1.3, 0.05), TrendClass::plateau);
  recs.back() = record(5, {1.5, 2.6});
  EXPECT_EQ(classify_trend(recs, 2, 1.3, 0.05), TrendClass::diverging);
  recs.back() = record(5, {1.1, 2.2});
  EXPECT_EQ(classify_trend(recs, 2, 1.3, 0.05), TrendClass::inconclusive);
  recs.back() = record(5, {1.0, 2.0}, false);
  EXPECT_EQ(classify_trend(recs, 2, 1.3, 0.05), TrendClass::inconclusive);
  EXPECT_EQ(classify_trend({recs[0]}, 2, 1.3, 0.05), TrendClass::inconclusive);
  EXPECT_STREQ(to_string(TrendClass::diverging), "DIVERGING");
  EXPECT_STREQ(to_string(Discretization::gauge), "gauge");
  EXPECT_STREQ(to_string(DomainShape::ball), "ball");
}

TEST(CompactnessDiagnostic, GaussianPlateauAndCsv) {
  auto const w = parse_weight("modsq(z1)", 1);
  DiagnosticOptions opt;
  opt.k = 2;
  auto const rep = compactness_diagnostic(w, "gaussian", 1, {3.0, 4.0, 5.0}, opt);
  ASSERT_EQ(rep.records.size(), 3u);
  for (auto const& r : rep.records) {
    EXPECT_TRUE(r.converged) << r.failure;
    EXPECT_DOUBLE_EQ(r.h, 0.5);
  }
  EXPECT_EQ(rep.classification, TrendClass::plateau);
  std::ostringstream a, b;
  write_csv(a, rep);
  write_csv(b, compactness_diagnostic(w, "gaussian", 1, {3.0, 4.0, 5.0}, opt));
  EXPECT_EQ(a.str(), b.str());
  EXPECT_EQ(a.str().substr(0, a.str().find('\n')),
            "weight,q,R,m,k,lambda_1,lambda_2,residual_1,residual_2,classification");
  EXPECT_THROW(compactness_diagnostic(w, "g", 1, {3.0, 4.0}, opt), std::invalid_argument);
  EXPECT_THROW(compactness_diagnostic(w, "g", 1, {3.0, 5.0, 4.0}, opt), std::invalid_argument);
}

TEST(Neumann, SolveContract) {
  auto const w = parse_weight("modsq(z1)", 1);
  Grid const g(1, 4.0, 33);
  auto const box = assemble_box(w, g, 1);
  auto const zero = solve_neumann(box, GridForm(g, 1));
  EXPECT_EQ(norm2(to_frame(box, zero.u)), 0.0);

  for (std::uint64_t s = 1; s <= 3; ++s) {
    GridForm const f = make_bump_form(g, 1, {0.0, 2, s});
    auto const res = solve_neumann(box, f);
    Vec const b = to_frame(box, f), x = to_frame(box, res.u);
    Vec ax = box.matrix * x;
    axpy(-1.0, b, ax);
    EXPECT_LE(norm2(ax), 1e-8 * norm2(b));
    // ||N|| <= 1 / lambda_min, and lambda_min >= 0.9 here
    EXPECT_LE(norm2(x), norm2(b) / 0.9);
  }

  EigenOptions eo;
  eo.tol = 1e-10;
  eo.mode = EigenMode::lobpcg;
  auto const ep = lowest_eigenvalues(box.matrix, 1, eo);
  ASSERT_TRUE(ep.converged);
  ASSERT_EQ(ep.vectors.size(), 1u);
  auto const sol = solve_neumann_frame(box, ep.vectors[0], 1e-12);
  for (std::size_t i = 0; i < sol.x.size(); ++i)
    EXPECT_NEAR(std::abs(sol.x[i] - ep.vectors[0][i] / ep.values[0]), 0.0, 1e-8);
}

TEST(Canonical, SolvesDbarWithMinimalNorm) {
  auto const w = parse_weight("modsq(z1)", 1);
  Grid const g(1, 4.0, 48);
  auto const wf = tabulate_weight(w, g);
  GridForm const gfun = sample_form(g, 0, 0, [](Point const& z) {
    return bump_profile(std::norm(z[0]) / 9.0) * (1.0 + z[0] + std::conj(z[0]) * z[0]);
  });
  GridForm const f = dbar(gfun);
  auto const res = canonical_solution(w, g, f);
  EXPECT_LE(res.residual, 1e-2);
  EXPECT_EQ(res.u.q(), 0u);
  // the canonical solution has the least weighted norm among solutions
  EXPECT_LE(norm_sq(res.u, wf), norm_sq(gfun, wf) * (1.0 + 1e-2));

  auto const none = canonical_solution(w, g, GridForm(g, 1));
  EXPECT_EQ(norm_sq(none.u, wf), 0.0);
  EXPECT_THROW(canonical_solution(w, g, GridForm(g, 0)), std::invalid_argument);
}

TEST(Canonical, RejectsNonClosedInput) {
  auto const w = builtin_weight("gaussian", 2);
  Grid const g(2, 2.0, 10);
  GridForm const f = sample_form(g, 1, 0, [](Point const& z) {
    return bump_profile(std::norm(z[1]) / 2.0) * bump_profile(std::norm(z[0]) / 2.0) * std::conj(z[1]);
  });
  try {
    canonical_solution(w, g, f);
    FAIL() << "expected NotClosedError";
  } catch (NotClosedError const& e) {
    EXPECT_GT(e.measured(), 1e-6);
  }
}

TEST(Canonical, OrthogonalToNearKernel) {
  // the frame solution lies in the range of C*, so it is orthogonal to the
  // low-lying eigenvectors of C*C (holomorphic-like functions)
  auto const w = parse_weight("modsq(z1)", 1);
  Grid const g(1, 3.0, 16);
  GridForm const gfun = sample_form(g, 0, 0, [](Point const& z) { return bump_profile(std::norm(z[0]) / 4.0) * z[0]; });
  auto const res = canonical_solution(w, g, dbar(gfun));
  auto const box = assemble_box(w, SpectralDomain(g, DomainShape::box), 1);
  // the kernel is exact (eigenvalues at rounding level), so a dense solve is the oracle
  auto const near = jacobi_eigen(gram(box.lower).to_dense());
  double const nu = norm2(res.frame);
  ASSERT_GT(nu, 0.0);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_LE(near.values[i], 1e-2) << "not a near-kernel vector";
    cplx d = 0.0;
    for (std::size_t r = 0; r < near.vectors.rows(); ++r) d += std::conj(near.vectors(r, i)) * res.frame[r];
    EXPECT_LE(std::abs(d) / nu, 1e-6);
  }
}

TEST(Neumann, SolveInvertsMatvec) {
  auto const w = parse_weight("modsq(z1)", 1);
  auto const box = assemble_box(w, Grid(1, 4.0, 33), 1);
  std::mt19937_64 rng(73);
  Vec const x = random_vector(box.dimension(), rng);
  Vec const b = box.matrix * x;
  auto const sol = solve_neumann_frame(box, b, 1e-10);
  Vec diff = sol.x;
  axpy(-1.0, x, diff);
  EXPECT_LE(norm2(diff), 10.0 * 1e-8 * norm2(x));
}
