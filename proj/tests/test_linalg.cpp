#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "dbarlab/iterative.hpp"
#include "dbarlab/sparse.hpp"

using namespace dbarlab;

namespace {

SparseMatrix random_sparse(std::size_t rows, std::size_t cols, double density, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> g;
  TripletBuilder tb(rows, cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c)
      if (u(rng) < density) tb.add(r, c, cplx(g(rng), g(rng)));
  return tb.build();
}

SparseMatrix diagonal(std::vector<double> const& d) {
  TripletBuilder tb(d.size(), d.size());
  for (std::size_t i = 0; i < d.size(); ++i) tb.add(i, i, d[i]);
  auto a = tb.build();
  a.set_hermitian(true);
  return a;
}

} // namespace

TEST(Dense, JacobiMatchesTwoByTwo) {
  CMatrix h(2, 2);
  h(0, 0) = 2.0;
  h(1, 1) = -1.0;
  h(0, 1) = cplx(1.0, 1.0);
  h(1, 0) = cplx(1.0, -1.0);
  auto const e = jacobi_eigen(h);
  double const tr = 1.0, det = -2.0 - 2.0;
  double const disc = std::sqrt(tr * tr - 4.0 * det);
  EXPECT_NEAR(e.values[0], 0.5 * (tr - disc), 1e-14);
  EXPECT_NEAR(e.values[1], 0.5 * (tr + disc), 1e-14);
}

TEST(Dense, MatrixAlgebra) {
  CMatrix a(2, 3);
  a(0, 2) = cplx(1.0, 2.0);
  a(1, 0) = 3.0;
  CMatrix const b = a.adjoint();
  EXPECT_EQ(b.rows(), 3u);
  EXPECT_EQ(b(2, 0), cplx(1.0, -2.0));
  CMatrix const p = a * b;
  EXPECT_EQ(p(0, 0), cplx(5.0));
  EXPECT_EQ(p(1, 1), cplx(9.0));
  EXPECT_EQ(p.hermitian_defect(), 0.0);
  EXPECT_EQ(CMatrix::identity(3).trace(), cplx(3.0));
}

TEST(Sparse, TripletsSumDuplicatesAndMultiply) {
  TripletBuilder tb(3, 3);
  tb.add(0, 0, 1.0);
  tb.add(0, 0, 2.0);
  tb.add(2, 1, cplx(0.0, 1.0));
  tb.add(1, 2, 0.0);
  auto const a = tb.build();
  EXPECT_EQ(a.entry(0, 0), cplx(3.0));
  EXPECT_EQ(a.entry(2, 1), cplx(0.0, 1.0));
  EXPECT_EQ(a.entry(1, 1), cplx(0.0));
  std::vector<cplx> const x{1.0, 2.0, 3.0};
  auto const y = a * x;
  EXPECT_EQ(y[0], cplx(3.0));
  EXPECT_EQ(y[2], cplx(0.0, 2.0));
  EXPECT_THROW(tb.add(3, 0, 1.0), std::out_of_range);
}

TEST(Sparse, MultiplyMatchesDense) {
  std::mt19937_64 rng(31);
  auto const a = random_sparse(40, 30, 0.2, rng);
  CMatrix const d = a.to_dense();
  std::vector<cplx> x(30);
  std::normal_distribution<double> g;
  for (auto& c : x) c = cplx(g(rng), g(rng));
  auto const ys = a * x;
  auto const yd = d.apply(x);
  for (std::size_t i = 0; i < 40; ++i) EXPECT_NEAR(std::abs(ys[i] - yd[i]), 0.0, 1e-13);
}

TEST(Sparse, AdjointSumAndGram) {
  std::mt19937_64 rng(32);
  auto const b = random_sparse(50, 20, 0.15, rng);
  CMatrix const bd = b.to_dense();
  EXPECT_LE((b.adjoint().to_dense() - bd.adjoint()).max_abs(), 0.0);
  auto const g = gram(b);
  EXPECT_EQ(g.hermitian_defect(), 0.0);
  EXPECT_LE((g.to_dense() - bd.adjoint() * bd).max_abs(), 1e-12);
  auto const s = g + g;
  EXPECT_LE((s.to_dense() - (g.to_dense() + g.to_dense())).max_abs(), 1e-12);
  EXPECT_GE(g.norm_inf(), g.max_abs());
  EXPECT_TRUE(g.all_finite());
  auto const diag = g.diagonal_real();
  for (std::size_t i = 0; i < diag.size(); ++i) EXPECT_GE(diag[i], 0.0);
}

TEST(Sparse, MatrixMarketExport) {
  TripletBuilder tb(2, 3);
  tb.add(0, 1, cplx(1.5, -2.0));
  tb.add(1, 2, 4.0);
  std::ostringstream os;
  write_matrix_market(os, tb.build());
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "%%MatrixMarket matrix coordinate complex general");
  std::getline(is, line);
  EXPECT_EQ(line, "2 3 2");
  std::getline(is, line);
  EXPECT_EQ(line, "1 2 1.5 -2");
  std::getline(is, line);
  EXPECT_EQ(line, "2 3 4 0");
}

TEST(Tridiagonal, KnownSpectrum) {
  // second-difference matrix: eigenvalues 2 - 2 cos(k pi / (n + 1))
  std::size_t const n = 30;
  auto const e = tridiagonal_eigen(std::vector<double>(n, 2.0), std::vector<double>(n - 1, -1.0));
  for (std::size_t k = 0; k < n; ++k)
    EXPECT_NEAR(e.values[k], 2.0 - 2.0 * std::cos(static_cast<double>(k + 1) * M_PI / (n + 1)), 1e-12);
}

TEST(Lanczos, DiagonalSpectrum) {
  std::size_t const N = 400;
  std::vector<double> d(N);
  for (std::size_t i = 0; i < N; ++i) d[i] = static_cast<double>(N - i);
  auto const a = diagonal(d);
  LinearOperator op = [&](std::span<cplx const> x, std::span<cplx> y) { a.multiply(x, y); };
  LanczosOptions opt;
  opt.tol = 1e-10;
  auto const r = lanczos_extremal(op, N, 5, a.norm_inf(), opt);
  ASSERT_TRUE(r.converged);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(r.values[i], static_cast<double>(i + 1), 1e-6);
  opt.largest = true;
  auto const t = lanczos_extremal(op, N, 3, a.norm_inf(), opt);
  ASSERT_TRUE(t.converged);
  EXPECT_NEAR(t.values[0], static_cast<double>(N), 1e-6);
}

TEST(Lanczos, RandomHermitianAgainstJacobi) {
  std::mt19937_64 rng(33);
  std::size_t const N = 200;
  auto const b = random_sparse(N, N, 0.05, rng);
  auto const a = b + b.adjoint();
  auto const ref = jacobi_eigen(a.to_dense(), false);
  LinearOperator op = [&](std::span<cplx const> x, std::span<cplx> y) { a.multiply(x, y); };
  LanczosOptions opt;
  opt.tol = 1e-12;
  auto const r = lanczos_extremal(op, N, 6, a.norm_inf(), opt);
  ASSERT_TRUE(r.converged);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(r.values[i], ref.values[i], 1e-8);
}

TEST(Lobpcg, RandomPsdAgainstJacobi) {
  std::mt19937_64 rng(34);
  std::size_t const N = 150;
  auto const b = random_sparse(N, N, 0.05, rng);
  auto a = gram(b) + diagonal(std::vector<double>(N, 0.1));
  auto const ref = jacobi_eigen(a.to_dense(), false);
  LobpcgOptions opt;
  opt.tol = 1e-10;
  auto const r = lobpcg_lowest(a, 4, opt);
  ASSERT_TRUE(r.converged);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(r.values[i], ref.values[i], 1e-8 * ref.values.back());
  EXPECT_THROW(lobpcg_lowest(a, N + 1, opt), std::invalid_argument);
}

TEST(ConjugateGradient, SolvesSpdSystem) {
  std::mt19937_64 rng(35);
  std::size_t const N = 120;
  auto const b = random_sparse(N, N, 0.08, rng);
  auto const a = gram(b) + diagonal(std::vector<double>(N, 0.5));
  Vec rhs = random_vector(N, rng);
  auto const r = conjugate_gradient(a, rhs, {});
  ASSERT_TRUE(r.converged);
  auto ax = a * r.x;
  axpy(-1.0, rhs, ax);
  EXPECT_LE(norm2(ax), 1e-8 * norm2(rhs));
  auto const zero = conjugate_gradient(a, Vec(N, 0.0), {});
  EXPECT_EQ(norm2(zero.x), 0.0);
}

TEST(ConjugateGradient, ReportsFailureOnInconsistentSystem) {
  // singular diagonal with the rhs in the kernel: no solution exists
  auto const a = diagonal({1.0, 2.0, 0.0});
  Vec const rhs{1.0, 1.0, 1.0};
  CgOptions opt;
  opt.max_iter = 50;
  auto const r = conjugate_gradient(a, rhs, opt);
  EXPECT_FALSE(r.converged);
  EXPECT_GT(r.relative_residual, 0.1);
}
