#pragma once

// Multi-index combinatorics for (0,q)-forms. Index tuples are 1-based,
// strictly increasing, and ordered lexicographically everywhere.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "dbarlab/dense.hpp"

namespace dbarlab {

using MultiIndex = std::vector<std::size_t>;

inline bool strictly_increasing(MultiIndex const& J) {
  for (std::size_t i = 1; i < J.size(); ++i)
    if (!(J[i - 1] < J[i])) return false;
  return true;
}

inline std::size_t binomial(std::size_t n, std::size_t k) {
  if (k > n) return 0;
  std::size_t r = 1;
  for (std::size_t i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

/// All strictly increasing q-tuples from {1..n}, lexicographic.
class MultiIndexTable {
public:
  MultiIndexTable(std::size_t n, std::size_t q) : n_(n), q_(q) {
    if (q > n) return; // empty table: there are no (0,q)-forms with q > n
    MultiIndex t(q);
    for (std::size_t i = 0; i < q; ++i) t[i] = i + 1;
    for (;;) {
      rank_.emplace(t, tuples_.size());
      tuples_.push_back(t);
      // advance to the next combination
      std::size_t i = q;
      while (i > 0 && t[i - 1] == n - q + i) --i;
      if (i == 0) break;
      ++t[i - 1];
      for (std::size_t k = i; k < q; ++k) t[k] = t[k - 1] + 1;
    }
  }

  std::size_t n() const noexcept { return n_; }
  std::size_t q() const noexcept { return q_; }
  std::size_t size() const noexcept { return tuples_.size(); }
  MultiIndex const& operator[](std::size_t i) const { return tuples_[i]; }
  std::vector<MultiIndex> const& tuples() const noexcept { return tuples_; }

  std::size_t rank(MultiIndex const& J) const {
    auto it = rank_.find(J);
    if (it == rank_.end()) throw std::out_of_range("multi-index not in table");
    return it->second;
  }

private:
  std::size_t n_, q_;
  std::vector<MultiIndex> tuples_;
  std::map<MultiIndex, std::size_t> rank_;
};

struct Wedge {
  int sign;
  MultiIndex tuple;
};

/// dzbar_j ^ dzbar_J = sign * dzbar_L with L the sorted union; nullopt if j in J.
inline std::optional<Wedge> wedge_insert(std::size_t j, MultiIndex const& J) {
  if (!strictly_increasing(J)) throw std::invalid_argument("wedge_insert: J must be strictly increasing");
  std::size_t below = 0;
  for (auto const t : J) {
    if (t == j) return std::nullopt;
    if (t < j) ++below;
  }
  MultiIndex L = J;
  L.insert(L.begin() + static_cast<std::ptrdiff_t>(below), j);
  return Wedge{below % 2 == 0 ? 1 : -1, std::move(L)};
}

/// Sign of the permutation taking (k, M) to (j, J); 0 if j in J, k in M or the
/// two index sets differ.
inline int epsilon(std::size_t j, MultiIndex const& J, std::size_t k, MultiIndex const& M) {
  if (!strictly_increasing(J) || !strictly_increasing(M)) throw std::invalid_argument("epsilon: tuples must be strictly increasing");
  if (J.size() != M.size()) return 0;
  if (std::find(J.begin(), J.end(), j) != J.end()) return 0;
  if (std::find(M.begin(), M.end(), k) != M.end()) return 0;
  MultiIndex top{k}, bottom{j};
  top.insert(top.end(), M.begin(), M.end());
  bottom.insert(bottom.end(), J.begin(), J.end());
  MultiIndex a = top, b = bottom;
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  if (a != b) return 0;
  // perm[i] = position in bottom of top[i]; sign = (-1)^inversions
  std::vector<std::size_t> perm(top.size());
  for (std::size_t i = 0; i < top.size(); ++i)
    perm[i] = static_cast<std::size_t>(std::find(bottom.begin(), bottom.end(), top[i]) - bottom.begin());
  std::size_t inversions = 0;
  for (std::size_t i = 0; i < perm.size(); ++i)
    for (std::size_t l = i + 1; l < perm.size(); ++l)
      if (perm[i] > perm[l]) ++inversions;
  return inversions % 2 == 0 ? 1 : -1;
}

/// sum'_J |u_J|^2
inline double pointwise_norm_sq(std::span<cplx const> u) {
  double s = 0.0;
  for (auto const& c : u) s += std::norm(c);
  return s;
}

/// Antisymmetric extension u_{jK}: 0 if j in K, else the wedge sign times the
/// stored coefficient of the sorted tuple.
inline cplx extended_coefficient(std::span<cplx const> u, MultiIndexTable const& table_q, std::size_t j, MultiIndex const& K) {
  auto w = wedge_insert(j, K);
  if (!w) return 0.0;
  return static_cast<double>(w->sign) * u[table_q.rank(w->tuple)];
}

/// sum'_K sum_{j,k} H_jk u_{jK} conj(u_{kK}) for Hermitian H (0-based storage,
/// H(j-1, k-1) = H_jk). Real for Hermitian H; the real part is returned.
inline double curvature_action(CMatrix const& h, std::span<cplx const> u, MultiIndexTable const& table_q,
                               MultiIndexTable const& table_qm1) {
  std::size_t const n = table_q.n();
  if (h.rows() != n || h.cols() != n || u.size() != table_q.size() || table_qm1.n() != n ||
      table_qm1.q() + 1 != table_q.q())
    throw std::invalid_argument("curvature_action: dimension mismatch");
  std::vector<cplx> ext(n);
  cplx total = 0.0;
  for (auto const& K : table_qm1.tuples()) {
    for (std::size_t j = 1; j <= n; ++j) ext[j - 1] = extended_coefficient(u, table_q, j, K);
    for (std::size_t j = 0; j < n; ++j) {
      if (ext[j] == cplx(0.0)) continue;
      for (std::size_t k = 0; k < n; ++k) total += h(j, k) * ext[j] * std::conj(ext[k]);
    }
  }
  return total.real();
}

} // namespace dbarlab
