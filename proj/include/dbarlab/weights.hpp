#pragma once

// Weight expressions on C^n: parsing, evaluation and exact Wirtinger
// differentiation of polynomials in z and zbar.

#include <cctype>
#include <charconv>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "dbarlab/dense.hpp"

namespace dbarlab {

using Point = std::vector<cplx>;

class ParseError : public std::runtime_error {
public:
  ParseError(std::string const& what, std::size_t position)
      : std::runtime_error(what + " at position " + std::to_string(position)),
        position_(position) {}
  std::size_t position() const noexcept { return position_; }

private:
  std::size_t position_;
};

class DimensionError : public std::out_of_range {
public:
  using std::out_of_range::out_of_range;
};

class OverflowError : public std::overflow_error {
public:
  using std::overflow_error::overflow_error;
};

enum class NodeKind : std::uint8_t { constant, variable, add, mul, power, conj, re, im, modsq };

struct Node;
using NodePtr = std::shared_ptr<Node const>;

struct Node {
  NodeKind kind = NodeKind::constant;
  cplx value{};          // constant
  std::size_t index = 0; // variable, 1-based
  bool bar = false;      // variable: zbar_j instead of z_j
  int exponent = 0;      // power
  NodePtr lhs, rhs;      // operands (rhs only for add/mul)
};

/// Immutable expression handle. Builders fold constants and drop zero/one
/// operands; no further simplification is attempted.
class Expr {
public:
  Expr() : Expr(constant(0.0)) {}

  static Expr constant(cplx c) {
    Node n;
    n.kind = NodeKind::constant;
    n.value = c;
    return Expr(std::make_shared<Node const>(n));
  }
  static Expr variable(std::size_t index, bool bar) {
    Node n;
    n.kind = NodeKind::variable;
    n.index = index;
    n.bar = bar;
    return Expr(std::make_shared<Node const>(n));
  }

  friend Expr operator+(Expr const& a, Expr const& b) {
    if (a.is_zero()) return b;
    if (b.is_zero()) return a;
    if (a.is_constant() && b.is_constant()) return constant(a.const_value() + b.const_value());
    return binary(NodeKind::add, a, b);
  }
  friend Expr operator*(Expr const& a, Expr const& b) {
    if (a.is_zero() || b.is_zero()) return constant(0.0);
    if (a.is_one()) return b;
    if (b.is_one()) return a;
    if (a.is_constant() && b.is_constant()) return constant(a.const_value() * b.const_value());
    return binary(NodeKind::mul, a, b);
  }
  friend Expr operator-(Expr const& a, Expr const& b) { return a + constant(-1.0) * b; }
  friend Expr operator*(cplx s, Expr const& e) { return constant(s) * e; }

  static Expr power(Expr const& base, int k) {
    if (k < 0) throw std::invalid_argument("negative exponent");
    if (k == 0) return constant(1.0);
    if (k == 1) return base;
    if (base.is_zero()) return constant(0.0);
    if (base.is_constant()) return constant(std::pow(base.const_value(), k));
    Node n;
    n.kind = NodeKind::power;
    n.exponent = k;
    n.lhs = base.node_;
    return Expr(std::make_shared<Node const>(n));
  }
  static Expr conj(Expr const& a) {
    if (a.is_constant()) return constant(std::conj(a.const_value()));
    if (a.node_->kind == NodeKind::variable) return variable(a.node_->index, !a.node_->bar);
    if (a.node_->kind == NodeKind::conj) return Expr(a.node_->lhs);
    return unary(NodeKind::conj, a);
  }
  static Expr re(Expr const& a) {
    if (a.is_constant()) return constant(a.const_value().real());
    return unary(NodeKind::re, a);
  }
  static Expr im(Expr const& a) {
    if (a.is_constant()) return constant(a.const_value().imag());
    return unary(NodeKind::im, a);
  }
  static Expr modsq(Expr const& a) {
    if (a.is_constant()) return constant(std::norm(a.const_value()));
    return unary(NodeKind::modsq, a);
  }

  Node const& node() const noexcept { return *node_; }
  Expr lhs() const { return Expr(node_->lhs); }
  Expr rhs() const { return Expr(node_->rhs); }
  bool is_constant() const noexcept { return node_->kind == NodeKind::constant; }
  cplx const_value() const noexcept { return node_->value; }
  bool is_zero() const noexcept { return is_constant() && node_->value == cplx(0.0); }
  bool is_one() const noexcept { return is_constant() && node_->value == cplx(1.0); }

  /// Largest variable index referenced (0 for constants).
  std::size_t max_index() const {
    Node const& n = *node_;
    switch (n.kind) {
    case NodeKind::constant: return 0;
    case NodeKind::variable: return n.index;
    case NodeKind::add:
    case NodeKind::mul: return std::max(Expr(n.lhs).max_index(), Expr(n.rhs).max_index());
    default: return Expr(n.lhs).max_index();
    }
  }

  cplx evaluate(Point const& z) const {
    cplx v = eval_node(*node_, z);
    if (!std::isfinite(v.real()) || !std::isfinite(v.imag()))
      throw OverflowError("expression value exceeds the floating-point range");
    return v;
  }

  std::string to_string() const {
    std::ostringstream os;
    print(os, *node_);
    return os.str();
  }

private:
  explicit Expr(NodePtr n) : node_(std::move(n)) {}

  static Expr binary(NodeKind k, Expr const& a, Expr const& b) {
    Node n;
    n.kind = k;
    n.lhs = a.node_;
    n.rhs = b.node_;
    return Expr(std::make_shared<Node const>(n));
  }
  static Expr unary(NodeKind k, Expr const& a) {
    Node n;
    n.kind = k;
    n.lhs = a.node_;
    return Expr(std::make_shared<Node const>(n));
  }

  static cplx eval_node(Node const& n, Point const& z) {
    switch (n.kind) {
    case NodeKind::constant: return n.value;
    case NodeKind::variable: {
      cplx const v = z.at(n.index - 1);
      return n.bar ? std::conj(v) : v;
    }
    case NodeKind::add: return eval_node(*n.lhs, z) + eval_node(*n.rhs, z);
    case NodeKind::mul: return eval_node(*n.lhs, z) * eval_node(*n.rhs, z);
    case NodeKind::power: {
      cplx const b = eval_node(*n.lhs, z);
      cplx r = 1.0;
      for (int i = 0; i < n.exponent; ++i) r *= b;
      return r;
    }
    case NodeKind::conj: return std::conj(eval_node(*n.lhs, z));
    case NodeKind::re: return eval_node(*n.lhs, z).real();
    case NodeKind::im: return eval_node(*n.lhs, z).imag();
    case NodeKind::modsq: return std::norm(eval_node(*n.lhs, z));
    }
    return 0.0;
  }

  static void print(std::ostream& os, Node const& n) {
    switch (n.kind) {
    case NodeKind::constant:
      if (n.value.imag() == 0.0)
        os << n.value.real();
      else
        os << '(' << n.value.real() << (n.value.imag() < 0 ? "-" : "+") << std::abs(n.value.imag()) << "i)";
      break;
    case NodeKind::variable: os << (n.bar ? "zbar" : "z") << n.index; break;
    case NodeKind::add:
      os << '(';
      print(os, *n.lhs);
      os << " + ";
      print(os, *n.rhs);
      os << ')';
      break;
    case NodeKind::mul:
      print(os, *n.lhs);
      os << '*';
      print(os, *n.rhs);
      break;
    case NodeKind::power:
      os << '(';
      print(os, *n.lhs);
      os << ")^" << n.exponent;
      break;
    case NodeKind::conj:
    case NodeKind::re:
    case NodeKind::im:
    case NodeKind::modsq:
      os << (n.kind == NodeKind::conj ? "conj(" : n.kind == NodeKind::re ? "re(" : n.kind == NodeKind::im ? "im(" : "modsq(");
      print(os, *n.lhs);
      os << ')';
      break;
    }
  }

  NodePtr node_;
};

/// A parsed weight phi on C^dim.
struct WeightExpr {
  Expr root;
  std::size_t dim = 1;

  cplx evaluate(Point const& z) const {
    if (z.size() != dim) throw DimensionError("point dimension does not match weight dimension");
    return root.evaluate(z);
  }
};

// ---------------------------------------------------------------------------
// Wirtinger calculus

/// d e / d z_j  (conjugated = false)  or  d e / d zbar_j  (conjugated = true),
/// treating z and zbar as independent variables.
inline Expr wirtinger_diff(Expr const& e, std::size_t j, bool conjugated) {
  Node const& n = e.node();
  switch (n.kind) {
  case NodeKind::constant: return Expr::constant(0.0);
  case NodeKind::variable: return Expr::constant(n.index == j && n.bar == conjugated ? 1.0 : 0.0);
  case NodeKind::add: return wirtinger_diff(e.lhs(), j, conjugated) + wirtinger_diff(e.rhs(), j, conjugated);
  case NodeKind::mul:
    return wirtinger_diff(e.lhs(), j, conjugated) * e.rhs() + e.lhs() * wirtinger_diff(e.rhs(), j, conjugated);
  case NodeKind::power:
    return cplx(n.exponent) * Expr::power(e.lhs(), n.exponent - 1) * wirtinger_diff(e.lhs(), j, conjugated);
  // d conj(a)/dz = conj(da/dzbar)
  case NodeKind::conj: return Expr::conj(wirtinger_diff(e.lhs(), j, !conjugated));
  case NodeKind::re:
    return cplx(0.5) * (wirtinger_diff(e.lhs(), j, conjugated) + Expr::conj(wirtinger_diff(e.lhs(), j, !conjugated)));
  case NodeKind::im:
    return cplx(0.0, -0.5) *
           (wirtinger_diff(e.lhs(), j, conjugated) - Expr::conj(wirtinger_diff(e.lhs(), j, !conjugated)));
  case NodeKind::modsq:
    return wirtinger_diff(e.lhs(), j, conjugated) * Expr::conj(e.lhs()) +
           e.lhs() * Expr::conj(wirtinger_diff(e.lhs(), j, !conjugated));
  }
  return Expr::constant(0.0);
}

inline WeightExpr wirtinger_diff(WeightExpr const& w, std::size_t j, bool conjugated) {
  if (j < 1 || j > w.dim) throw DimensionError("derivative index out of range");
  return {wirtinger_diff(w.root, j, conjugated), w.dim};
}

/// Symbolic complex Hessian (d^2 phi / dz_j dzbar_k), 0-based storage.
class LeviMatrix {
public:
  explicit LeviMatrix(WeightExpr const& w) : dim_(w.dim), entries_(w.dim * w.dim) {
    for (std::size_t j = 1; j <= dim_; ++j) {
      Expr const dj = wirtinger_diff(w.root, j, false);
      for (std::size_t k = 1; k <= dim_; ++k) entries_[(j - 1) * dim_ + (k - 1)] = wirtinger_diff(dj, k, true);
    }
  }

  std::size_t dim() const noexcept { return dim_; }
  Expr const& operator()(std::size_t j, std::size_t k) const { return entries_[j * dim_ + k]; }

  CMatrix evaluate(Point const& z) const {
    if (z.size() != dim_) throw DimensionError("point dimension does not match weight dimension");
    CMatrix m(dim_, dim_);
    for (std::size_t j = 0; j < dim_; ++j)
      for (std::size_t k = 0; k < dim_; ++k) m(j, k) = entries_[j * dim_ + k].evaluate(z);
    return m;
  }

private:
  std::size_t dim_;
  std::vector<Expr> entries_;
};

inline LeviMatrix levi_matrix(WeightExpr const& w) { return LeviMatrix(w); }

/// Holomorphic gradient d phi / dz_k, k = 1..n.
inline std::vector<Expr> complex_gradient(WeightExpr const& w) {
  std::vector<Expr> g;
  g.reserve(w.dim);
  for (std::size_t k = 1; k <= w.dim; ++k) g.push_back(wirtinger_diff(w.root, k, false));
  return g;
}

// ---------------------------------------------------------------------------
// Parsing
//
//   expr   := term (('+'|'-') term)*
//   term   := factor ('*' factor)*
//   factor := base ('^' INTEGER)?
//   base   := NUMBER | VAR | '(' expr ')' | FUNC '(' expr ')'
//   VAR    := 'z' INTEGER | 'zbar' INTEGER
//   FUNC   := 'modsq' | 'conj' | 're' | 'im'
//
// A leading '-' on a term is accepted as negation.

namespace detail {

class Parser {
public:
  Parser(std::string_view src, std::size_t dim) : src_(src), dim_(dim) {}

  Expr parse() {
    Expr e = expr();
    skip_ws();
    if (pos_ != src_.size()) throw ParseError("unexpected character '" + std::string(1, src_[pos_]) + "'", pos_);
    return e;
  }

private:
  void skip_ws() {
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
  }
  bool accept(char c) {
    skip_ws();
    if (pos_ < src_.size() && src_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }
  void expect(char c) {
    if (!accept(c)) throw ParseError(std::string("expected '") + c + "'", pos_);
  }
  bool accept_word(std::string_view w) {
    skip_ws();
    if (src_.substr(pos_, w.size()) == w) {
      pos_ += w.size();
      return true;
    }
    return false;
  }

  Expr expr() {
    Expr e = accept('-') ? Expr::constant(-1.0) * term() : term();
    for (;;) {
      if (accept('+'))
        e = e + term();
      else if (accept('-'))
        e = e - term();
      else
        return e;
    }
  }
  Expr term() {
    Expr e = factor();
    while (accept('*')) e = e * factor();
    return e;
  }
  Expr factor() {
    Expr b = base();
    if (accept('^')) {
      skip_ws();
      std::size_t const at = pos_;
      auto const k = integer();
      if (k > 64) throw ParseError("exponent too large", at);
      b = Expr::power(b, static_cast<int>(k));
    }
    return b;
  }
  std::size_t integer() {
    skip_ws();
    std::size_t v = 0;
    auto const* first = src_.data() + pos_;
    auto const* last = src_.data() + src_.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr == first) throw ParseError("expected integer", pos_);
    pos_ += static_cast<std::size_t>(ptr - first);
    return v;
  }
  Expr variable(bool bar) {
    std::size_t const at = pos_;
    std::size_t const j = integer();
    if (j < 1) throw ParseError("variable index must be >= 1", at);
    if (j > dim_) throw DimensionError("variable index " + std::to_string(j) + " exceeds dimension " + std::to_string(dim_));
    return Expr::variable(j, bar);
  }
  Expr base() {
    skip_ws();
    if (pos_ >= src_.size()) throw ParseError("unexpected end of input", pos_);
    char const c = src_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
    if (accept('(')) {
      Expr e = expr();
      expect(')');
      return e;
    }
    if (accept_word("modsq")) return call(&Expr::modsq);
    if (accept_word("conj")) return call(&Expr::conj);
    if (accept_word("re")) return call(&Expr::re);
    if (accept_word("im")) return call(&Expr::im);
    if (accept_word("zbar")) return variable(true);
    if (accept_word("z")) return variable(false);
    throw ParseError("unexpected character '" + std::string(1, c) + "'", pos_);
  }
  Expr call(Expr (*f)(Expr const&)) {
    expect('(');
    Expr e = expr();
    expect(')');
    return f(e);
  }
  Expr number() {
    std::size_t const start = pos_;
    while (pos_ < src_.size() && (std::isdigit(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '.')) ++pos_;
    if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
      ++pos_;
      if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-')) ++pos_;
      while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    }
    std::string const text(src_.substr(start, pos_ - start));
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size()) throw ParseError("malformed number '" + text + "'", start);
    return Expr::constant(v);
  }

  std::string_view src_;
  std::size_t dim_;
  std::size_t pos_ = 0;
};

} // namespace detail

// ---------------------------------------------------------------------------
// Reality check

struct RealityReport {
  bool passed = true;
  double worst_ratio = 0.0; // max |Im| / (1 + |Re|)
  Point worst_point;
};

/// Samples `sample_count` seeded points in [-box, box]^{2n}.
inline RealityReport check_real(WeightExpr const& w, std::size_t sample_count, std::uint64_t seed, double box = 2.0) {
  if (sample_count < 1) throw std::invalid_argument("sample_count must be >= 1");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-box, box);
  RealityReport r;
  Point z(w.dim);
  for (std::size_t s = 0; s < sample_count; ++s) {
    for (auto& c : z) c = cplx(u(rng), u(rng));
    cplx const v = w.evaluate(z);
    double const ratio = std::abs(v.imag()) / (1.0 + std::abs(v.real()));
    if (ratio > r.worst_ratio || r.worst_point.empty()) {
      r.worst_ratio = ratio;
      r.worst_point = z;
    }
  }
  r.passed = r.worst_ratio <= 1e-10;
  return r;
}

/// Parses `source` as a weight on C^n and verifies that it is real-valued.
inline WeightExpr parse_weight(std::string_view source, std::size_t n, bool require_real = true) {
  if (n < 1) throw DimensionError("dimension must be >= 1");
  WeightExpr w{detail::Parser(source, n).parse(), n};
  if (require_real) {
    auto const rep = check_real(w, 64, 0x5eed);
    if (!rep.passed)
      throw std::domain_error("weight is not real-valued (|Im|/(1+|Re|) = " + std::to_string(rep.worst_ratio) + ")");
  }
  return w;
}

// ---------------------------------------------------------------------------
// Built-in weights

struct BuiltinWeight {
  std::string name;
  std::string description;
  std::size_t min_dim;
  std::size_t max_dim;
};

inline std::vector<BuiltinWeight> const& builtin_weights() {
  static std::vector<BuiltinWeight> const table{
      {"example_a", "|z1|^2 |z2|^2 + |z2|^4 on C^2; N_1 not compact by the mu_1 test, N_2 compact (s_2 = |z1|^2 + 5|z2|^2)", 2, 2},
      {"decoupled_quartic", "sum_j |z_j|^4; Levi eigenvalues 4|z_j|^2, N_1 not compact, N_2 compact (n = 2)", 1, 16},
      {"gaussian", "sum_j |z_j|^2; all Levi eigenvalues 1, N_q exists, N_1 not compact (n >= 2)", 1, 16},
  };
  return table;
}

inline std::string builtin_source(std::string_view name, std::size_t n) {
  for (auto const& b : builtin_weights()) {
    if (b.name != name) continue;
    if (n < b.min_dim || n > b.max_dim)
      throw DimensionError("built-in weight '" + b.name + "' is not defined for n = " + std::to_string(n));
    if (name == "example_a") return "modsq(z1)*modsq(z2) + modsq(z2)^2";
    std::string s;
    for (std::size_t j = 1; j <= n; ++j) {
      if (j > 1) s += " + ";
      s += "modsq(z" + std::to_string(j) + ")";
      if (name == "decoupled_quartic") s += "^2";
    }
    return s;
  }
  throw std::invalid_argument("unknown built-in weight '" + std::string(name) + "'");
}

inline WeightExpr builtin_weight(std::string_view name, std::size_t n) { return parse_weight(builtin_source(name, n), n); }

} // namespace dbarlab
