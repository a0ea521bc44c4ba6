#pragma once
/**
 * @file expr.hpp
 * @brief Immutable expression trees over a few named variables.
 *
 * Sources, boundary data and manufactured solutions are written once as an
 * Expr and evaluated with whatever scalar the caller needs: double for plain
 * values, Jet<D, K> for derivatives, long double for high-accuracy stencils.
 */

#include <cmath>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

#include "rfpinn/jet.hpp"
#include "rfpinn/unary.hpp"

namespace rfpinn {

class Expr {
 public:
  enum class Op { Const, Var, Add, Sub, Mul, Div, Neg, Unary, PowInt };

  /// Denominators are kept at least this far from zero.
  static constexpr double kDivGuard = 1e-12;

  Expr() : Expr(constant(0.0)) {}
  Expr(double c) : Expr(constant(c)) {}  // NOLINT(google-explicit-constructor)

  static Expr constant(double c) {
    auto n = std::make_shared<Node>();
    n->op = Op::Const;
    n->c = c;
    return Expr(std::move(n));
  }
  static Expr var(int index) {
    if (index < 0 || index > 2) throw std::invalid_argument("Expr::var: index must be 0, 1 or 2");
    auto n = std::make_shared<Node>();
    n->op = Op::Var;
    n->index = index;
    return Expr(std::move(n));
  }
  static Expr x() { return var(0); }
  static Expr y() { return var(1); }
  static Expr t() { return var(2); }

  /// Named primitive; anything outside the supported set is rejected here.
  static Expr unary(std::string_view name, const Expr& a) { return unary(ad::unary_from_name(name), a); }
  static Expr unary(ad::Unary u, const Expr& a) {
    auto n = std::make_shared<Node>();
    n->op = Op::Unary;
    n->fn = u;
    n->a = a.node_;
    return Expr(std::move(n));
  }
  static Expr pow(const Expr& a, int k) {
    auto n = std::make_shared<Node>();
    n->op = Op::PowInt;
    n->index = k;
    n->a = a.node_;
    return Expr(std::move(n));
  }

  friend Expr operator+(const Expr& a, const Expr& b) { return binary(Op::Add, a, b); }
  friend Expr operator-(const Expr& a, const Expr& b) { return binary(Op::Sub, a, b); }
  friend Expr operator*(const Expr& a, const Expr& b) { return binary(Op::Mul, a, b); }
  friend Expr operator/(const Expr& a, const Expr& b) { return binary(Op::Div, a, b); }
  friend Expr operator-(const Expr& a) {
    auto n = std::make_shared<Node>();
    n->op = Op::Neg;
    n->a = a.node_;
    return Expr(std::move(n));
  }

  /// Evaluates with vars[i] bound to variable i.
  template <typename S>
  S eval(std::span<const S> vars) const {
    return eval_node<S>(*node_, vars);
  }
  template <typename S>
  S operator()(const S& x, const S& y) const {
    const S v[2] = {x, y};
    return eval<S>(std::span<const S>(v, 2));
  }
  template <typename S>
  S operator()(const S& x, const S& y, const S& t) const {
    const S v[3] = {x, y, t};
    return eval<S>(std::span<const S>(v, 3));
  }

  bool is_constant() const { return node_->op == Op::Const; }
  double constant_value() const { return node_->c; }
  /// Largest variable index referenced, or -1.
  int max_var() const { return max_var(*node_); }
  std::string to_string() const { return to_string(*node_); }

 private:
  struct Node {
    Op op = Op::Const;
    double c = 0.0;
    int index = 0;
    ad::Unary fn = ad::Unary::Exp;
    std::shared_ptr<const Node> a, b;
  };

  explicit Expr(std::shared_ptr<const Node> n) : node_(std::move(n)) {}

  static Expr binary(Op op, const Expr& a, const Expr& b) {
    auto n = std::make_shared<Node>();
    n->op = op;
    n->a = a.node_;
    n->b = b.node_;
    return Expr(std::move(n));
  }

  template <typename S>
  static S guard(const S& d) {
    const double v = static_cast<double>(ad::value_of(d));
    if (std::abs(v) >= kDivGuard) return d;
    return S(v < 0 ? -kDivGuard : kDivGuard);
  }

  template <typename S>
  static S eval_node(const Node& n, std::span<const S> vars) {
    switch (n.op) {
      case Op::Const:
        return S(n.c);
      case Op::Var:
        if (n.index >= static_cast<int>(vars.size())) throw std::out_of_range("Expr: unbound variable");
        return vars[n.index];
      case Op::Add:
        return eval_node<S>(*n.a, vars) + eval_node<S>(*n.b, vars);
      case Op::Sub:
        return eval_node<S>(*n.a, vars) - eval_node<S>(*n.b, vars);
      case Op::Mul:
        return eval_node<S>(*n.a, vars) * eval_node<S>(*n.b, vars);
      case Op::Div:
        return eval_node<S>(*n.a, vars) / guard(eval_node<S>(*n.b, vars));
      case Op::Neg:
        return -eval_node<S>(*n.a, vars);
      case Op::PowInt: {
        const S base = eval_node<S>(*n.a, vars);
        if (n.index < 0) return S(1.0) / guard(pow_int(base, -n.index));
        return pow_int(base, n.index);
      }
      case Op::Unary:
        return apply(n.fn, eval_node<S>(*n.a, vars));
    }
    throw std::logic_error("Expr: corrupt node");
  }

  template <typename S>
  static S pow_int(const S& b, int k) {
    S r(1.0);
    for (int i = 0; i < k; ++i) r = r * b;
    return r;
  }

  template <typename S>
  static S apply(ad::Unary u, const S& a) {
    if constexpr (std::is_floating_point_v<S>) {
      return static_cast<S>(ad::apply_unary(u, static_cast<double>(a)));
    } else {
      return ad::apply_unary(u, a);
    }
  }

  static int max_var(const Node& n) {
    int m = n.op == Op::Var ? n.index : -1;
    if (n.a) m = std::max(m, max_var(*n.a));
    if (n.b) m = std::max(m, max_var(*n.b));
    return m;
  }

  static std::string to_string(const Node& n) {
    switch (n.op) {
      case Op::Const: return std::to_string(n.c);
      case Op::Var: return std::string(1, "xyt"[n.index]);
      case Op::Add: return "(" + to_string(*n.a) + " + " + to_string(*n.b) + ")";
      case Op::Sub: return "(" + to_string(*n.a) + " - " + to_string(*n.b) + ")";
      case Op::Mul: return "(" + to_string(*n.a) + " * " + to_string(*n.b) + ")";
      case Op::Div: return "(" + to_string(*n.a) + " / " + to_string(*n.b) + ")";
      case Op::Neg: return "-" + to_string(*n.a);
      case Op::PowInt: return to_string(*n.a) + "^" + std::to_string(n.index);
      case Op::Unary: return std::string(ad::unary_name(n.fn)) + "(" + to_string(*n.a) + ")";
    }
    return "?";
  }

  std::shared_ptr<const Node> node_;
};

inline Expr sin(const Expr& a) { return Expr::unary(ad::Unary::Sin, a); }
inline Expr cos(const Expr& a) { return Expr::unary(ad::Unary::Cos, a); }
inline Expr exp(const Expr& a) { return Expr::unary(ad::Unary::Exp, a); }
inline Expr tanh(const Expr& a) { return Expr::unary(ad::Unary::Tanh, a); }
inline Expr sqrt(const Expr& a) { return Expr::unary(ad::Unary::Sqrt, a); }
inline Expr erf(const Expr& a) { return Expr::unary(ad::Unary::Erf, a); }
inline Expr sigmoid(const Expr& a) { return Expr::unary(ad::Unary::Sigmoid, a); }
inline Expr log(const Expr& a) { return Expr::unary(ad::Unary::Log, a); }
inline Expr pow(const Expr& a, int k) { return Expr::pow(a, k); }

namespace ad {

/// Value, spatial gradient and Hessian of a two-variable expression at (x, y).
struct SpatialDerivs {
  double value;
  std::array<double, 2> gradient;
  std::array<std::array<double, 2>, 2> hessian;
};

inline SpatialDerivs eval_with_spatial_derivs(const Expr& f, double x, double y) {
  const Jet2 j = f(Jet2::variable(x, 0), Jet2::variable(y, 1));
  const double hxy = j.d(0, 1);
  return {j.value(), {j.d(0), j.d(1)}, {{{j.d(0, 0), hxy}, {hxy, j.d(1, 1)}}}};
}

}  // namespace ad
}  // namespace rfpinn
