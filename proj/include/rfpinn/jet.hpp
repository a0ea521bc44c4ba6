#pragma once
/**
 * @file jet.hpp
 * @brief Scalar truncated Taylor carrier (a DiffScalar) over D spatial seeds.
 *
 * Jet<2, 2> carries value, gradient and Hessian of any composed expression at
 * a single point; Jet<2, 3> adds the third partials needed by residual-gradient
 * penalties. The mixed second partial is stored once, so Hessians are
 * symmetric by construction.
 */

#include <array>
#include <cmath>

#include "rfpinn/jet_layout.hpp"
#include "rfpinn/unary.hpp"

namespace rfpinn::ad {

constexpr int jet_channels(int dims, int order) {
  int n = 1;
  if (order >= 1) n += dims;
  if (order >= 2) n += dims * (dims + 1) / 2;
  if (order >= 3) n += dims * (dims + 1) * (dims + 2) / 6;
  return n;
}

template <int D, int K>
class Jet {
  static_assert(D >= 1 && D <= kMaxSeeds && K >= 1 && K <= kMaxOrder);

 public:
  static constexpr int kDims = D;
  static constexpr int kOrder = K;
  static constexpr int kChannels = jet_channels(D, K);

  static const JetLayout& layout() {
    static const JetLayout l(D, K);
    return l;
  }

  Jet() { c_.fill(0.0); }
  Jet(double v) {  // NOLINT(google-explicit-constructor): constants promote implicitly
    c_.fill(0.0);
    c_[0] = v;
  }

  /// Independent variable seeded along direction `seed`.
  static Jet variable(double v, int seed) {
    Jet j(v);
    j.c_[1 + seed] = 1.0;
    return j;
  }

  double value() const { return c_[0]; }
  double d(int i) const { return c_[layout().channel({i})]; }
  double d(int i, int j) const { return c_[layout().channel({i, j})]; }
  double d(int i, int j, int k) const { return c_[layout().channel({i, j, k})]; }
  double laplacian() const {
    double s = 0.0;
    for (int i = 0; i < D; ++i) s += d(i, i);
    return s;
  }

  double& operator[](int ch) { return c_[ch]; }
  double operator[](int ch) const { return c_[ch]; }
  const std::array<double, kChannels>& raw() const { return c_; }

  Jet& operator+=(const Jet& o) {
    for (int i = 0; i < kChannels; ++i) c_[i] += o.c_[i];
    return *this;
  }
  Jet& operator-=(const Jet& o) {
    for (int i = 0; i < kChannels; ++i) c_[i] -= o.c_[i];
    return *this;
  }
  Jet& operator*=(double s) {
    for (double& v : c_) v *= s;
    return *this;
  }
  Jet& operator*=(const Jet& o) { return *this = *this * o; }
  Jet& operator/=(const Jet& o) { return *this = *this / o; }

  friend Jet operator+(Jet a, const Jet& b) { return a += b; }
  friend Jet operator-(Jet a, const Jet& b) { return a -= b; }
  friend Jet operator-(Jet a) {
    for (double& v : a.c_) v = -v;
    return a;
  }
  friend Jet operator*(Jet a, double s) { return a *= s; }
  friend Jet operator*(double s, Jet a) { return a *= s; }
  friend Jet operator/(Jet a, double s) { return a *= (1.0 / s); }

  friend Jet operator*(const Jet& a, const Jet& b) {
    Jet z;
    const auto& l = layout();
    for (int ch = 0; ch < kChannels; ++ch) {
      double acc = 0.0;
      for (const auto& t : l.product_terms(ch)) acc += a.c_[t.x] * b.c_[t.y];
      z.c_[ch] = acc;
    }
    return z;
  }
  friend Jet operator/(const Jet& a, const Jet& b) { return a * apply(Unary::Reciprocal, b); }
  friend Jet operator/(double s, const Jet& b) { return apply(Unary::Reciprocal, b) * s; }

  friend bool operator<(const Jet& a, const Jet& b) { return a.value() < b.value(); }
  friend bool operator>(const Jet& a, const Jet& b) { return a.value() > b.value(); }

  /// Chain rule for f(a) given the derivative stack of f at a.value().
  static Jet compose(const Jet& a, const DerivStack& f) {
    Jet z;
    const auto& l = layout();
    z.c_[0] = f[0];
    for (int ch = 1; ch < kChannels; ++ch) {
      double acc = 0.0;
      for (const auto& t : l.composition_terms(ch)) {
        double p = f[t.order];
        for (int b = 0; b < t.order; ++b) p *= a.c_[t.blocks[b]];
        acc += p;
      }
      z.c_[ch] = acc;
    }
    return z;
  }

  static Jet apply(Unary u, const Jet& a) { return compose(a, unary_derivs(u, a.value(), K)); }

 private:
  std::array<double, kChannels> c_;
};

template <int D, int K> Jet<D, K> tanh(const Jet<D, K>& a) { return Jet<D, K>::apply(Unary::Tanh, a); }
template <int D, int K> Jet<D, K> exp(const Jet<D, K>& a) { return Jet<D, K>::apply(Unary::Exp, a); }
template <int D, int K> Jet<D, K> log(const Jet<D, K>& a) { return Jet<D, K>::apply(Unary::Log, a); }
template <int D, int K> Jet<D, K> sin(const Jet<D, K>& a) { return Jet<D, K>::apply(Unary::Sin, a); }
template <int D, int K> Jet<D, K> cos(const Jet<D, K>& a) { return Jet<D, K>::apply(Unary::Cos, a); }
template <int D, int K> Jet<D, K> sqrt(const Jet<D, K>& a) { return Jet<D, K>::apply(Unary::Sqrt, a); }
template <int D, int K> Jet<D, K> erf(const Jet<D, K>& a) { return Jet<D, K>::apply(Unary::Erf, a); }
template <int D, int K> Jet<D, K> sigmoid(const Jet<D, K>& a) { return Jet<D, K>::apply(Unary::Sigmoid, a); }

/// Integer power by repeated multiplication (exact for polynomials).
template <int D, int K>
Jet<D, K> pow(const Jet<D, K>& a, int n) {
  if (n < 0) return 1.0 / pow(a, -n);
  Jet<D, K> r(1.0);
  for (int i = 0; i < n; ++i) r *= a;
  return r;
}

inline double value_of(double x) { return x; }
template <int D, int K> double value_of(const Jet<D, K>& j) { return j.value(); }

/// Unary dispatch usable for both plain doubles and carriers.
inline double apply_unary(Unary u, double a) { return unary_derivs(u, a, 0)[0]; }
template <int D, int K> Jet<D, K> apply_unary(Unary u, const Jet<D, K>& a) { return Jet<D, K>::apply(u, a); }

using Jet2 = Jet<2, 2>;
using Jet3 = Jet<2, 3>;

}  // namespace rfpinn::ad
