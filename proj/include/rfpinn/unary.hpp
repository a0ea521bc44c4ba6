#pragma once
/**
 * @file unary.hpp
 * @brief Derivative stacks f(a), f'(a), ..., f^(n)(a) of the supported
 *        univariate primitives, n <= 4.
 *
 * Reverse passes through third-order carriers need one order more than the
 * forward pass, hence the fourth derivative.
 */

#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <string_view>

namespace rfpinn::ad {

inline constexpr int kMaxUnaryDeriv = 4;
using DerivStack = std::array<double, kMaxUnaryDeriv + 1>;

enum class Unary {
  Tanh,
  Sigmoid,
  Silu,
  Gelu,
  Exp,
  Log,
  Sin,
  Cos,
  Sqrt,
  Erf,
  Reciprocal,
  Square,
};

inline std::string_view unary_name(Unary u) {
  switch (u) {
    case Unary::Tanh: return "tanh";
    case Unary::Sigmoid: return "sigmoid";
    case Unary::Silu: return "silu";
    case Unary::Gelu: return "gelu";
    case Unary::Exp: return "exp";
    case Unary::Log: return "log";
    case Unary::Sin: return "sin";
    case Unary::Cos: return "cos";
    case Unary::Sqrt: return "sqrt";
    case Unary::Erf: return "erf";
    case Unary::Reciprocal: return "recip";
    case Unary::Square: return "square";
  }
  return "?";
}

/// Throws std::invalid_argument for names outside the supported set.
inline Unary unary_from_name(std::string_view name) {
  for (Unary u : {Unary::Tanh, Unary::Sigmoid, Unary::Silu, Unary::Gelu, Unary::Exp, Unary::Log, Unary::Sin,
                  Unary::Cos, Unary::Sqrt, Unary::Erf, Unary::Reciprocal, Unary::Square})
    if (unary_name(u) == name) return u;
  throw std::invalid_argument("unsupported primitive: " + std::string(name));
}

namespace detail {

inline void sigmoid_stack(double a, DerivStack& d) {
  // Numerically stable logistic.
  const double s = a >= 0 ? 1.0 / (1.0 + std::exp(-a)) : std::exp(a) / (1.0 + std::exp(a));
  const double q = s * (1.0 - s);
  d[0] = s;
  d[1] = q;
  d[2] = q * (1.0 - 2.0 * s);
  d[3] = q * (1.0 - 6.0 * s + 6.0 * s * s);
  d[4] = q * (1.0 - 2.0 * s) * (1.0 - 12.0 * s + 12.0 * s * s);
}

}  // namespace detail

/// Fills d[0..n] with the derivative stack of u at a.
inline DerivStack unary_derivs(Unary u, double a, int n = kMaxUnaryDeriv) {
  DerivStack d{};
  switch (u) {
    case Unary::Tanh: {
      const double t = std::tanh(a);
      const double s = 1.0 - t * t;
      d = {t, s, -2.0 * t * s, s * (6.0 * t * t - 2.0), 8.0 * t * s * (2.0 - 3.0 * t * t)};
      break;
    }
    case Unary::Sigmoid:
      detail::sigmoid_stack(a, d);
      break;
    case Unary::Silu: {
      DerivStack s{};
      detail::sigmoid_stack(a, s);
      d[0] = a * s[0];
      for (int k = 1; k <= kMaxUnaryDeriv; ++k) d[k] = a * s[k] + k * s[k - 1];
      break;
    }
    case Unary::Gelu: {
      // z * Phi(z) with Phi the exact Gaussian CDF.
      const double pdf = std::exp(-0.5 * a * a) / std::sqrt(2.0 * std::numbers::pi);
      const double cdf = 0.5 * std::erfc(-a / std::numbers::sqrt2);
      const std::array<double, 5> big_phi = {cdf, pdf, -a * pdf, (a * a - 1.0) * pdf, (3.0 * a - a * a * a) * pdf};
      d[0] = a * cdf;
      for (int k = 1; k <= kMaxUnaryDeriv; ++k) d[k] = a * big_phi[k] + k * big_phi[k - 1];
      break;
    }
    case Unary::Exp: {
      const double e = std::exp(a);
      d = {e, e, e, e, e};
      break;
    }
    case Unary::Log: {
      const double r = 1.0 / a;
      d = {std::log(a), r, -r * r, 2.0 * r * r * r, -6.0 * r * r * r * r};
      break;
    }
    case Unary::Sin: {
      const double s = std::sin(a), c = std::cos(a);
      d = {s, c, -s, -c, s};
      break;
    }
    case Unary::Cos: {
      const double s = std::sin(a), c = std::cos(a);
      d = {c, -s, -c, s, c};
      break;
    }
    case Unary::Sqrt: {
      const double r = std::sqrt(a);
      const double inv = 1.0 / a;
      d[0] = r;
      d[1] = 0.5 * r * inv;
      d[2] = -0.5 * d[1] * inv;
      d[3] = -1.5 * d[2] * inv;
      d[4] = -2.5 * d[3] * inv;
      break;
    }
    case Unary::Erf: {
      const double g = 2.0 / std::sqrt(std::numbers::pi) * std::exp(-a * a);
      d = {std::erf(a), g, -2.0 * a * g, (4.0 * a * a - 2.0) * g, (12.0 * a - 8.0 * a * a * a) * g};
      break;
    }
    case Unary::Reciprocal: {
      const double r = 1.0 / a;
      d = {r, -r * r, 2.0 * r * r * r, -6.0 * r * r * r * r, 24.0 * r * r * r * r * r};
      break;
    }
    case Unary::Square:
      d = {a * a, 2.0 * a, 2.0, 0.0, 0.0};
      break;
  }
  for (int k = n + 1; k <= kMaxUnaryDeriv; ++k) d[k] = 0.0;
  return d;
}

}  // namespace rfpinn::ad
