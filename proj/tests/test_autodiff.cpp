#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "rfpinn/expr.hpp"
#include "rfpinn/jet.hpp"
#include "rfpinn/tape.hpp"

using namespace rfpinn;
using namespace rfpinn::ad;
using Eigen::MatrixXd;
using Eigen::VectorXd;

TEST_CASE("jet layout channel ordering") {
  const JetLayout l(2, 2);
  CHECK(l.channels() == 6);
  CHECK(l.channel({}) == 0);
  CHECK(l.channel({0}) == 1);
  CHECK(l.channel({1}) == 2);
  CHECK(l.channel({0, 1}) == l.channel({1, 0}));
  CHECK_THROWS_AS(l.channel({0, 0, 0}), std::out_of_range);
  CHECK(JetLayout(3, 3).channels() == 20);
  CHECK_THROWS_AS(JetLayout(4, 1), std::invalid_argument);
}

TEST_CASE("polynomial x^2 y") {
  const Expr f = Expr::x() * Expr::x() * Expr::y();
  const auto d = eval_with_spatial_derivs(f, 2.0, 3.0);
  CHECK(d.value == 12.0);
  CHECK(d.gradient[0] == 12.0);
  CHECK(d.gradient[1] == 4.0);
  CHECK(d.hessian[0][0] == 6.0);
  CHECK(d.hessian[0][1] == 4.0);
  CHECK(d.hessian[1][0] == 4.0);
  CHECK(d.hessian[1][1] == 0.0);
}

TEST_CASE("laplacian of sin(2 pi (x + y))") {
  const double tau = 2.0 * std::numbers::pi;
  const Expr f = sin(tau * (Expr::x() + Expr::y()));
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 50; ++i) {
    const double x = u(rng), y = u(rng);
    const auto d = eval_with_spatial_derivs(f, x, y);
    const double lap = d.hessian[0][0] + d.hessian[1][1];
    CHECK(lap == doctest::Approx(-2.0 * tau * tau * std::sin(tau * (x + y))).epsilon(1e-12));
  }
}

TEST_CASE("unsupported primitive is rejected when building") {
  CHECK_THROWS_AS(Expr::unary("relu", Expr::x()), std::invalid_argument);
  CHECK_NOTHROW(Expr::unary("tanh", Expr::x()));
}

TEST_CASE("guarded division stays finite") {
  const Expr f = Expr(1.0) / (Expr::x() - Expr::x());
  CHECK(std::isfinite(f(0.3, 0.2)));
}

TEST_CASE("third-order carrier matches closed form") {
  // f = exp(x) * sin(y): f_xxy = exp(x) cos(y)
  const Expr f = exp(Expr::x()) * sin(Expr::y());
  const Jet3 j = f(Jet3::variable(0.4, 0), Jet3::variable(-0.7, 1));
  CHECK(j.d(0, 0, 1) == doctest::Approx(std::exp(0.4) * std::cos(-0.7)).epsilon(1e-13));
  CHECK(j.d(1, 1, 1) == doctest::Approx(-std::exp(0.4) * std::cos(-0.7)).epsilon(1e-13));
}

TEST_CASE("unary derivative stacks against finite differences") {
  for (Unary u : {Unary::Tanh, Unary::Sigmoid, Unary::Silu, Unary::Gelu, Unary::Erf, Unary::Sin}) {
    for (double a : {-1.3, 0.0, 0.2, 2.1}) {
      const double h = 1e-4;
      const DerivStack p = unary_derivs(u, a + h), m = unary_derivs(u, a - h), c = unary_derivs(u, a);
      for (int k = 0; k < kMaxUnaryDeriv; ++k) {
        const double fd = (p[k] - m[k]) / (2 * h);
        CHECK(c[k + 1] == doctest::Approx(fd).epsilon(1e-6).scale(1.0));
      }
    }
  }
}

// ---- tape ------------------------------------------------------------------

namespace {

struct TinyNet {
  ParamVector theta;
  int w1, b1, w2, b2;
  TinyNet(int width, unsigned seed) {
    w1 = theta.add_block("W1", width, 2);
    b1 = theta.add_block("b1", width, 1);
    w2 = theta.add_block("W2", 1, width);
    b2 = theta.add_block("b2", 1, 1);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 0.8);
    for (Eigen::Index i = 0; i < theta.size(); ++i) theta.values()[i] = n(rng);
  }
};

// Mean squared Poisson residual -lap(u) - f on the tape.
Var poisson_loss(Tape& t, TinyNet& net, const MatrixXd& pts, Unary act) {
  const auto& L = layout_for(2, 2);
  Var x = t.seeded_input(pts, L);
  Var h = t.unary(act, t.linear(t.param(net.theta, net.w1), x, t.param(net.theta, net.b1)));
  Var u = t.linear(t.param(net.theta, net.w2), h, t.param(net.theta, net.b2));
  Var lap = t.add(t.channel(u, L.channel({0, 0})), t.channel(u, L.channel({1, 1})));
  MatrixXd f(1, pts.cols());
  for (Eigen::Index i = 0; i < pts.cols(); ++i) f(0, i) = std::sin(pts(0, i) + 2 * pts(1, i));
  Var r = t.add(lap, t.constant(f, layout_for(0, 0), pts.cols()));
  return t.mean(t.mul(r, r));
}

double poisson_loss_scalar(const TinyNet& net, const MatrixXd& pts, Unary act) {
  const auto W1 = net.theta.block(net.w1);
  const auto b1 = net.theta.block(net.b1);
  const auto W2 = net.theta.block(net.w2);
  const auto b2 = net.theta.block(net.b2);
  double acc = 0.0;
  for (Eigen::Index p = 0; p < pts.cols(); ++p) {
    Jet2 xs[2] = {Jet2::variable(pts(0, p), 0), Jet2::variable(pts(1, p), 1)};
    Jet2 u(b2(0, 0));
    for (Eigen::Index k = 0; k < W1.rows(); ++k) {
      const Jet2 z = xs[0] * W1(k, 0) + xs[1] * W1(k, 1) + b1(k, 0);
      u += W2(0, k) * apply_unary(act, z);
    }
    const double r = u.laplacian() + std::sin(pts(0, p) + 2 * pts(1, p));
    acc += r * r;
  }
  return acc / static_cast<double>(pts.cols());
}

}  // namespace

TEST_CASE("half squared norm has gradient theta") {
  ParamVector p;
  const int b = p.add_block("w", 3, 2);
  for (int i = 0; i < 6; ++i) p.values()[i] = 0.3 * i - 0.7;
  Tape t;
  Var w = t.param(p, b);
  Var loss = t.scale(t.sum(t.mul(w, w)), 0.5);
  const VectorXd g = t.gradient(loss, p);
  for (int i = 0; i < 6; ++i) CHECK(g[i] == doctest::Approx(p.values()[i]).epsilon(1e-15));
}

TEST_CASE("tape forward equals scalar carrier forward") {
  TinyNet net(6, 3);
  MatrixXd pts = MatrixXd::Random(2, 9);
  for (Unary act : {Unary::Tanh, Unary::Silu, Unary::Gelu}) {
    Tape t;
    Var loss = poisson_loss(t, net, pts, act);
    CHECK(t.scalar(loss) == doctest::Approx(poisson_loss_scalar(net, pts, act)).epsilon(1e-13));
  }
}

TEST_CASE("parameter gradient of PDE residual matches finite differences") {
  for (Unary act : {Unary::Tanh, Unary::Silu, Unary::Gelu}) {
    TinyNet net(5, 11);
    MatrixXd pts = MatrixXd::Random(2, 7);
    Tape t;
    Var loss = poisson_loss(t, net, pts, act);
    const VectorXd g = t.gradient(loss, net.theta);
    for (Eigen::Index i = 0; i < net.theta.size(); ++i) {
      const double h = 1e-6 * std::max(1.0, std::abs(net.theta.values()[i]));
      const double keep = net.theta.values()[i];
      net.theta.values()[i] = keep + h;
      const double lp = poisson_loss_scalar(net, pts, act);
      net.theta.values()[i] = keep - h;
      const double lm = poisson_loss_scalar(net, pts, act);
      net.theta.values()[i] = keep;
      const double fd = (lp - lm) / (2 * h);
      CHECK(g[i] == doctest::Approx(fd).epsilon(1e-5).scale(1e-3));
    }
  }
}

TEST_CASE("replay after update is bit-exact and gradients are deterministic") {
  TinyNet net(8, 5);
  MatrixXd pts = MatrixXd::Random(2, 16);
  Tape t;
  Var loss = poisson_loss(t, net, pts, Unary::Tanh);
  const VectorXd g1 = t.gradient(loss, net.theta);
  const VectorXd g2 = t.gradient(loss, net.theta);
  CHECK((g1.array() == g2.array()).all());

  net.theta.values() -= 1e-2 * g1;
  t.replay();
  Tape fresh;
  Var loss2 = poisson_loss(fresh, net, pts, Unary::Tanh);
  CHECK(t.scalar(loss) == fresh.scalar(loss2));
  const VectorXd a = t.gradient(loss, net.theta);
  const VectorXd b = fresh.gradient(loss2, net.theta);
  CHECK((a.array() == b.array()).all());
}

TEST_CASE("gradient of a sum is the sum of gradients") {
  TinyNet net(4, 9);
  MatrixXd pts = MatrixXd::Random(2, 5);
  Tape t;
  Var l1 = poisson_loss(t, net, pts, Unary::Tanh);
  Var l2 = t.scale(t.mean(t.mul(t.param(net.theta, net.w1), t.param(net.theta, net.w1))), 1.0);
  Var both = t.weighted_sum({l1, l2}, {1.0, 1.0});
  const VectorXd g = t.gradient(both, net.theta);
  const VectorXd g1 = t.gradient(l1, net.theta);
  const VectorXd g2 = t.gradient(l2, net.theta);
  CHECK((g - g1 - g2).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("foreign node is rejected") {
  Tape a, b;
  Var v = a.scalar_constant(1.0);
  CHECK_THROWS_AS(b.value(v), std::invalid_argument);
  ParamVector p;
  CHECK_THROWS(b.gradient(Var{}, p));
}
