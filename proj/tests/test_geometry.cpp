#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "doctest.h"
#include "rfpinn/geometry.hpp"

using namespace rfpinn;
using namespace rfpinn::geo;

namespace {

const Segment kUnit{{0, 0}, {1, 0}};

DistanceField square(Join j) {
  DomainParams p;
  p.join = j;
  return build_named_domain("square", p);
}

}  // namespace

TEST_CASE("signed distance") {
  CHECK(signed_distance(kUnit, 0.3, 0.0) == 0.0);
  CHECK(signed_distance(kUnit, 0.3, 0.7) == doctest::Approx(0.7).epsilon(1e-15));
  CHECK(signed_distance(Segment{{0, 0}, {2, 0}}, 1.0, 1.0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK_THROWS_AS(signed_distance(Segment{{1, 1}, {1, 1}}, 0.0, 0.0), std::invalid_argument);
}

TEST_CASE("trimming function") {
  CHECK(trimming(kUnit, 0.5, 0.0) == doctest::Approx(0.25));
  CHECK(trimming(kUnit, 1.0, 0.0) == 0.0);
  CHECK(trimming(kUnit, 0.5, 0.5) == 0.0);
  CHECK(trimming(kUnit, 0.5, 0.5, Trimming::Verbatim) == doctest::Approx(-0.25));
}

TEST_CASE("segment ADF") {
  CHECK(adf_segment(kUnit, 0.37, 0.0) == 0.0);
  CHECK(adf_segment(kUnit, 0.5, 0.5) == doctest::Approx(std::sqrt(0.25 + 0.015625)).epsilon(1e-14));
  CHECK(adf_segment(kUnit, 2.0, 0.0) == doctest::Approx(2.0).epsilon(1e-14));
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-2, 2);
  for (int i = 0; i < 1000; ++i) CHECK(adf_segment(kUnit, u(rng), u(rng)) >= 0.0);
}

TEST_CASE("joins") {
  const double p = std::sqrt(0.25 + 0.015625);
  CHECK(join_normalized<double>({0.5, 0.0, 0.3}, 2) == 0.0);
  CHECK(join_normalized<double>({0.42}, 7) == 0.42);
  CHECK(join_normalized<double>({p, p, p, p}, 1) == doctest::Approx(0.128847).epsilon(1e-5));
  CHECK(join_naive<double>({0.5, 0.5, 0.5, 0.5}) == 0.0625);
  CHECK(join_non_normalized<double>({p, p, p, p}) == doctest::Approx(0.070566).epsilon(1e-5));
  CHECK_THROWS(join_normalized<double>({}, 1));
  CHECK_THROWS(join_naive<double>({}));
  CHECK_THROWS(join_non_normalized<double>({}));

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.01, 2.0);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> v(5);
    for (double& x : v) x = u(rng);
    for (int m : {1, 2, 4, 8, 64}) {
      const double j = join_normalized(v, m);
      CHECK(j <= *std::min_element(v.begin(), v.end()));
      std::vector<double> w = v;
      std::shuffle(w.begin(), w.end(), rng);
      CHECK(join_normalized(w, m) == doctest::Approx(j).epsilon(1e-14));
    }
  }
}

TEST_CASE("field values on the unit square") {
  CHECK(square({JoinKind::Normalized, 1}).value({0.5, 0.5}) == doctest::Approx(0.128847).epsilon(1e-5));
  CHECK(square({JoinKind::Naive, 1}).value({0.5, 0.0}) == 0.0);
  CHECK(square({JoinKind::Naive, 1}).value({0.5, 0.5}) == doctest::Approx(0.0625));
  CHECK(std::abs(square({JoinKind::Normalized, 64}).value({0.5, 0.5}) - 0.5) < 0.02 * 0.5);
}

TEST_CASE("field gradient") {
  const auto df = square({JoinKind::Normalized, 1});
  const auto g = df.gradient({0.5, 1e-9});
  CHECK(g.g[0] == doctest::Approx(0.0).scale(1.0).epsilon(1e-6));
  CHECK(g.g[1] == doctest::Approx(1.0).epsilon(1e-6));
  const auto gb = df.gradient({0.5, 0.0});
  CHECK(gb.g[1] == 1.0);
  CHECK_FALSE(gb.flagged);
  const auto gc = df.gradient({0.0, 0.0});
  CHECK(gc.flagged);
  CHECK(gc.g[0] == doctest::Approx(0.5));
  CHECK(gc.g[1] == doctest::Approx(0.5));

  const auto naive = square({JoinKind::Naive, 1}).gradient({0.5, 1e-9});
  CHECK(std::abs(std::hypot(naive.g[0], naive.g[1]) - 1.0) > 0.1);

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.02, 0.98);
  const double h = 1e-5;
  for (int i = 0; i < 100; ++i) {
    const Point2 x{u(rng), u(rng)};
    const auto a = df.gradient(x);
    const double fx = (df.value({x.x + h, x.y}) - df.value({x.x - h, x.y})) / (2 * h);
    const double fy = (df.value({x.x, x.y + h}) - df.value({x.x, x.y - h})) / (2 * h);
    CHECK(std::abs(a.g[0] - fx) < 1e-6);
    CHECK(std::abs(a.g[1] - fy) < 1e-6);
  }
}

TEST_CASE("field laplacian") {
  const auto d1 = square({JoinKind::Normalized, 1});
  const auto d8 = square({JoinKind::Normalized, 8});
  double a1 = 0, a8 = 0;
  for (int i = 0; i <= 980; ++i) {
    const double x = 0.01 + 0.001 * i;
    a1 = std::max(a1, std::abs(d1.laplacian({x, 0.5}).value));
    a8 = std::max(a8, std::abs(d8.laplacian({x, 0.5}).value));
  }
  CHECK(a8 > a1);

  const double h = 1e-4;
  for (Point2 x : {Point2{0.3, 0.6}, Point2{0.71, 0.2}, Point2{0.5, 0.5}}) {
    const double fd = (d1.value({x.x + h, x.y}) + d1.value({x.x - h, x.y}) + d1.value({x.x, x.y + h}) +
                       d1.value({x.x, x.y - h}) - 4 * d1.value(x)) /
                      (h * h);
    CHECK(std::abs(d1.laplacian(x).value - fd) < 1e-4);
  }
  CHECK(d1.laplacian({0.5, 0.0}).flagged);
}

TEST_CASE("exact distance") {
  const auto df = square({JoinKind::Normalized, 1});
  CHECK(df.edf({0.5, 0.5}) == 0.5);
  CHECK(df.edf({0.3, 0.0}) == 0.0);
  CHECK(df.edf({0.25, 0.1}) == doctest::Approx(0.1));
  Arc a{{0, 0}, 1.0, 0.0, std::numbers::pi / 2, true};
  CHECK(distance_to_arc(a, {0.5, 0.5}) == doctest::Approx(1.0 - std::sqrt(0.5)));
  CHECK(distance_to_arc(a, {-1.0, -1.0}) == doctest::Approx(std::hypot(2.0, 1.0)));
}

TEST_CASE("transfinite weights and interpolant") {
  auto w = transfinite_weights<double>({0.2, 0.4}, {1, 1});
  CHECK(w[0] == doctest::Approx(2.0 / 3.0));
  CHECK(w[1] == doctest::Approx(1.0 / 3.0));
  w = transfinite_weights<double>({0.0, 0.4, 0.7}, {1, 2, 1});
  CHECK(w[0] == 1.0);
  CHECK(w[1] == 0.0);
  w = transfinite_weights<double>({0.3, 0.3, 0.3}, {2, 2, 2});
  for (double v : w) CHECK(v == doctest::Approx(1.0 / 3.0));
  CHECK_THROWS_AS(transfinite_weights<double>({0.0, 0.0}, {1, 1}), DegenerateWeights);

  auto pieces = rectangle_pieces(0, 0, 1, 1);
  pieces[2].bc_value = sin(std::numbers::pi * Expr::x());
  const DistanceField df(pieces, {JoinKind::Normalized, 1});
  CHECK(df.interpolant(0.5, 1.0) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(df.interpolant(0.5, 0.0) == 0.0);

  const DistanceField one({pieces[2]}, {JoinKind::Normalized, 1});
  CHECK(one.interpolant(0.3, 0.4) == doctest::Approx(std::sin(0.3 * std::numbers::pi)));

  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<int> mu{1, 2, 3, 1};
  for (int i = 0; i < 500; ++i) {
    const auto phi = df.piece_values(u(rng), u(rng));
    const auto ws = transfinite_weights(phi, mu);
    double s = 0;
    for (double v : ws) s += v;
    CHECK(std::abs(s - 1.0) < 1e-12);
  }
}

TEST_CASE("named domains") {
  CHECK(build_named_domain("square").pieces().size() == 4);
  CHECK(build_named_domain("l_shape").pieces().size() == 6);
  CHECK(build_named_domain("heart").pieces().size() == 4);
  CHECK(build_named_domain("rect_with_obstacle").pieces().size() == 8);
  CHECK_THROWS_AS(build_named_domain("hexagon"), std::invalid_argument);

  const auto ann = build_named_domain("annulus");
  const double r = 0.75;
  const double po = (1.0 - r * r) / 2.0, pi = (r * r - 0.25) / 1.0;
  CHECK(ann.value({r, 0.0}) == doctest::Approx(1.0 / (1.0 / po + 1.0 / pi)).epsilon(1e-14));
  CHECK(ann.contains({0.75, 0.0}));
  CHECK_FALSE(ann.contains({0.1, 0.0}));
  CHECK_FALSE(ann.contains({1.1, 0.0}));
}

TEST_CASE("naive join on the L-shape has a false zero inside") {
  DomainParams p;
  p.join = {JoinKind::Naive, 1};
  const auto l = build_named_domain("l_shape", p);
  for (double y : {0.1, 0.25, 0.4}) {
    CHECK(l.contains({0.5, y}));
    CHECK(std::abs(l.value({0.5, y})) < 1e-15);
  }
  p.join = {JoinKind::Normalized, 1};
  CHECK(build_named_domain("l_shape", p).value({0.5, 0.25}) > 0.01);
}

TEST_CASE("heart area and interior sampling") {
  const HeartParams hp;
  const auto heart = build_named_domain("heart");
  const BBox b = heart.bbox();
  std::mt19937_64 rng(17);
  double acc = 0;
  sample_interior(heart, 200000, rng, &acc);
  const double mc = acc * (b.x1 - b.x0) * (b.y1 - b.y0);
  CHECK(std::abs(mc - heart_area(hp)) < 0.01 * heart_area(hp));
}

TEST_CASE("boundary samples lie on the boundary for every join") {
  std::mt19937_64 rng(23);
  for (const char* name : {"square", "l_shape", "heart", "annulus", "rect_with_obstacle"}) {
    for (Join j : {Join{JoinKind::Naive, 1}, Join{JoinKind::NonNormalized, 1}, Join{JoinKind::Normalized, 1},
                   Join{JoinKind::Normalized, 4}}) {
      DomainParams p;
      p.join = j;
      p.heart.center = {0.5, 0.5};
      p.heart.scale = 0.1;
      const auto df = build_named_domain(name, p);
      for (const auto& s : sample_boundary(df, 200, rng)) {
        CHECK(std::abs(df.value(s.x)) < 1e-9);
        CHECK(df.edf(s.x) < 1e-12);
      }
    }
  }
}

TEST_CASE("boundary allocation is proportional to length") {
  std::mt19937_64 rng(1);
  const auto l = build_named_domain("l_shape");
  const auto s = sample_boundary(l, 400, rng);
  CHECK(s.size() == 400);
  int n0 = 0;
  for (const auto& b : s) n0 += b.piece == 0;
  CHECK(n0 == 100);
}

TEST_CASE("slice export") {
  std::ostringstream out;
  write_slice(square({JoinKind::Normalized, 1}), 0.5, 11, 0.0, 1.0, out, FieldKind::Edf);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == "x,value");
  int rows = 0;
  while (std::getline(in, line)) {
    const double x = std::stod(line.substr(0, line.find(',')));
    const double v = std::stod(line.substr(line.find(',') + 1));
    CHECK(v == doctest::Approx(std::min({x, 1.0 - x, 0.5})));
    ++rows;
  }
  CHECK(rows == 11);
}
