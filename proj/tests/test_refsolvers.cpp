#include <doctest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "rfpinn/refsolvers.hpp"

using namespace rfpinn;
using namespace rfpinn::ref;

namespace {
constexpr double kPi = std::numbers::pi;

// u = cos(pi x / 2) sin(pi (y + 1/4)) on the unit square
double manu(double x, double y) { return std::cos(kPi * x / 2) * std::sin(kPi * (y + 0.25)); }
Expr manu_expr() { return cos(kPi / 2 * Expr::x()) * sin(kPi * (Expr::y() + 0.25)); }

double poisson_error(int cells) {
  const Grid2 g = Grid2::unit(cells);
  const Expr f = (kPi * kPi / 4 + kPi * kPi) * manu_expr();
  const Expr gn = -kPi * cos(kPi / 2 * Expr::x()) * cos(kPi * (Expr::y() + 0.25));  // -u_y
  double res = 0;
  const NodeField u = fdm_poisson_mixed(g, f, manu, gn, &res);
  CHECK(res < 1e-8);
  double err = 0;
  for (int j = 0; j < g.nodes_y(); ++j)
    for (int i = 0; i < g.nodes_x(); ++i) err = std::max(err, std::abs(u(j, i) - manu(g.x(i), g.y(j))));
  return err;
}
}  // namespace

TEST_CASE("poisson solver: zero data gives zero") {
  const Grid2 g = Grid2::unit(20);
  const NodeField u = fdm_poisson_mixed(g, Expr(0.0), [](double, double) { return 0.0; }, Expr(0.0));
  CHECK(u.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("poisson solver: second-order convergence") {
  const double e1 = poisson_error(16), e2 = poisson_error(32), e3 = poisson_error(64);
  const double o1 = std::log2(e1 / e2), o2 = std::log2(e2 / e3);
  CHECK(o1 == doctest::Approx(2.0).epsilon(0.1));
  CHECK(o2 == doctest::Approx(2.0).epsilon(0.1));
  CHECK(e3 < 1e-3);
}

TEST_CASE("poisson solver: discrete maximum principle") {
  // f = 0, homogeneous Neumann: extremes sit on the Dirichlet boundary.
  const Grid2 g = Grid2::unit(40);
  auto gd = [](double x, double y) { return y >= 1.0 - 1e-12 ? std::sin(kPi * x) : 0.0; };
  const NodeField u = fdm_poisson_mixed(g, Expr(0.0), gd, Expr(0.0));
  CHECK(u.maxCoeff() <= 1.0 + 1e-12);
  CHECK(u.minCoeff() >= -1e-12);
}

TEST_CASE("poisson solver: rejects bad grids") {
  Grid2 g = Grid2::unit(1);
  CHECK_THROWS_AS(fdm_poisson_mixed(g, Expr(0.0), [](double, double) { return 0.0; }, Expr(0.0)), std::invalid_argument);
}

TEST_CASE("cavity solver: centreline matches the Re=100 table") {
  const Grid2 g = Grid2::unit(64);
  const FlowFields r = fdm_cavity(g, CavityOptions{});
  CHECK(r.last_change <= 1e-8);
  CHECK(r.max_divergence < 1e-6);
  for (int i = 0; i < g.nodes_x(); ++i) CHECK(r.u(g.ny, i) == 1.0);
  double worst = 0;
  for (const auto& [y, uref] : ghia_re100_u()) worst = std::max(worst, std::abs(interpolate(g, r.u, 0.5, y) - uref));
  MESSAGE("max centreline deviation " << worst << " after " << r.steps << " steps");
  CHECK(worst < 0.02);
  // kinetic energy stays bounded by the lid scale
  for (double ke : r.kinetic_energy) CHECK(ke < 0.5);
}

TEST_CASE("channel solver: snapshots are divergence-consistent and obey walls") {
  Grid2 g{80, 20, 0.0, 0.0, 0.05, 0.05};
  ChannelOptions opt;
  opt.spinup = 1.0;
  opt.window = 0.2;
  const auto snaps = fdm_channel(g, opt);
  REQUIRE(snaps.size() == 3);
  CHECK(snaps[0].t == 0.0);
  CHECK(snaps[2].t == doctest::Approx(0.2));
  const auto& s = snaps.back();
  for (int i = 0; i < g.nodes_x(); ++i) {
    CHECK(s.u(0, i) == 0.0);
    CHECK(s.u(g.ny, i) == 0.0);
  }
  CHECK(s.u(10, 0) == doctest::Approx(1.0));
  CHECK(s.u(10, 20) == 0.0);  // obstacle node (1.0, 0.5)
  CHECK(s.u.allFinite());
  // mass flux through the outlet matches the inlet flux 2/3
  double flux = 0;
  for (int j = 0; j < g.ny; ++j) flux += 0.5 * (s.u(j, g.nx) + s.u(j + 1, g.nx)) * g.dy;
  CHECK(flux == doctest::Approx(2.0 / 3.0).epsilon(0.02));
}

TEST_CASE("reference csv: round trip is bit exact") {
  const Grid2 g = Grid2::unit(4);
  NodeField u(5, 5), v(5, 5);
  for (int j = 0; j < 5; ++j)
    for (int i = 0; i < 5; ++i) {
      u(j, i) = std::sin(0.1 + i * 1.37 + j / 3.0);
      v(j, i) = 1.0 / (3.0 + i + 7 * j);
    }
  const ReferenceCloud c = cloud_from_grid(g, u, &v);
  std::stringstream ss;
  export_reference_csv(ss, c);
  const ReferenceCloud back = ingest_reference_csv(ss, geo::BBox{0, 0, 1, 1});
  CHECK(back.has_v);
  CHECK_FALSE(back.has_p);
  CHECK(back.points == c.points);
  CHECK(back.values == c.values);
}

TEST_CASE("reference csv: errors and deduplication") {
  {
    std::istringstream in("");
    CHECK_THROWS_AS(ingest_reference_csv(in), CsvError);
  }
  {
    std::istringstream in("x,y,u\n0,0,1\n0.5,abc,2\n1,1\n");
    try {
      ingest_reference_csv(in);
      FAIL("expected CsvError");
    } catch (const CsvError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("line 3") != std::string::npos);
      CHECK(msg.find("line 4") != std::string::npos);
    }
  }
  {
    std::istringstream in("x,y,u\n0,0,1\n2,0.5,1\n");
    CHECK_THROWS_AS(ingest_reference_csv(in, geo::BBox{0, 0, 1, 1}), CsvError);
  }
  {
    std::istringstream in("x,y,u\n0,0,nan\n");
    CHECK_THROWS_AS(ingest_reference_csv(in), CsvError);
  }
  {
    std::istringstream in("x,q,u\n0,0,1\n");
    CHECK_THROWS_AS(ingest_reference_csv(in), CsvError);
  }
  {
    std::istringstream in("x,y,t,u,v,p\n0,0,0,1,2,3\n0,0,0,4,5,6\n0,0,0.5,7,8,9\n");
    const ReferenceCloud c = ingest_reference_csv(in);
    CHECK(c.has_t);
    REQUIRE(c.points.cols() == 2);
    CHECK(c.values(0, 0) == 1.0);
    CHECK(c.values(2, 1) == 9.0);
  }
}

TEST_CASE("observation sampling") {
  FieldSamples f{Eigen::MatrixXd(2, 400), Eigen::MatrixXd(1, 400)};
  for (int k = 0; k < 400; ++k) {
    f.points.col(k) << k * 0.001, 1.0 - k * 0.002;
    f.values(0, k) = std::cos(0.01 * k);
  }
  const FieldSamples a = sample_observations(f, 100, 7), b = sample_observations(f, 100, 7);
  CHECK(a.points == b.points);
  CHECK(a.values == b.values);
  // noise-free samples are exact field values, drawn without replacement
  std::vector<int> hits(400, 0);
  for (int k = 0; k < 100; ++k) {
    const int idx = static_cast<int>(std::lround(a.points(0, k) / 0.001));
    CHECK(a.values(0, k) == f.values(0, idx));
    ++hits[idx];
  }
  CHECK(*std::max_element(hits.begin(), hits.end()) == 1);
  const double sigma = 0.05;
  const FieldSamples n = sample_observations(f, 400, 3, sigma);
  double mean = 0;
  for (int k = 0; k < 400; ++k) {
    const int idx = static_cast<int>(std::lround(n.points(0, k) / 0.001));
    mean += n.values(0, k) - f.values(0, idx);
  }
  mean /= 400;
  CHECK(std::abs(mean) < 3 * sigma / std::sqrt(400.0));
  CHECK_THROWS_AS(sample_observations(f, 401, 1), std::invalid_argument);
}
