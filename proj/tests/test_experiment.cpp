#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "rfpinn/experiment.hpp"

using namespace rfpinn;
using nlohmann::json;

TEST_CASE("config: defaults and problem-specific values") {
  const ExperimentConfig p = config_from_json(json::object());
  CHECK(p.problem == "poisson_hmg");
  CHECK(p.width == 32);
  CHECK(p.depth == 4);
  CHECK(p.iterations == 5000);
  CHECK(p.lr == 1e-3);
  CHECK(p.beta == 0.999);
  CHECK(p.m == 1);
  CHECK(p.activation == Activation::Gelu);
  const ExperimentConfig inh = config_from_json({{"problem", "poisson_inhmg"}});
  CHECK(inh.neumann_value == 0.1);
  const ExperimentConfig cav = config_from_json({{"problem", "cavity"}, {"mode", "inverse"}});
  CHECK(cav.weighting == Weighting::DynNorm);
  CHECK(cav.decay_rate == 0.9);
  CHECK(cav.decay_steps == 2000);
  CHECK(cav.ref_cells == 64);
  const ExperimentConfig big = config_from_json({{"paper_scale", true}, {"width", 48}});
  CHECK(big.width == 48);  // explicit keys win
  CHECK(big.depth == 5);
  CHECK(big.n_pde == 4096);
}

TEST_CASE("config: round trip through JSON") {
  ExperimentConfig c = config_from_json({{"problem", "cavity"},
                                         {"mode", "inverse"},
                                         {"imposition", "soft"},
                                         {"activation", "silu"},
                                         {"seeds", {4, 9}},
                                         {"extension", {{"kind", "sapinn"}, {"c_sa", 100.0}, {"dagger", true}}}});
  const ExperimentConfig d = config_from_json(config_to_json(c));
  CHECK(config_to_json(d) == config_to_json(c));
  CHECK(d.ext.kind == Extension::Kind::SaPinn);
  CHECK(d.ext.dagger);
  CHECK(d.seeds == std::vector<std::uint64_t>{4, 9});
}

TEST_CASE("config: invalid input is rejected") {
  CHECK_THROWS_AS(config_from_json({{"problem", "torus"}}), ConfigError);
  CHECK_THROWS_AS(config_from_json({{"m", 3}}), ConfigError);
  CHECK_THROWS_AS(config_from_json({{"beta", 1.0}}), ConfigError);
  CHECK_THROWS_AS(config_from_json({{"n_pde", 0}}), ConfigError);
  CHECK_THROWS_AS(config_from_json({{"iterations", "many"}}), ConfigError);
  CHECK_THROWS_AS(config_from_json({{"colour", "blue"}}), ConfigError);
  CHECK_THROWS_AS(config_from_json({{"mode", "inverse"}}), ConfigError);
  CHECK_THROWS_AS(config_from_json({{"activation", "relu"}}), ConfigError);
  CHECK_THROWS_AS(config_from_json({{"seeds", json::array()}}), ConfigError);
  CHECK_THROWS_AS(config_from_json({{"problem", "obstacle_heart"}}), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/config.json"), ConfigError);
}

TEST_CASE("summary statistics") {
  const RunSummary s = summarize("x", {{0, 1.0, 10.0}, {1, 2.0, 12.0}, {2, 3.0, 14.0}});
  CHECK(s.mean == doctest::Approx(2.0));
  CHECK(s.std_error == doctest::Approx(1.0 / std::sqrt(3.0)));
  CHECK(s.param_mean == doctest::Approx(12.0));
  CHECK(s.param_std == doctest::Approx(2.0));
  const RunSummary one = summarize("y", {{0, 0.5, 1.0}});
  CHECK(one.std_error == 0.0);
}

TEST_CASE("poisson reference matches the problem data") {
  ExperimentConfig c = default_config("poisson_hmg");
  c.ref_cells = 20;
  const ReferenceData r = build_reference(c);
  REQUIRE(r.eval.size() == 21 * 21);
  for (Eigen::Index k = 0; k < r.eval.size(); ++k) {
    const double x = r.eval.points(0, k), y = r.eval.points(1, k);
    if (y == 1.0) CHECK(r.eval.values(0, k) == doctest::Approx(std::sin(M_PI * x)).epsilon(1e-12));
    if (x == 0.0 || x == 1.0) CHECK(std::abs(r.eval.values(0, k)) < 1e-12);
  }
}

TEST_CASE("annulus reference is the exact solution inside the domain") {
  ExperimentConfig c = default_config("annulus");
  c.ref_cells = 40;
  const ReferenceData r = build_reference(c);
  CHECK(r.eval.size() > 500);
  for (Eigen::Index k = 0; k < r.eval.size(); ++k) {
    const double rad = r.eval.points.col(k).norm();
    CHECK(rad >= 0.5);
    CHECK(rad <= 1.0);
  }
}

TEST_CASE("observations are reproducible and seed dependent") {
  ExperimentConfig c = default_config("cavity");
  c.mode = RunMode::Inverse;
  c.ref_cells = 16;
  const ReferenceData r = build_reference(c);
  const FieldSamples a = draw_observations(c, r, 1), b = draw_observations(c, r, 1), d = draw_observations(c, r, 2);
  CHECK(a.size() == c.n_data);
  CHECK(a.points == b.points);
  CHECK(a.points != d.points);
  CHECK(a.values.rows() == 2);
}

TEST_CASE("run_experiment: artifacts are reproducible and the summary matches the reports") {
  namespace fs = std::filesystem;
  ExperimentConfig c = default_config("poisson_hmg");
  c.iterations = 20;
  c.record_every = 10;
  c.n_pde = 64;
  c.width = 8;
  c.depth = 3;
  c.ref_cells = 16;
  c.seeds = {3, 5};
  const std::string d1 = (fs::temp_directory_path() / "rfpinn_exp_a").string();
  const std::string d2 = (fs::temp_directory_path() / "rfpinn_exp_b").string();
  fs::remove_all(d1);
  fs::remove_all(d2);
  const RunSummary s1 = run_experiment(c, {d1, "t"});
  const RunSummary s2 = run_experiment(c, {d2, "t"});
  for (const auto& f : {"t_seed3.csv", "t_seed5.csv", "t_seed3_field.csv", "t_summary.csv", "t_adf_slice.csv"}) {
    std::ifstream a(d1 + "/" + f), b(d2 + "/" + f);
    std::stringstream sa, sb;
    sa << a.rdbuf();
    sb << b.rdbuf();
    CHECK_MESSAGE(!sa.str().empty(), f);
    CHECK_MESSAGE(sa.str() == sb.str(), f);
  }
  const RunSummary back = summary_from_reports("t", {d1 + "/t_seed3.csv", d1 + "/t_seed5.csv"});
  CHECK(back.mean == s1.mean);
  CHECK(back.std_error == s1.std_error);
  CHECK(back.runs[1].seed == 5);
  std::ostringstream x, y;
  write_summary_row(x, back);
  write_summary_row(y, s2);
  CHECK(x.str() == y.str());
  fs::remove_all(d1);
  fs::remove_all(d2);
}
