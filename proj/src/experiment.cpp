#include "rfpinn/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

namespace rfpinn {

using Eigen::MatrixXd;
using json = nlohmann::json;

namespace {

const std::set<std::string> kProblems{"poisson_hmg", "poisson_inhmg", "annulus", "cavity", "obstacle_square",
                                      "obstacle_heart"};

bool is_flow(const std::string& id) { return id == "cavity" || id == "obstacle_square" || id == "obstacle_heart"; }
bool is_unsteady(const std::string& id) { return id == "obstacle_square" || id == "obstacle_heart"; }

std::string ext_name(Extension::Kind k) {
  switch (k) {
    case Extension::Kind::Llaaf: return "llaaf";
    case Extension::Kind::Gpinn: return "gpinn";
    case Extension::Kind::SaPinn: return "sapinn";
    default: return "none";
  }
}

Extension::Kind ext_from_name(const std::string& s) {
  if (s == "none") return Extension::Kind::None;
  if (s == "llaaf") return Extension::Kind::Llaaf;
  if (s == "gpinn") return Extension::Kind::Gpinn;
  if (s == "sapinn") return Extension::Kind::SaPinn;
  throw ConfigError("unknown extension '" + s + "'");
}

template <class T>
T get(const json& j, const std::string& key) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("config key '" + key + "': " + e.what());
  }
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (!kProblems.count(problem)) throw ConfigError("unknown problem '" + problem + "'");
  if (mode == RunMode::Inverse && !is_flow(problem)) throw ConfigError("inverse runs need a flow problem");
  if (n_pde <= 0 || n_dbc <= 0 || n_nbc <= 0 || n_data <= 0) throw ConfigError("point counts must be positive");
  if (!(beta >= 0.0 && beta < 1.0)) throw ConfigError("beta must lie in [0, 1)");
  if (m != 1 && m != 2 && m != 4 && m != 8 && m != 64) throw ConfigError("m must be one of 1, 2, 4, 8, 64");
  if (depth < 2 || width < 1) throw ConfigError("network needs depth >= 2 and width >= 1");
  if (iterations < 0) throw ConfigError("iterations must be >= 0");
  if (!(lr > 0) || !(decay_rate > 0) || decay_steps <= 0) throw ConfigError("bad learning-rate schedule");
  if (record_every <= 0) throw ConfigError("record_every must be positive");
  if (seeds.empty()) throw ConfigError("at least one seed is required");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) throw ConfigError("duplicate seeds");
  if (lambda_bc < 0 || lambda_data < 0 || lambda_div < 0) throw ConfigError("loss weights must be >= 0");
  if (data_noise < 0) throw ConfigError("data_noise must be >= 0");
  if (!(reynolds > 0) || !(nu > 0) || !(t1 > 0)) throw ConfigError("physical parameters must be positive");
  if (ref_cells < 4 || channel_nx < 8 || channel_ny < 4) throw ConfigError("reference grid too coarse");
  if (ext.c_sa < 0 || ext.lambda_ge < 0 || ext.lambda_sr < 0) throw ConfigError("extension weights must be >= 0");
  if (problem == "obstacle_heart" && reference_csv.empty())
    throw ConfigError("obstacle_heart needs reference_csv (no built-in solver for this geometry)");
}

ExperimentConfig default_config(const std::string& problem) {
  ExperimentConfig c;
  c.problem = problem;
  if (problem == "poisson_inhmg") c.neumann_value = 0.1;
  if (problem == "cavity") {
    c.weighting = Weighting::DynNorm;
    c.decay_rate = 0.9;
    c.ref_cells = 64;
    c.n_data = 128;
  }
  if (is_unsteady(problem)) {
    c.weighting = Weighting::DynNorm;
    c.n_data = 64;  // per snapshot
  }
  return c;
}

void apply_paper_scale(ExperimentConfig& c) {
  c.width = 64;
  c.depth = 5;
  c.iterations = 20000;
  c.n_pde = 4096;
  c.n_dbc = 768;
  c.n_nbc = 256;
  if (c.problem == "cavity") {
    c.n_data = 256;
    c.n_dbc = 1024;
  }
  if (is_unsteady(c.problem)) c.n_pde = 52224;
  c.seeds = {0, 1, 2, 3, 4};
}

ExperimentConfig config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  const std::string problem = j.contains("problem") ? get<std::string>(j, "problem") : "poisson_hmg";
  if (!kProblems.count(problem)) throw ConfigError("unknown problem '" + problem + "'");
  ExperimentConfig c = default_config(problem);
  if (j.contains("paper_scale") && get<bool>(j, "paper_scale")) apply_paper_scale(c);

  for (const auto& [key, val] : j.items()) {
    if (key == "problem" || key == "paper_scale") continue;
    else if (key == "mode") {
      const auto s = get<std::string>(j, key);
      if (s != "forward" && s != "inverse") throw ConfigError("mode must be forward or inverse");
      c.mode = s == "inverse" ? RunMode::Inverse : RunMode::Forward;
    } else if (key == "imposition") {
      const auto s = get<std::string>(j, key);
      if (s != "soft" && s != "hard") throw ConfigError("imposition must be soft or hard");
      c.imposition = s == "soft" ? Imposition::Soft : Imposition::Hard;
    } else if (key == "weighting") {
      const auto s = get<std::string>(j, key);
      if (s != "fixed" && s != "dyn_norm") throw ConfigError("weighting must be fixed or dyn_norm");
      c.weighting = s == "fixed" ? Weighting::Fixed : Weighting::DynNorm;
    } else if (key == "beta") c.beta = get<double>(j, key);
    else if (key == "bias_correction") c.bias_correction = get<bool>(j, key);
    else if (key == "lambda_bc") c.lambda_bc = get<double>(j, key);
    else if (key == "lambda_data") c.lambda_data = get<double>(j, key);
    else if (key == "lambda_div") c.lambda_div = get<double>(j, key);
    else if (key == "activation") {
      try {
        c.activation = activation_from_name(get<std::string>(j, key));
      } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
      }
    } else if (key == "depth") c.depth = get<int>(j, key);
    else if (key == "width") c.width = get<int>(j, key);
    else if (key == "m") c.m = get<int>(j, key);
    else if (key == "n_pde") c.n_pde = get<int>(j, key);
    else if (key == "n_dbc") c.n_dbc = get<int>(j, key);
    else if (key == "n_nbc") c.n_nbc = get<int>(j, key);
    else if (key == "n_data") c.n_data = get<int>(j, key);
    else if (key == "data_noise") c.data_noise = get<double>(j, key);
    else if (key == "iterations") c.iterations = get<int>(j, key);
    else if (key == "lr") c.lr = get<double>(j, key);
    else if (key == "decay_rate") c.decay_rate = get<double>(j, key);
    else if (key == "decay_steps") c.decay_steps = get<int>(j, key);
    else if (key == "record_every") c.record_every = get<int>(j, key);
    else if (key == "seeds") c.seeds = get<std::vector<std::uint64_t>>(j, key);
    else if (key == "extension") {
      if (!val.is_object()) throw ConfigError("extension must be an object");
      for (const auto& [k2, v2] : val.items()) {
        if (k2 == "kind") c.ext.kind = ext_from_name(get<std::string>(val, k2));
        else if (k2 == "lambda_sr") c.ext.lambda_sr = get<double>(val, k2);
        else if (k2 == "lambda_ge") c.ext.lambda_ge = get<double>(val, k2);
        else if (k2 == "c_sa") c.ext.c_sa = get<double>(val, k2);
        else if (k2 == "dagger") c.ext.dagger = get<bool>(val, k2);
        else throw ConfigError("unknown extension key '" + k2 + "'");
      }
    } else if (key == "reynolds") c.reynolds = get<double>(j, key);
    else if (key == "nu") c.nu = get<double>(j, key);
    else if (key == "kappa_init") c.kappa_init = get<double>(j, key);
    else if (key == "neumann_value") c.neumann_value = get<double>(j, key);
    else if (key == "t1") c.t1 = get<double>(j, key);
    else if (key == "heart") {
      for (const auto& [k2, v2] : val.items()) {
        if (k2 == "lobe_offset") c.heart.lobe_offset = get<double>(val, k2);
        else if (k2 == "lobe_radius") c.heart.lobe_radius = get<double>(val, k2);
        else if (k2 == "tip_depth") c.heart.tip_depth = get<double>(val, k2);
        else if (k2 == "center") {
          const auto v = get<std::vector<double>>(val, k2);
          if (v.size() != 2) throw ConfigError("heart.center needs two numbers");
          c.heart.center = {v[0], v[1]};
        } else if (k2 == "scale") c.heart.scale = get<double>(val, k2);
        else throw ConfigError("unknown heart key '" + k2 + "'");
      }
    } else if (key == "ref_cells") c.ref_cells = get<int>(j, key);
    else if (key == "ref_tol") c.ref_tol = get<double>(j, key);
    else if (key == "channel_nx") c.channel_nx = get<int>(j, key);
    else if (key == "channel_ny") c.channel_ny = get<int>(j, key);
    else if (key == "channel_spinup") c.channel_spinup = get<double>(j, key);
    else if (key == "reference_csv") c.reference_csv = get<std::string>(j, key);
    else throw ConfigError("unknown config key '" + key + "'");
  }
  c.validate();
  return c;
}

json config_to_json(const ExperimentConfig& c) {
  json j;
  j["problem"] = c.problem;
  j["mode"] = c.mode == RunMode::Inverse ? "inverse" : "forward";
  j["imposition"] = c.imposition == Imposition::Soft ? "soft" : "hard";
  j["weighting"] = c.weighting == Weighting::Fixed ? "fixed" : "dyn_norm";
  j["beta"] = c.beta;
  j["bias_correction"] = c.bias_correction;
  j["lambda_bc"] = c.lambda_bc;
  j["lambda_data"] = c.lambda_data;
  j["lambda_div"] = c.lambda_div;
  j["activation"] = activation_name(c.activation);
  j["depth"] = c.depth;
  j["width"] = c.width;
  j["m"] = c.m;
  j["n_pde"] = c.n_pde;
  j["n_dbc"] = c.n_dbc;
  j["n_nbc"] = c.n_nbc;
  j["n_data"] = c.n_data;
  j["data_noise"] = c.data_noise;
  j["iterations"] = c.iterations;
  j["lr"] = c.lr;
  j["decay_rate"] = c.decay_rate;
  j["decay_steps"] = c.decay_steps;
  j["record_every"] = c.record_every;
  j["seeds"] = c.seeds;
  j["extension"] = {{"kind", ext_name(c.ext.kind)},
                    {"lambda_sr", c.ext.lambda_sr},
                    {"lambda_ge", c.ext.lambda_ge},
                    {"c_sa", c.ext.c_sa},
                    {"dagger", c.ext.dagger}};
  j["reynolds"] = c.reynolds;
  j["nu"] = c.nu;
  j["kappa_init"] = c.kappa_init;
  j["neumann_value"] = c.neumann_value;
  j["t1"] = c.t1;
  j["heart"] = {{"lobe_offset", c.heart.lobe_offset},
                {"lobe_radius", c.heart.lobe_radius},
                {"tip_depth", c.heart.tip_depth},
                {"center", {c.heart.center.x, c.heart.center.y}},
                {"scale", c.heart.scale}};
  j["ref_cells"] = c.ref_cells;
  j["ref_tol"] = c.ref_tol;
  j["channel_nx"] = c.channel_nx;
  j["channel_ny"] = c.channel_ny;
  j["channel_spinup"] = c.channel_spinup;
  j["reference_csv"] = c.reference_csv;
  return j;
}

ExperimentConfig load_config(const std::string& path, const json& overrides) {
  json j = json::object();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path);
    try {
      j = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ConfigError(std::string("config parse error: ") + e.what());
    }
  }
  if (!overrides.is_null()) j.merge_patch(overrides);
  return config_from_json(j);
}

ProblemSpec problem_spec(const ExperimentConfig& c) {
  ProblemOptions o;
  o.m = c.m;
  o.neumann_value = c.neumann_value;
  o.reynolds = c.reynolds;
  o.nu = c.nu;
  o.learnable = c.mode == RunMode::Inverse;
  o.t1 = c.t1;
  o.heart = c.heart;
  ProblemSpec s = make_problem(c.problem, o);
  s.physics.kappa_init = c.kappa_init;
  return s;
}

TrainConfig train_config(const ExperimentConfig& c, std::uint64_t seed) {
  TrainConfig t;
  t.net.depth = c.depth;
  t.net.width = c.width;
  t.net.activation = c.activation;
  t.net.seed = seed;
  t.imposition = c.imposition;
  t.weighting = c.weighting;
  t.beta = c.beta;
  t.bias_correction = c.bias_correction;
  t.lambda_bc = c.lambda_bc;
  t.lambda_data = c.lambda_data;
  t.lambda_div = c.lambda_div;
  t.iterations = c.iterations;
  t.lr = c.lr;
  t.decay_rate = c.decay_rate;
  t.decay_steps = c.decay_steps;
  t.n_pde = c.n_pde;
  t.n_dbc = c.n_dbc;
  t.n_nbc = c.n_nbc;
  t.sample_seed = seed;
  t.record_every = c.record_every;
  t.ext = c.ext;
  return t;
}

// ---- references ----------------------------------------------------------------

ReferenceData build_reference(const ExperimentConfig& c) {
  ReferenceData r;
  if (c.problem == "poisson_hmg" || c.problem == "poisson_inhmg") {
    const ProblemSpec s = problem_spec(c);
    const ref::Grid2 g = ref::Grid2::unit(c.ref_cells);
    const auto& top = s.domain.pieces()[2].bc_value;
    auto gd = [&top](double x, double y) { return y >= 1.0 - 1e-12 ? top(x, y) : 0.0; };
    const ref::NodeField u = ref::fdm_poisson_mixed(g, s.source, gd, s.domain.pieces()[0].bc_value);
    const auto cloud = ref::cloud_from_grid(g, u);
    r.eval = ref::to_samples(cloud, 1);
  } else if (c.problem == "annulus") {
    const ProblemSpec s = problem_spec(c);
    const Expr exact = *exact_solution("annulus");
    const int n = c.ref_cells + 1;
    std::vector<double> pts, vals;
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) {
        const geo::Point2 p{-1.0 + 2.0 * i / (n - 1), -1.0 + 2.0 * j / (n - 1)};
        if (!s.domain.contains(p)) continue;
        pts.push_back(p.x);
        pts.push_back(p.y);
        vals.push_back(exact(p.x, p.y));
      }
    r.eval.points = Eigen::Map<MatrixXd>(pts.data(), 2, static_cast<Eigen::Index>(vals.size()));
    r.eval.values = Eigen::Map<MatrixXd>(vals.data(), 1, static_cast<Eigen::Index>(vals.size()));
  } else if (c.problem == "cavity") {
    const ref::Grid2 g = ref::Grid2::unit(c.ref_cells);
    ref::CavityOptions opt;
    opt.reynolds = c.reynolds;
    opt.tol = c.ref_tol;
    const ref::FlowFields f = ref::fdm_cavity(g, opt);
    r.eval = ref::to_samples(ref::cloud_from_grid(g, f.u, &f.v), 2);
    r.pool = r.eval;
  } else if (c.problem == "obstacle_square") {
    const ref::Grid2 g{c.channel_nx, c.channel_ny, 0.0, 0.0, 4.0 / c.channel_nx, 1.0 / c.channel_ny};
    ref::ChannelOptions opt;
    opt.nu = c.nu;
    opt.spinup = c.channel_spinup;
    opt.window = c.t1;
    const auto snaps = ref::fdm_channel(g, opt);
    std::vector<double> pts, vals;
    for (const auto& s : snaps) {
      r.snapshot_times.push_back(s.t);
      for (int j = 0; j < g.nodes_y(); ++j)
        for (int i = 0; i < g.nodes_x(); ++i) {
          const double x = g.x(i), y = g.y(j), e = 1e-9;
          if (x > opt.obstacle_x0 + e && x < opt.obstacle_x1 - e && y > opt.obstacle_y0 + e && y < opt.obstacle_y1 - e)
            continue;
          pts.insert(pts.end(), {x, y, s.t});
          vals.insert(vals.end(), {s.u(j, i), s.v(j, i)});
        }
    }
    const auto n = static_cast<Eigen::Index>(vals.size() / 2);
    r.eval.points = Eigen::Map<MatrixXd>(pts.data(), 3, n);
    r.eval.values = Eigen::Map<MatrixXd>(vals.data(), 2, n);
    r.pool = r.eval;
  } else {  // obstacle_heart
    const auto cloud = ref::ingest_reference_csv(c.reference_csv, geo::BBox{0.0, 0.0, 4.0, 1.0});
    if (!cloud.has_t || !cloud.has_v) throw ConfigError("heart reference needs columns x,y,t,u,v");
    r.eval = ref::to_samples(cloud, 2);
    r.pool = r.eval;
    std::set<double> ts(cloud.points.row(2).data(), cloud.points.row(2).data() + cloud.points.cols());
    r.snapshot_times.assign(ts.begin(), ts.end());
  }
  return r;
}

FieldSamples draw_observations(const ExperimentConfig& c, const ReferenceData& r, std::uint64_t seed) {
  const std::uint64_t s = seed * 0x9E3779B97F4A7C15ull + 0x5EED;
  if (!is_unsteady(c.problem)) {
    if (c.n_data > r.pool.size()) throw ConfigError("n_data exceeds the reference pool");
    return ref::sample_observations(r.pool, c.n_data, s, c.data_noise);
  }
  // Per snapshot; forward runs only see the initial snapshot.
  std::vector<FieldSamples> parts;
  Eigen::Index total = 0;
  for (std::size_t k = 0; k < r.snapshot_times.size(); ++k) {
    if (c.mode == RunMode::Forward && k > 0) break;
    const double t = r.snapshot_times[k];
    std::vector<Eigen::Index> cols;
    for (Eigen::Index i = 0; i < r.pool.size(); ++i)
      if (r.pool.points(2, i) == t) cols.push_back(i);
    FieldSamples slab{MatrixXd(3, cols.size()), MatrixXd(r.pool.values.rows(), cols.size())};
    for (std::size_t i = 0; i < cols.size(); ++i) {
      slab.points.col(i) = r.pool.points.col(cols[i]);
      slab.values.col(i) = r.pool.values.col(cols[i]);
    }
    if (c.n_data > slab.size()) throw ConfigError("n_data exceeds the points of a snapshot");
    parts.push_back(ref::sample_observations(slab, c.n_data, s + k, c.data_noise));
    total += parts.back().size();
  }
  FieldSamples out{MatrixXd(3, total), MatrixXd(r.pool.values.rows(), total)};
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.points.middleCols(at, p.size()) = p.points;
    out.values.middleCols(at, p.size()) = p.values;
    at += p.size();
  }
  return out;
}

// ---- summaries -----------------------------------------------------------------

RunSummary summarize(const std::string& label, const std::vector<SeedResult>& runs) {
  RunSummary s;
  s.label = label;
  s.runs = runs;
  const double n = static_cast<double>(runs.size());
  if (runs.empty()) return s;
  double a = 0.0, b = 0.0;
  for (const auto& r : runs) a += r.rel_l2, b += r.param_estimate;
  s.mean = a / n;
  s.param_mean = b / n;
  if (runs.size() >= 2) {
    double va = 0.0, vb = 0.0;
    for (const auto& r : runs) {
      va += (r.rel_l2 - s.mean) * (r.rel_l2 - s.mean);
      vb += (r.param_estimate - s.param_mean) * (r.param_estimate - s.param_mean);
    }
    s.std_error = std::sqrt(va / (n - 1.0)) / std::sqrt(n);
    s.param_std = std::sqrt(vb / (n - 1.0));
  }
  return s;
}

SeedResult final_result(std::uint64_t seed, const std::vector<ReportRow>& rows) {
  if (rows.empty()) throw std::invalid_argument("empty training report");
  return {seed, rows.back().rel_l2, rows.back().param_estimate};
}

void write_summary_header(std::ostream& out) { out << "label,seeds,rel_l2_mean,rel_l2_stderr,param_mean,param_std\n"; }

void write_summary_row(std::ostream& out, const RunSummary& s) {
  out << s.label << ',' << s.runs.size() << ',' << fmt(s.mean) << ',' << fmt(s.std_error) << ',' << fmt(s.param_mean)
      << ',' << fmt(s.param_std) << '\n';
}

std::string summary_line(const RunSummary& s) {
  std::ostringstream o;
  o << s.label << ": rel-L2 " << fmt(s.mean) << " +- " << fmt(s.std_error) << " over " << s.runs.size() << " seed(s)";
  if (!std::isnan(s.param_mean) && s.param_mean != 0.0)
    o << ", estimate " << fmt(s.param_mean) << " (sd " << fmt(s.param_std) << ")";
  return o.str();
}

RunSummary run_experiment(const ExperimentConfig& cfg, const RunArtifacts& art, const ProgressFn& progress,
                          std::vector<TrainResult>* results) {
  cfg.validate();
  const ProblemSpec spec = problem_spec(cfg);
  const ReferenceData ref = build_reference(cfg);
  const bool wants_data = cfg.mode == RunMode::Inverse || is_unsteady(cfg.problem);
  namespace fs = std::filesystem;
  if (!art.dir.empty()) fs::create_directories(art.dir);

  std::vector<SeedResult> runs;
  for (std::uint64_t seed : cfg.seeds) {
    if (progress) progress("training seed " + std::to_string(seed));
    const TrainConfig tc = train_config(cfg, seed);
    FieldSamples data;
    if (wants_data) data = draw_observations(cfg, ref, seed);
    TrainResult res = train(spec, tc, &ref.eval, wants_data ? &data : nullptr);

    std::ostringstream report;
    write_report(report, res.rows);
    std::istringstream back(report.str());
    runs.push_back(final_result(seed, read_report(back)));
    if (progress) progress("  seed " + std::to_string(seed) + " rel-L2 " + fmt(runs.back().rel_l2));

    if (!art.dir.empty()) {
      const std::string stem = art.dir + "/" + art.tag + "_seed" + std::to_string(seed);
      std::ofstream(stem + ".csv") << report.str();
      if (art.fields) {
        ref::ReferenceCloud cloud;
        cloud.has_t = spec.inputs() == 3;
        cloud.has_v = cloud.has_p = spec.flow();
        cloud.points = ref.eval.points;
        cloud.values = evaluate_trial(spec, res.net, cfg.imposition, ref.eval.points);
        std::ofstream f(stem + "_field.csv");
        ref::export_reference_csv(f, cloud);
      }
    }
    if (results) results->push_back(std::move(res));
  }
  RunSummary s = summarize(art.tag, runs);
  if (!art.dir.empty()) {
    std::ofstream sum(art.dir + "/" + art.tag + "_summary.csv");
    write_summary_header(sum);
    write_summary_row(sum, s);
    std::ofstream sl(art.dir + "/" + art.tag + "_adf_slice.csv");
    const auto box = spec.domain.bbox();
    geo::write_slice(spec.domain, 0.5 * (box.y0 + box.y1), 201, box.x0, box.x1, sl, geo::FieldKind::Adf, true);
  }
  return s;
}

RunSummary summary_from_reports(const std::string& label, const std::vector<std::string>& paths) {
  std::vector<SeedResult> runs;
  for (const auto& p : paths) {
    std::ifstream in(p);
    if (!in) throw ConfigError("cannot open report " + p);
    const auto pos = p.rfind("_seed");
    std::uint64_t seed = 0;
    if (pos != std::string::npos) seed = std::stoull(p.substr(pos + 5));
    runs.push_back(final_result(seed, read_report(in)));
  }
  return summarize(label, runs);
}

}  // namespace rfpinn
