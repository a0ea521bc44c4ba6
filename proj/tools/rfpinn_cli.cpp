// rfpinn command-line harness.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "rfpinn/experiment.hpp"
#include "rfpinn/geometry.hpp"
#include "rfpinn/refsolvers.hpp"

using namespace rfpinn;
using json = nlohmann::json;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

// ---- shared option groups ----------------------------------------------------------

struct DomainOpts {
  std::string domain = "square";
  std::string join = "normalized";
  int m = 1;
  std::string trimming = "squared";
  bool edf = false;
  std::string out;

  void attach(CLI::App* app) {
    app->add_option("--domain", domain, "square | l_shape | heart | annulus | rect_with_obstacle");
    app->add_option("--join", join, "naive | non_normalized | normalized");
    app->add_option("--m", m, "normalization order");
    app->add_option("--trimming", trimming, "squared | verbatim");
    app->add_flag("--edf", edf, "exact distance instead of the approximate field");
    app->add_option("-o,--out", out, "output file (stdout when omitted)");
  }

  geo::DistanceField build() const {
    geo::DomainParams p;
    if (join == "naive") p.join = {geo::JoinKind::Naive, 1};
    else if (join == "non_normalized") p.join = {geo::JoinKind::NonNormalized, 1};
    else if (join == "normalized") p.join = {geo::JoinKind::Normalized, m};
    else throw ConfigError("unknown join '" + join + "'");
    if (trimming == "verbatim") p.trimming = geo::Trimming::Verbatim;
    else if (trimming != "squared") throw ConfigError("unknown trimming '" + trimming + "'");
    try {
      return geo::build_named_domain(domain, p);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
};

std::ostream& sink(const std::string& path, std::optional<std::ofstream>& file) {
  if (path.empty()) return std::cout;
  file.emplace(path);
  if (!*file) throw ConfigError("cannot write " + path);
  return *file;
}

/// Config file plus flags mirroring its keys.
struct RunOpts {
  std::string config;
  std::string out = "runs";
  bool paper_scale = false;
  bool dump = false;
  json overrides = json::object();
  CLI::App* app = nullptr;

  std::string problem, imposition, weighting, activation, extension, reference_csv;
  int m = 0, iterations = 0, width = 0, depth = 0, n_pde = 0, n_data = 0, record_every = 0;
  double lr = 0, beta = 0, reynolds = 0, nu = 0, c_sa = 0, lambda_sr = 0, lambda_ge = 0, noise = 0;
  std::vector<std::uint64_t> seeds;
  bool dagger = false, no_bias_correction = false;

  void attach(CLI::App* a) {
    app = a;
    a->add_option("-c,--config", config, "JSON experiment config");
    a->add_option("-o,--out", out, "artifact directory");
    a->add_flag("--paper-scale", paper_scale, "64x5 network, paper point counts and iteration budget");
    a->add_flag("--dump-config", dump, "print the resolved config and exit");
    a->add_option("--problem", problem);
    a->add_option("--imposition", imposition, "soft | hard");
    a->add_option("--weighting", weighting, "fixed | dyn_norm");
    a->add_option("--activation", activation, "tanh | silu | gelu");
    a->add_option("--extension", extension, "none | llaaf | gpinn | sapinn");
    a->add_option("--reference-csv", reference_csv);
    a->add_option("--m", m);
    a->add_option("--iterations", iterations);
    a->add_option("--width", width);
    a->add_option("--depth", depth);
    a->add_option("--n-pde", n_pde);
    a->add_option("--n-data", n_data);
    a->add_option("--record-every", record_every);
    a->add_option("--lr", lr);
    a->add_option("--beta", beta);
    a->add_option("--reynolds", reynolds);
    a->add_option("--nu", nu);
    a->add_option("--c-sa", c_sa);
    a->add_option("--lambda-sr", lambda_sr);
    a->add_option("--lambda-ge", lambda_ge);
    a->add_option("--data-noise", noise);
    a->add_option("--seeds", seeds);
    a->add_flag("--dagger", dagger, "freeze SA weights after half the iterations");
    a->add_flag("--no-bias-correction", no_bias_correction);
  }

  template <class T>
  void put(const char* flag, const char* key, const T& v) {
    if (app->count(flag)) overrides[key] = v;
  }

  ExperimentConfig resolve(std::optional<RunMode> mode) {
    put("--problem", "problem", problem);
    put("--imposition", "imposition", imposition);
    put("--weighting", "weighting", weighting);
    put("--activation", "activation", activation);
    put("--reference-csv", "reference_csv", reference_csv);
    put("--m", "m", m);
    put("--iterations", "iterations", iterations);
    put("--width", "width", width);
    put("--depth", "depth", depth);
    put("--n-pde", "n_pde", n_pde);
    put("--n-data", "n_data", n_data);
    put("--record-every", "record_every", record_every);
    put("--lr", "lr", lr);
    put("--beta", "beta", beta);
    put("--reynolds", "reynolds", reynolds);
    put("--nu", "nu", nu);
    put("--data-noise", "data_noise", noise);
    put("--seeds", "seeds", seeds);
    if (paper_scale) overrides["paper_scale"] = true;
    if (no_bias_correction) overrides["bias_correction"] = false;
    if (mode) overrides["mode"] = *mode == RunMode::Inverse ? "inverse" : "forward";
    json ext = json::object();
    if (app->count("--extension")) ext["kind"] = extension;
    if (app->count("--c-sa")) ext["c_sa"] = c_sa;
    if (app->count("--lambda-sr")) ext["lambda_sr"] = lambda_sr;
    if (app->count("--lambda-ge")) ext["lambda_ge"] = lambda_ge;
    if (dagger) ext["dagger"] = true;
    if (!ext.empty()) overrides["extension"] = ext;
    return load_config(config, overrides);
  }
};

void note(const std::string& s) { std::cerr << s << '\n'; }

void write_table(const std::string& path, const std::vector<std::pair<std::string, RunSummary>>& rows,
                 const std::string& key) {
  std::ofstream out(path);
  out << key << ',';
  write_summary_header(out);
  for (const auto& [k, s] : rows) {
    out << k << ',';
    write_summary_row(out, s);
  }
}

std::string num_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distance-field PINN training, reference solvers and experiment harness"};
  app.require_subcommand(1);

  // adf
  auto* adf = app.add_subcommand("adf", "evaluate and export distance fields");
  adf->require_subcommand(1);
  DomainOpts d_eval, d_slice, d_raster;
  auto* adf_eval = adf->add_subcommand("eval", "value, gradient and Laplacian at points");
  d_eval.attach(adf_eval);
  std::vector<double> coords;
  adf_eval->add_option("--point", coords, "x y [x y ...]")->required();
  auto* adf_slice = adf->add_subcommand("slice", "samples along a horizontal line");
  d_slice.attach(adf_slice);
  double slice_y = 0.5;
  int slice_n = 101;
  std::optional<double> slice_x0, slice_x1;
  bool slice_deriv = false;
  adf_slice->add_option("--y", slice_y);
  adf_slice->add_option("--n", slice_n, "number of samples");
  adf_slice->add_option("--x0", slice_x0);
  adf_slice->add_option("--x1", slice_x1);
  adf_slice->add_flag("--derivatives", slice_deriv);
  auto* adf_raster = adf->add_subcommand("raster", "row-major grid export");
  d_raster.attach(adf_raster);
  geo::RasterSpec raster;
  adf_raster->add_option("--nx", raster.nx);
  adf_raster->add_option("--ny", raster.ny);
  adf_raster->add_flag("--derivatives", raster.derivatives);

  // solve
  auto* solve = app.add_subcommand("solve", "finite-difference reference solutions");
  solve->require_subcommand(1);
  auto* solve_p = solve->add_subcommand("poisson", "mixed-boundary Poisson problem");
  std::string sp_problem = "poisson_hmg", solve_out;
  int sp_cells = 100;
  solve_p->add_option("--problem", sp_problem, "poisson_hmg | poisson_inhmg");
  solve_p->add_option("--cells", sp_cells);
  solve_p->add_option("-o,--out", solve_out);
  auto* solve_c = solve->add_subcommand("cavity", "steady lid-driven cavity");
  int sc_cells = 64;
  ref::CavityOptions sc_opt;
  solve_c->add_option("--cells", sc_cells);
  solve_c->add_option("--re", sc_opt.reynolds);
  solve_c->add_option("--tol", sc_opt.tol);
  solve_c->add_option("--max-steps", sc_opt.max_steps);
  solve_c->add_option("-o,--out", solve_out);

  // train / sweep
  auto* train_cmd = app.add_subcommand("train", "train over the configured seeds");
  train_cmd->require_subcommand(1);
  RunOpts tf, ti, sm, sa, se;
  auto* train_f = train_cmd->add_subcommand("forward", "forward problem");
  tf.attach(train_f);
  auto* train_i = train_cmd->add_subcommand("inverse", "parameter identification from observations");
  ti.attach(train_i);

  auto* sweep = app.add_subcommand("sweep", "grids of training runs");
  sweep->require_subcommand(1);
  auto* sweep_m = sweep->add_subcommand("m", "normalization order x activation");
  sm.attach(sweep_m);
  std::vector<int> m_values{1, 2, 4, 8};
  std::vector<std::string> sweep_acts;
  sweep_m->add_option("--m-values", m_values);
  sweep_m->add_option("--activations", sweep_acts);
  auto* sweep_a = sweep->add_subcommand("activation", "activation x imposition");
  sa.attach(sweep_a);
  std::vector<std::string> a_values{"tanh", "silu", "gelu"};
  std::vector<std::string> impositions{"soft", "hard"};
  sweep_a->add_option("--activations", a_values);
  sweep_a->add_option("--impositions", impositions);
  auto* sweep_e = sweep->add_subcommand("extension", "extension hyperparameter grid");
  se.attach(sweep_e);
  std::string e_kind = "llaaf";
  std::vector<double> e_values;
  sweep_e->add_option("--kind", e_kind, "llaaf | gpinn | sapinn")->required();
  sweep_e->add_option("--values", e_values);

  // ingest / report
  auto* ingest = app.add_subcommand("ingest", "validate and normalise a reference CSV");
  std::string in_csv, in_problem, in_out;
  ingest->add_option("csv", in_csv)->required();
  ingest->add_option("--problem", in_problem, "check points against this problem's bounding box");
  ingest->add_option("-o,--out", in_out, "write the deduplicated cloud");
  auto* report = app.add_subcommand("report", "recompute a summary from per-seed reports");
  std::vector<std::string> rep_files;
  std::string rep_label = "run";
  report->add_option("reports", rep_files)->required();
  report->add_option("--label", rep_label);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (adf_eval->parsed()) {
      if (coords.size() % 2) throw ConfigError("--point needs x y pairs");
      const auto df = d_eval.build();
      std::optional<std::ofstream> f;
      auto& out = sink(d_eval.out, f);
      out.precision(17);
      out << "x,y,value,gx,gy,lap,flagged\n";
      for (std::size_t k = 0; k < coords.size(); k += 2) {
        const geo::Point2 p{coords[k], coords[k + 1]};
        const auto g = df.gradient(p);
        const auto l = df.laplacian(p);
        out << p.x << ',' << p.y << ',' << (d_eval.edf ? df.edf(p) : df.value(p)) << ',' << g.g[0] << ',' << g.g[1]
            << ',' << l.value << ',' << (g.flagged || l.flagged) << '\n';
      }
    } else if (adf_slice->parsed()) {
      const auto df = d_slice.build();
      const auto box = df.bbox();
      std::optional<std::ofstream> f;
      geo::write_slice(df, slice_y, slice_n, slice_x0.value_or(box.x0), slice_x1.value_or(box.x1), sink(d_slice.out, f),
                       d_slice.edf ? geo::FieldKind::Edf : geo::FieldKind::Adf, slice_deriv);
    } else if (adf_raster->parsed()) {
      const auto df = d_raster.build();
      std::optional<std::ofstream> f;
      geo::write_raster(df, raster, sink(d_raster.out, f), d_raster.edf ? geo::FieldKind::Edf : geo::FieldKind::Adf);
    } else if (solve_p->parsed()) {
      ExperimentConfig c = default_config(sp_problem);
      if (sp_problem != "poisson_hmg" && sp_problem != "poisson_inhmg") throw ConfigError("solve poisson: bad --problem");
      c.ref_cells = sp_cells;
      c.validate();
      const auto r = build_reference(c);
      std::optional<std::ofstream> f;
      ref::ReferenceCloud cloud{false, false, false, r.eval.points, r.eval.values};
      ref::export_reference_csv(sink(solve_out, f), cloud);
    } else if (solve_c->parsed()) {
      const auto g = ref::Grid2::unit(sc_cells);
      const auto r = ref::fdm_cavity(g, sc_opt);
      note("steps " + std::to_string(r.steps) + ", last change " + std::to_string(r.last_change) +
          ", max divergence " + std::to_string(r.max_divergence));
      std::optional<std::ofstream> f;
      ref::export_reference_csv(sink(solve_out, f), ref::cloud_from_grid(g, r.u, &r.v, &r.p));
    } else if (train_f->parsed() || train_i->parsed()) {
      RunOpts& o = train_f->parsed() ? tf : ti;
      const auto cfg = o.resolve(train_f->parsed() ? RunMode::Forward : RunMode::Inverse);
      if (o.dump) {
        std::cout << config_to_json(cfg).dump(2) << '\n';
        return 0;
      }
      std::filesystem::create_directories(o.out);
      std::ofstream(o.out + "/config.json") << config_to_json(cfg).dump(2) << '\n';
      const auto s = run_experiment(cfg, {o.out, cfg.problem}, note);
      std::cout << summary_line(s) << '\n';
    } else if (sweep_m->parsed() || sweep_a->parsed() || sweep_e->parsed()) {
      RunOpts& o = sweep_m->parsed() ? sm : sweep_a->parsed() ? sa : se;
      ExperimentConfig base = o.resolve(std::nullopt);
      if (o.dump) {
        std::cout << config_to_json(base).dump(2) << '\n';
        return 0;
      }
      std::filesystem::create_directories(o.out);
      std::ofstream(o.out + "/config.json") << config_to_json(base).dump(2) << '\n';
      std::vector<std::pair<std::string, RunSummary>> rows;
      std::string key, table;
      if (sweep_m->parsed()) {
        key = "activation,m";
        table = "sweep_m.csv";
        if (sweep_acts.empty()) sweep_acts = {activation_name(base.activation)};
        for (const auto& a : sweep_acts)
          for (int m : m_values) {
            ExperimentConfig c = base;
            c.activation = activation_from_name(a);
            c.m = m;
            c.imposition = Imposition::Hard;
            c.validate();
            const std::string tag = a + "_m" + std::to_string(m);
            rows.emplace_back(a + "," + std::to_string(m), run_experiment(c, {o.out, tag}, note));
            note(summary_line(rows.back().second));
          }
      } else if (sweep_a->parsed()) {
        key = "activation,imposition";
        table = "sweep_activation.csv";
        for (const auto& a : a_values)
          for (const auto& imp : impositions) {
            ExperimentConfig c = base;
            c.activation = activation_from_name(a);
            if (imp != "soft" && imp != "hard") throw ConfigError("imposition must be soft or hard");
            c.imposition = imp == "soft" ? Imposition::Soft : Imposition::Hard;
            const std::string tag = a + "_" + imp;
            rows.emplace_back(a + "," + imp, run_experiment(c, {o.out, tag}, note));
            note(summary_line(rows.back().second));
          }
      } else {
        key = "kind,value";
        table = "sweep_extension_" + e_kind + (base.ext.dagger ? "_dagger" : "") + ".csv";
        Extension::Kind kind;
        if (e_kind == "llaaf") kind = Extension::Kind::Llaaf;
        else if (e_kind == "gpinn") kind = Extension::Kind::Gpinn;
        else if (e_kind == "sapinn") kind = Extension::Kind::SaPinn;
        else throw ConfigError("--kind must be llaaf, gpinn or sapinn");
        if (e_values.empty())
          e_values = kind == Extension::Kind::Gpinn ? std::vector<double>{1e-8, 1e-6, 1e-4, 1e-2, 1.0}
                                                    : std::vector<double>{1e-2, 1e-1, 1.0, 1e1, 1e2};
        for (double v : e_values) {
          ExperimentConfig c = base;
          c.ext.kind = kind;
          if (kind == Extension::Kind::Llaaf) c.ext.lambda_sr = v;
          else if (kind == Extension::Kind::Gpinn) c.ext.lambda_ge = v;
          else c.ext.c_sa = v;
          c.validate();
          const std::string tag = e_kind + "_" + num_label(v);
          rows.emplace_back(e_kind + "," + num_label(v), run_experiment(c, {o.out, tag}, note));
          note(summary_line(rows.back().second));
        }
      }
      write_table(o.out + "/" + table, rows, key);
      std::ifstream t(o.out + "/" + table);
      std::cout << t.rdbuf();
    } else if (ingest->parsed()) {
      std::optional<geo::BBox> box;
      if (!in_problem.empty()) {
        ExperimentConfig c = default_config(in_problem);
        c.reference_csv = in_csv;
        box = problem_spec(c).domain.bbox();
      }
      const auto cloud = ref::ingest_reference_csv(in_csv, box);
      std::cout << cloud.points.cols() << " points" << (cloud.has_t ? ", with t" : "") << ", "
                << cloud.values.rows() << " field(s)\n";
      if (!in_out.empty()) {
        std::ofstream f(in_out);
        ref::export_reference_csv(f, cloud);
      }
    } else if (report->parsed()) {
      const auto s = summary_from_reports(rep_label, rep_files);
      write_summary_header(std::cout);
      write_summary_row(std::cout, s);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ref::CsvError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const NumericalFailure& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const ref::SolverFailure& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
