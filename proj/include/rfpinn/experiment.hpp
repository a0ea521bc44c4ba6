#pragma once
/**
 * @file experiment.hpp
 * @brief Experiment configuration, reference construction, per-seed runs and
 *        summary statistics.
 */

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rfpinn/refsolvers.hpp"
#include "rfpinn/training.hpp"

namespace rfpinn {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class RunMode { Forward, Inverse };

struct ExperimentConfig {
  std::string problem = "poisson_hmg";
  RunMode mode = RunMode::Forward;
  Imposition imposition = Imposition::Hard;
  Weighting weighting = Weighting::Fixed;
  double beta = 0.999;
  bool bias_correction = true;
  double lambda_bc = 1.0, lambda_data = 1.0, lambda_div = 1.0;

  Activation activation = Activation::Gelu;
  int depth = 4, width = 32;
  int m = 1;

  int n_pde = 1024, n_dbc = 768, n_nbc = 256, n_data = 128;
  double data_noise = 0.0;
  int iterations = 5000;
  double lr = 1e-3, decay_rate = 1.0;
  int decay_steps = 2000;
  int record_every = 100;
  std::vector<std::uint64_t> seeds{0, 1, 2};
  Extension ext;

  double reynolds = 100.0;
  double nu = 2e-3;
  double kappa_init = 0.0;
  double neumann_value = 0.0;
  double t1 = 1.0;
  geo::HeartParams heart{0.5, 0.7, 1.3, {1.0, 0.5}, 0.12};

  // reference fields
  int ref_cells = 100;            // Poisson / cavity grid cells per side
  double ref_tol = 1e-8;
  int channel_nx = 160, channel_ny = 40;
  double channel_spinup = 20.0;
  std::string reference_csv;      // obstacle_heart: externally produced field

  void validate() const;  // throws ConfigError
};

/// Defaults for a problem id before any explicit keys are applied.
ExperimentConfig default_config(const std::string& problem);
/// Larger network, more points and iterations.
void apply_paper_scale(ExperimentConfig& cfg);

ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& cfg);
ExperimentConfig load_config(const std::string& path, const nlohmann::json& overrides = {});

ProblemSpec problem_spec(const ExperimentConfig& cfg);
TrainConfig train_config(const ExperimentConfig& cfg, std::uint64_t seed);

struct ReferenceData {
  FieldSamples eval;  // evaluation nodes, velocity or solution components only
  FieldSamples pool;  // observation pool (inverse runs)
  std::vector<double> snapshot_times;  // unsteady only
};

ReferenceData build_reference(const ExperimentConfig& cfg);
FieldSamples draw_observations(const ExperimentConfig& cfg, const ReferenceData& ref, std::uint64_t seed);

struct SeedResult {
  std::uint64_t seed = 0;
  double rel_l2 = 0.0;
  double param_estimate = 0.0;
};

struct RunSummary {
  std::string label;
  std::vector<SeedResult> runs;
  double mean = 0.0, std_error = 0.0;
  double param_mean = 0.0, param_std = 0.0;
};

RunSummary summarize(const std::string& label, const std::vector<SeedResult>& runs);
SeedResult final_result(std::uint64_t seed, const std::vector<ReportRow>& rows);

void write_summary_header(std::ostream& out);
void write_summary_row(std::ostream& out, const RunSummary& s);
std::string summary_line(const RunSummary& s);

struct RunArtifacts {
  std::string dir;            // empty: nothing written
  std::string tag = "run";
  bool fields = true;         // predicted field CSV per seed
};

using ProgressFn = std::function<void(const std::string&)>;

/// Trains every seed, writes per-seed reports and returns the summary computed
/// from the values exactly as written.
RunSummary run_experiment(const ExperimentConfig& cfg, const RunArtifacts& art = {}, const ProgressFn& progress = {},
                          std::vector<TrainResult>* results = nullptr);

/// Reload per-seed report files named <tag>_seed<k>.csv and recompute the summary.
RunSummary summary_from_reports(const std::string& label, const std::vector<std::string>& paths);

}  // namespace rfpinn
