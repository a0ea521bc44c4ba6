#pragma once
/**
 * @file training.hpp
 * @brief Problem definitions, loss assembly, adaptive weighting and the
 *        training loop.
 */

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "rfpinn/expr.hpp"
#include "rfpinn/geometry.hpp"
#include "rfpinn/network.hpp"
#include "rfpinn/tape.hpp"

namespace rfpinn {

enum class PdeKind { Poisson, SteadyNS, UnsteadyNS };
enum class Imposition { Soft, Hard };
enum class Weighting { Fixed, DynNorm };

struct PhysicsParams {
  double reynolds = 100.0;  // steady flow
  double nu = 2e-3;         // unsteady flow
  double rho = 1.0;
  bool learnable = false;   // viscosity is exp(kappa) with kappa trained
  double kappa_init = 0.0;

  /// Viscosity used by the momentum residual when it is not learned.
  double viscosity(PdeKind kind) const;
  void validate() const;
};

/// Points (inputs x N) with values (components x N).
struct FieldSamples {
  Eigen::MatrixXd points;
  Eigen::MatrixXd values;

  Eigen::Index size() const { return points.cols(); }
};

struct ProblemSpec {
  std::string name;
  PdeKind kind = PdeKind::Poisson;
  /// Whole boundary. For Dirichlet pieces bc_value is the first component;
  /// for Neumann pieces it is the prescribed normal derivative.
  geo::DistanceField domain{geo::rectangle_pieces(0, 0, 1, 1), geo::Join{}};
  /// Flow only: Dirichlet data of the second velocity component, one per piece.
  std::vector<Expr> second_bc;
  Expr source = Expr(0.0);
  PhysicsParams physics;
  double t0 = 0.0, t1 = 1.0;
  /// Optional Dirichlet value on the closed boundary set (used where the
  /// blended data is undefined, e.g. at corners). Returns one value per component.
  std::function<std::vector<double>(geo::Point2)> boundary_value;

  bool flow() const { return kind != PdeKind::Poisson; }
  int inputs() const { return kind == PdeKind::UnsteadyNS ? 3 : 2; }
  int outputs() const { return flow() ? 3 : 1; }
  /// Components carrying boundary data (u, or u and v).
  int components() const { return flow() ? 2 : 1; }
  void validate() const;
};

/// Per-problem knobs surfaced by the harness.
struct ProblemOptions {
  int m = 1;
  double neumann_value = 0.0;   // poisson_inhmg uses 0.1
  double reynolds = 100.0;
  double nu = 2e-3;
  bool learnable = false;
  double t1 = 1.0;              // unsteady window [0, t1]
  geo::HeartParams heart{0.5, 0.7, 1.3, {1.0, 0.5}, 0.12};
};

/// poisson_hmg | poisson_inhmg | annulus | cavity | obstacle_square | obstacle_heart
ProblemSpec make_problem(const std::string& id, const ProblemOptions& opt = {});
/// Closed-form solution, when the problem has one (annulus).
std::optional<Expr> exact_solution(const std::string& id);

// ---- optimisation building blocks -------------------------------------------

struct DynNormState {
  double beta = 0.999;
  bool bias_correction = true;
  long n = 0;
  double ema = 0.0;        // lambda-hat, starts at zero
  double corrected = 0.0;  // lambda-tilde
  double raw = 0.0;
  bool stagnant = false;
};

/// |grad L_pde| / |grad L_term|; returns `previous` when the term gradient vanishes.
double dyn_norm_raw(double g_pde_norm, double g_term_norm, double previous, bool* stagnant = nullptr);
/// EMA followed by bias correction (when enabled).
void dyn_norm_update(DynNormState& s, double raw);

struct AdamState {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  long t = 0;
  Eigen::VectorXd m, v;
};

/// One bias-corrected Adam step. `scale` multiplies the per-entry step
/// (negative for ascent, zero to freeze); empty means all ones.
void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grad, AdamState& s, double lr,
               const Eigen::VectorXd& scale = {});

/// lr0 * rate^(iter / steps)
double decayed_lr(double lr0, double rate, int steps, int iter);

inline double positivity(double kappa) { return std::exp(kappa); }

// ---- configuration and results --------------------------------------------

struct Extension {
  enum class Kind { None, Llaaf, Gpinn, SaPinn };
  Kind kind = Kind::None;
  double lambda_sr = 1.0;
  double lambda_ge = 1e-3;
  double c_sa = 1.0;
  bool dagger = false;  // freeze the point weights after half the iterations
};

struct TrainConfig {
  NetworkConfig net;
  Imposition imposition = Imposition::Hard;
  Weighting weighting = Weighting::Fixed;
  double beta = 0.999;
  bool bias_correction = true;
  double lambda_bc = 1.0, lambda_data = 1.0, lambda_div = 1.0;
  int iterations = 5000;
  double lr = 1e-3;
  double decay_rate = 1.0;
  int decay_steps = 2000;
  int n_pde = 1024;
  int n_dbc = 768;
  int n_nbc = 256;
  std::uint64_t sample_seed = 0;
  int record_every = 100;
  Extension ext;

  void validate() const;
};

struct ReportRow {
  int iter = 0;
  double loss_pde = 0, loss_bc = 0, loss_data = 0, loss_div = 0;
  double lambda_data = 0, lambda_div = 0;
  double rel_l2 = 0;
  double param_estimate = 0;
};

struct TrainResult {
  std::vector<ReportRow> rows;
  double rel_l2 = 0.0;
  double param_estimate = 0.0;
  /// Largest |trial - g_D| over the sampled Dirichlet points seen while training.
  double dirichlet_violation = 0.0;
  Mlp net;
};

class NumericalFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void write_report(std::ostream& out, const std::vector<ReportRow>& rows);
std::vector<ReportRow> read_report(std::istream& in);

/// Collocation points drawn for one run.
struct Collocation {
  Eigen::MatrixXd pde;                     // inputs x N
  Eigen::MatrixXd dirichlet;               // inputs x N
  std::vector<int> dirichlet_piece;
  Eigen::MatrixXd neumann;                 // inputs x N
  std::vector<int> neumann_piece;
};

Collocation sample_collocation(const ProblemSpec& spec, const TrainConfig& cfg);

/// Trains one network. `reference` feeds the rel-L2 column; `data` the data loss.
TrainResult train(const ProblemSpec& spec, const TrainConfig& cfg, const FieldSamples* reference = nullptr,
                  const FieldSamples* data = nullptr);

/// Trial solution values (outputs x N) at arbitrary points; pressure is returned raw.
Eigen::MatrixXd evaluate_trial(const ProblemSpec& spec, const Mlp& net, Imposition imp, const Eigen::MatrixXd& points);

/// ||a - b|| / ||b|| over all entries; throws on a zero reference.
double rel_l2(const Eigen::MatrixXd& approx, const Eigen::MatrixXd& reference);

// ---- loss pieces exposed for testing ----------------------------------------

/// Precomputed trial inputs for a batch of points with a given carried order.
class TrialBatch {
 public:
  TrialBatch(const ProblemSpec& spec, Imposition imp, const Eigen::MatrixXd& points, int order);

  const Eigen::MatrixXd& points() const { return points_; }
  const ad::JetLayout& layout() const { return *layout_; }
  Eigen::Index size() const { return points_.cols(); }

  /// One node per network output, each carrying the batch layout.
  std::vector<ad::Var> record(ad::Tape& tape, const Mlp& net) const;

 private:
  const ProblemSpec* spec_;
  Imposition imp_;
  Eigen::MatrixXd points_;
  const ad::JetLayout* layout_;
  Eigen::MatrixXd phi_;                 // 1 x (channels * N)
  std::vector<Eigen::MatrixXd> gbar_;   // per component
};

/// Source values f (and derivatives up to `order`) as constant-node payload.
Eigen::MatrixXd source_channels(const ProblemSpec& spec, const Eigen::MatrixXd& points, const ad::JetLayout& L);

ad::Var poisson_residual(ad::Tape& t, const std::vector<ad::Var>& u, const ad::JetLayout& L, const Eigen::MatrixXd& f);
/// d/dx_k of the Poisson residual, k = 0, 1 (needs order 3).
ad::Var poisson_residual_derivative(ad::Tape& t, const std::vector<ad::Var>& u, const ad::JetLayout& L,
                                    const Eigen::MatrixXd& f, int k);
ad::Var divergence(ad::Tape& t, const std::vector<ad::Var>& uvp, const ad::JetLayout& L);
/// Both momentum residual components; `nu` is a 1x1 node.
std::pair<ad::Var, ad::Var> momentum_residual(ad::Tape& t, const std::vector<ad::Var>& uvp, const ad::JetLayout& L,
                                              ad::Var nu, double rho, bool unsteady);
ad::Var mean_square(ad::Tape& t, ad::Var r);

}  // namespace rfpinn
