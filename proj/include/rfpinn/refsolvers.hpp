#pragma once
/**
 * @file refsolvers.hpp
 * @brief Finite-difference reference solutions and reference-field I/O.
 */

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rfpinn/expr.hpp"
#include "rfpinn/geometry.hpp"
#include "rfpinn/training.hpp"

namespace rfpinn::ref {

/// Node-centred grid over [x0, x0 + nx*dx] x [y0, y0 + ny*dy].
struct Grid2 {
  int nx = 100, ny = 100;  // cell counts
  double x0 = 0.0, y0 = 0.0;
  double dx = 0.01, dy = 0.01;

  static Grid2 unit(int cells) { return {cells, cells, 0.0, 0.0, 1.0 / cells, 1.0 / cells}; }
  int nodes_x() const { return nx + 1; }
  int nodes_y() const { return ny + 1; }
  double x(int i) const { return x0 + i * dx; }
  double y(int j) const { return y0 + j * dy; }
  void validate() const;
};

/// Nodal values, row index j (y), column index i (x).
using NodeField = Eigen::MatrixXd;

/// -lap u = f on the unit-square layout: Dirichlet on right, top and left,
/// Neumann (outward derivative g_n) on the bottom.
NodeField fdm_poisson_mixed(const Grid2& grid, const Expr& f, const std::function<double(double, double)>& g_d,
                            const Expr& g_n, double* residual = nullptr);

struct FlowFields {
  Grid2 grid;
  NodeField u, v, p;  // p interpolated to nodes
  Eigen::MatrixXd p_cells;
  int steps = 0;
  double last_change = 0.0;
  double max_divergence = 0.0;
  std::vector<double> kinetic_energy;  // sampled every 100 steps
};

class SolverFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CavityOptions {
  double reynolds = 100.0;
  double tol = 1e-8;
  int max_steps = 200000;
  double cfl = 0.5;
};

/// Steady lid-driven cavity on the unit square by projection on a B-type grid.
FlowFields fdm_cavity(const Grid2& grid, const CavityOptions& opt);

struct ChannelOptions {
  double nu = 2e-3;
  double obstacle_x0 = 0.9, obstacle_y0 = 0.4, obstacle_x1 = 1.1, obstacle_y1 = 0.6;
  double spinup = 20.0;       // time integrated before recording
  double window = 1.0;        // recorded span
  double snapshot_every = 0.1;
  double cfl = 0.4;
};

struct ChannelSnapshot {
  double t;
  NodeField u, v, p;
};

/// Channel flow past a square obstacle; snapshots start at t = 0 after spin-up.
std::vector<ChannelSnapshot> fdm_channel(const Grid2& grid, const ChannelOptions& opt);

/// Classic centreline u-velocity for Re = 100 (y, u) pairs.
const std::vector<std::pair<double, double>>& ghia_re100_u();

/// Bilinear interpolation of a nodal field.
double interpolate(const Grid2& grid, const NodeField& f, double x, double y);

// ---- reference-field I/O ------------------------------------------------------

struct ReferenceCloud {
  bool has_t = false;
  bool has_v = false;
  bool has_p = false;
  Eigen::MatrixXd points;  // 2 or 3 x N
  Eigen::MatrixXd values;  // u[, v][, p] x N
};

class CsvError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Schema x,y[,t],u[,v[,p]]; checks rows and the bounding box, drops duplicates.
ReferenceCloud ingest_reference_csv(std::istream& in, const std::optional<geo::BBox>& box = std::nullopt);
ReferenceCloud ingest_reference_csv(const std::string& path, const std::optional<geo::BBox>& box = std::nullopt);
void export_reference_csv(std::ostream& out, const ReferenceCloud& cloud);

ReferenceCloud cloud_from_grid(const Grid2& grid, const NodeField& u, const NodeField* v = nullptr,
                               const NodeField* p = nullptr);

/// Uniform subsample without replacement plus optional Gaussian noise.
FieldSamples sample_observations(const FieldSamples& field, int n, std::uint64_t seed, double noise_sigma = 0.0);

/// Cloud as training samples (points, first `components` value rows).
FieldSamples to_samples(const ReferenceCloud& cloud, int components);

}  // namespace rfpinn::ref
