#include "rfpinn/refsolvers.hpp"

#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

namespace rfpinn::ref {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using Triplet = Eigen::Triplet<double>;

void Grid2::validate() const {
  if (nx < 2 || ny < 2) throw std::invalid_argument("grid: need at least 2 cells per direction");
  if (!(dx > 0) || !(dy > 0)) throw std::invalid_argument("grid: spacings must be positive");
}

// ---- Poisson ------------------------------------------------------------------

NodeField fdm_poisson_mixed(const Grid2& g, const Expr& f, const std::function<double(double, double)>& g_d,
                            const Expr& g_n, double* residual) {
  g.validate();
  if (!g_d) throw std::invalid_argument("fdm_poisson_mixed: Dirichlet data required");
  const int NX = g.nodes_x(), NY = g.nodes_y();
  NodeField u = NodeField::Zero(NY, NX);
  // Dirichlet: left, right (including bottom corners) and top.
  for (int j = 0; j < NY; ++j) {
    u(j, 0) = g_d(g.x(0), g.y(j));
    u(j, NX - 1) = g_d(g.x(NX - 1), g.y(j));
  }
  for (int i = 0; i < NX; ++i) u(NY - 1, i) = g_d(g.x(i), g.y(NY - 1));

  // Unknowns: 0 < i < nx, 0 <= j < ny.
  const int ni = NX - 2, nj = NY - 1;
  auto id = [&](int i, int j) { return (j * ni) + (i - 1); };
  const double ax = 1.0 / (g.dx * g.dx), ay = 1.0 / (g.dy * g.dy);
  std::vector<Triplet> trip;
  VectorXd b = VectorXd::Zero(ni * nj);
  for (int j = 0; j < nj; ++j)
    for (int i = 1; i <= ni; ++i) {
      const int r = id(i, j);
      const double x = g.x(i), y = g.y(j);
      trip.emplace_back(r, r, 2 * ax + 2 * ay);
      b[r] = f(x, y);
      auto couple = [&](int ii, int jj, double w) {
        if (ii == 0 || ii == NX - 1 || jj == NY - 1) b[r] += w * u(jj, ii);
        else trip.emplace_back(r, id(ii, jj), -w);
      };
      couple(i - 1, j, ax);
      couple(i + 1, j, ax);
      if (j == 0) {
        // ghost below: u(-1) = u(1) + 2 dy g_n, outward normal (0, -1)
        couple(i, 1, 2 * ay);
        b[r] += 2.0 * g_n(x, y) / g.dy;
      } else {
        couple(i, j - 1, ay);
        couple(i, j + 1, ay);
      }
    }
  Eigen::SparseMatrix<double> A(ni * nj, ni * nj);
  A.setFromTriplets(trip.begin(), trip.end());
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.compute(A);
  if (lu.info() != Eigen::Success) throw SolverFailure("fdm_poisson_mixed: factorisation failed");
  const VectorXd sol = lu.solve(b);
  if (residual) *residual = (A * sol - b).lpNorm<Eigen::Infinity>();
  for (int j = 0; j < nj; ++j)
    for (int i = 1; i <= ni; ++i) u(j, i) = sol[id(i, j)];
  return u;
}

// ---- projection on a B-type grid ------------------------------------------------

namespace {

class BGridProjection {
 public:
  BGridProjection(const Grid2& g, double nu, std::vector<char> fixed, std::vector<char> outflow)
      : g_(g), nu_(nu), fixed_(std::move(fixed)), outflow_(std::move(outflow)) {
    NX_ = g.nodes_x();
    NY_ = g.nodes_y();
    u_ = NodeField::Zero(NY_, NX_);
    v_ = NodeField::Zero(NY_, NX_);
    p_ = MatrixXd::Zero(g.ny, g.nx);
    build_pressure_operator();
  }

  NodeField& u() { return u_; }
  NodeField& v() { return v_; }
  const MatrixXd& p() const { return p_; }

  bool corrected(int i, int j) const { return !fixed_[j * NX_ + i]; }

  /// One explicit step; returns ||u_new - u_old|| / ||u_new||.
  double step(double dt) {
    const NodeField u0 = u_, v0 = v_;
    NodeField us = u_, vs = v_;
    for (int j = 1; j < NY_ - 1; ++j)
      for (int i = 1; i < NX_ - 1; ++i) {
        if (!corrected(i, j)) continue;
        us(j, i) = u0(j, i) + dt * (-advect(u0, u0(j, i), v0(j, i), i, j) + nu_ * laplacian(u0, i, j));
        vs(j, i) = v0(j, i) + dt * (-advect(v0, u0(j, i), v0(j, i), i, j) + nu_ * laplacian(v0, i, j));
      }
    for (int j = 1; j < NY_ - 1; ++j)
      if (outflow_[j * NX_ + NX_ - 1]) {
        us(j, NX_ - 1) = us(j, NX_ - 2);
        vs(j, NX_ - 1) = vs(j, NX_ - 2);
      }

    // pressure correction
    VectorXd rhs(active_.size());
    for (std::size_t k = 0; k < active_.size(); ++k) {
      const auto [ci, cj] = active_[k];
      rhs[k] = -divergence(us, vs, ci, cj) / dt;
    }
    const VectorXd sol = ldlt_.solve(rhs);
    p_.setZero();
    for (std::size_t k = 0; k < active_.size(); ++k) p_(active_[k].second, active_[k].first) = sol[k];
    for (int j = 0; j < NY_; ++j)
      for (int i = 0; i < NX_; ++i) {
        if (!corrected(i, j)) continue;
        us(j, i) -= dt * grad_x(i, j);
        vs(j, i) -= dt * grad_y(i, j);
      }
    u_ = us;
    v_ = vs;
    const double denom = std::sqrt(u_.squaredNorm() + v_.squaredNorm());
    const double change = std::sqrt((u_ - u0).squaredNorm() + (v_ - v0).squaredNorm());
    return denom > 0 ? change / denom : change;
  }

  double max_divergence() const {
    double m = 0.0;
    for (const auto& [ci, cj] : active_) m = std::max(m, std::abs(divergence(u_, v_, ci, cj)));
    return m;
  }

  /// Pressure at nodes: mean of adjacent cells inside the grid.
  NodeField nodal_pressure() const {
    NodeField out = NodeField::Zero(NY_, NX_);
    for (int j = 0; j < NY_; ++j)
      for (int i = 0; i < NX_; ++i) {
        double acc = 0.0;
        int n = 0;
        for (int cj = j - 1; cj <= j; ++cj)
          for (int ci = i - 1; ci <= i; ++ci)
            if (ci >= 0 && cj >= 0 && ci < g_.nx && cj < g_.ny && cell_index_[cj * g_.nx + ci] >= 0) {
              acc += p_(cj, ci);
              ++n;
            }
        out(j, i) = n ? acc / n : 0.0;
      }
    return out;
  }

 private:
  // Third-order upwind where the five-point stencil fits, central otherwise.
  double d_dx(const NodeField& f, double a, int i, int j) const {
    if (i >= 2 && i <= NX_ - 3) {
      const double c = -f(j, i + 2) + 8.0 * (f(j, i + 1) - f(j, i - 1)) + f(j, i - 2);
      const double d = f(j, i + 2) - 4.0 * f(j, i + 1) + 6.0 * f(j, i) - 4.0 * f(j, i - 1) + f(j, i - 2);
      return a * c / (12.0 * g_.dx) + std::abs(a) * d / (4.0 * g_.dx);
    }
    return a * (f(j, i + 1) - f(j, i - 1)) / (2.0 * g_.dx);
  }
  double d_dy(const NodeField& f, double a, int i, int j) const {
    if (j >= 2 && j <= NY_ - 3) {
      const double c = -f(j + 2, i) + 8.0 * (f(j + 1, i) - f(j - 1, i)) + f(j - 2, i);
      const double d = f(j + 2, i) - 4.0 * f(j + 1, i) + 6.0 * f(j, i) - 4.0 * f(j - 1, i) + f(j - 2, i);
      return a * c / (12.0 * g_.dy) + std::abs(a) * d / (4.0 * g_.dy);
    }
    return a * (f(j + 1, i) - f(j - 1, i)) / (2.0 * g_.dy);
  }
  double advect(const NodeField& f, double a, double b, int i, int j) const { return d_dx(f, a, i, j) + d_dy(f, b, i, j); }
  double laplacian(const NodeField& f, int i, int j) const {
    return (f(j, i + 1) - 2.0 * f(j, i) + f(j, i - 1)) / (g_.dx * g_.dx) +
           (f(j + 1, i) - 2.0 * f(j, i) + f(j - 1, i)) / (g_.dy * g_.dy);
  }

  double divergence(const NodeField& u, const NodeField& v, int ci, int cj) const {
    return ((u(cj, ci + 1) + u(cj + 1, ci + 1)) - (u(cj, ci) + u(cj + 1, ci))) / (2.0 * g_.dx) +
           ((v(cj + 1, ci) + v(cj + 1, ci + 1)) - (v(cj, ci) + v(cj, ci + 1))) / (2.0 * g_.dy);
  }

  double cell_p(int ci, int cj) const {
    if (ci < 0 || cj < 0 || ci >= g_.nx || cj >= g_.ny) return 0.0;  // ghost cells beyond an outlet
    return p_(cj, ci);
  }
  double grad_x(int i, int j) const {
    return ((cell_p(i, j) + cell_p(i, j - 1)) - (cell_p(i - 1, j) + cell_p(i - 1, j - 1))) / (2.0 * g_.dx);
  }
  double grad_y(int i, int j) const {
    return ((cell_p(i, j) + cell_p(i - 1, j)) - (cell_p(i, j - 1) + cell_p(i - 1, j - 1))) / (2.0 * g_.dy);
  }

  void build_pressure_operator() {
    const int nc = g_.nx * g_.ny;
    cell_index_.assign(nc, -1);
    bool has_outflow = std::any_of(outflow_.begin(), outflow_.end(), [](char c) { return c != 0; });
    // Cells touching a corrected node carry an unknown.
    std::vector<char> live(nc, 0);
    for (int cj = 0; cj < g_.ny; ++cj)
      for (int ci = 0; ci < g_.nx; ++ci)
        for (int dj = 0; dj < 2; ++dj)
          for (int di = 0; di < 2; ++di)
            if (corrected(ci + di, cj + dj)) live[cj * g_.nx + ci] = 1;
    // Without an outlet the constant and checkerboard modes are pinned.
    if (!has_outflow) {
      int pinned = 0;
      for (int c = 0; c < nc && pinned < 2; ++c)
        if (live[c] && (pinned == 0 || c == pinned_cell_ + 1)) {
          if (pinned == 0) pinned_cell_ = c;
          live[c] = 0;
          ++pinned;
        }
    }
    for (int c = 0; c < nc; ++c)
      if (live[c]) {
        cell_index_[c] = static_cast<int>(active_.size());
        active_.emplace_back(c % g_.nx, c / g_.nx);
      }
    // K = G^T M G assembled node by node.
    std::vector<Triplet> trip;
    const double hx = 1.0 / (2.0 * g_.dx), hy = 1.0 / (2.0 * g_.dy);
    for (int j = 0; j < NY_; ++j)
      for (int i = 0; i < NX_; ++i) {
        if (!corrected(i, j)) continue;
        int idx[4];
        double gx[4], gy[4];
        int k = 0;
        for (int cj = j - 1; cj <= j; ++cj)
          for (int ci = i - 1; ci <= i; ++ci, ++k) {
            const bool inside = ci >= 0 && cj >= 0 && ci < g_.nx && cj < g_.ny;
            idx[k] = inside ? cell_index_[cj * g_.nx + ci] : -1;
            gx[k] = (ci == i ? 1.0 : -1.0) * hx;
            gy[k] = (cj == j ? 1.0 : -1.0) * hy;
          }
        for (int a = 0; a < 4; ++a)
          for (int b = 0; b < 4; ++b)
            if (idx[a] >= 0 && idx[b] >= 0) trip.emplace_back(idx[a], idx[b], gx[a] * gx[b] + gy[a] * gy[b]);
      }
    Eigen::SparseMatrix<double> K(active_.size(), active_.size());
    K.setFromTriplets(trip.begin(), trip.end());
    ldlt_.compute(K);
    if (ldlt_.info() != Eigen::Success) throw SolverFailure("projection: pressure operator factorisation failed");
  }

  Grid2 g_;
  double nu_;
  int NX_ = 0, NY_ = 0;
  std::vector<char> fixed_, outflow_;
  NodeField u_, v_;
  MatrixXd p_;
  std::vector<int> cell_index_;
  std::vector<std::pair<int, int>> active_;
  int pinned_cell_ = -1;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt_;
};

double stable_dt(const Grid2& g, double nu, double umax, double cfl) {
  const double h = std::min(g.dx, g.dy);
  const double conv = cfl * h / std::max(umax, 1e-12);
  const double diff = 0.2 / (nu * (1.0 / (g.dx * g.dx) + 1.0 / (g.dy * g.dy)));
  return std::min(conv, diff);
}

double max_speed(const NodeField& u, const NodeField& v) {
  return std::sqrt((u.array().square() + v.array().square()).maxCoeff());
}

}  // namespace

FlowFields fdm_cavity(const Grid2& g, const CavityOptions& opt) {
  g.validate();
  if (!(opt.reynolds > 0)) throw std::invalid_argument("fdm_cavity: Re must be positive");
  const int NX = g.nodes_x(), NY = g.nodes_y();
  std::vector<char> fixed(NX * NY, 0), outflow(NX * NY, 0);
  for (int j = 0; j < NY; ++j)
    for (int i = 0; i < NX; ++i) fixed[j * NX + i] = (i == 0 || j == 0 || i == NX - 1 || j == NY - 1);
  const double nu = 1.0 / opt.reynolds;
  BGridProjection s(g, nu, fixed, outflow);
  s.u().row(NY - 1).setOnes();  // lid, corners included

  FlowFields out;
  out.grid = g;
  const double dt = stable_dt(g, nu, 1.0, opt.cfl);
  double change = 1.0;
  int n = 0;
  while (n < opt.max_steps) {
    change = s.step(dt);
    ++n;
    if (n % 100 == 0) out.kinetic_energy.push_back(0.5 * (s.u().squaredNorm() + s.v().squaredNorm()) * g.dx * g.dy);
    if (!std::isfinite(change) || max_speed(s.u(), s.v()) > 1e3) {
      std::ostringstream msg;
      msg << "fdm_cavity diverged at step " << n << " (dt=" << dt << ", CFL=" << max_speed(s.u(), s.v()) * dt / g.dx << ")";
      throw SolverFailure(msg.str());
    }
    if (change <= opt.tol) break;
  }
  out.u = s.u();
  out.v = s.v();
  out.p_cells = s.p();
  out.p = s.nodal_pressure();
  out.steps = n;
  out.last_change = change;
  out.max_divergence = s.max_divergence();
  return out;
}

std::vector<ChannelSnapshot> fdm_channel(const Grid2& g, const ChannelOptions& opt) {
  g.validate();
  const int NX = g.nodes_x(), NY = g.nodes_y();
  std::vector<char> fixed(NX * NY, 0), outflow(NX * NY, 0);
  const double eps = 1e-9;
  auto solid = [&](double x, double y) {
    return x >= opt.obstacle_x0 - eps && x <= opt.obstacle_x1 + eps && y >= opt.obstacle_y0 - eps &&
           y <= opt.obstacle_y1 + eps;
  };
  for (int j = 0; j < NY; ++j)
    for (int i = 0; i < NX; ++i) {
      fixed[j * NX + i] = (i == 0 || j == 0 || j == NY - 1 || solid(g.x(i), g.y(j)));
      outflow[j * NX + i] = (i == NX - 1 && !fixed[j * NX + i]);
    }
  BGridProjection s(g, opt.nu, fixed, outflow);
  const double height = g.y(NY - 1) - g.y(0);
  for (int j = 0; j < NY; ++j) {
    const double eta = (g.y(j) - g.y(0)) / height;
    const double inlet = 4.0 * eta * (1.0 - eta);
    for (int i = 0; i < NX; ++i)
      if (!solid(g.x(i), g.y(j)) && j > 0 && j < NY - 1) s.u()(j, i) = inlet;
    s.u()(j, 0) = inlet;
  }
  // Small asymmetric kick so that shedding develops during spin-up.
  for (int j = 1; j < NY - 1; ++j)
    for (int i = 1; i < NX; ++i)
      if (!fixed[j * NX + i]) s.v()(j, i) = 0.01 * std::sin(3.0 * g.x(i)) * (g.y(j) > 0.5 ? 1.0 : 0.5);

  std::vector<ChannelSnapshot> out;
  double t = -opt.spinup;
  const double end = opt.window + 1e-12;
  double next = 0.0;
  while (true) {
    if (t >= next - 1e-12) {
      out.push_back({std::max(0.0, next), s.u(), s.v(), s.nodal_pressure()});
      next += opt.snapshot_every;
      if (next > end) break;
    }
    double dt = stable_dt(g, opt.nu, std::max(1.0, max_speed(s.u(), s.v())), opt.cfl);
    if (t < 0.0 && t + dt > 0.0) dt = -t;
    else if (t >= 0.0 && t + dt > next) dt = next - t;
    if (dt <= 1e-14) {
      t = next;
      continue;
    }
    const double change = s.step(dt);
    if (!std::isfinite(change) || max_speed(s.u(), s.v()) > 1e3)
      throw SolverFailure("fdm_channel diverged at t=" + std::to_string(t));
    t += dt;
  }
  return out;
}

const std::vector<std::pair<double, double>>& ghia_re100_u() {
  static const std::vector<std::pair<double, double>> table = {
      {1.0000, 1.00000},  {0.9766, 0.84123},  {0.9688, 0.78871},  {0.9609, 0.73722},  {0.9531, 0.68717},
      {0.8516, 0.23151},  {0.7344, 0.00332},  {0.6172, -0.13641}, {0.5000, -0.20581}, {0.4531, -0.21090},
      {0.2813, -0.15662}, {0.1719, -0.10150}, {0.1016, -0.06434}, {0.0703, -0.04775}, {0.0625, -0.04192},
      {0.0547, -0.03717}, {0.0000, 0.00000}};
  return table;
}

double interpolate(const Grid2& g, const NodeField& f, double x, double y) {
  const double fx = std::clamp((x - g.x0) / g.dx, 0.0, static_cast<double>(g.nx));
  const double fy = std::clamp((y - g.y0) / g.dy, 0.0, static_cast<double>(g.ny));
  const int i = std::min(static_cast<int>(fx), g.nx - 1), j = std::min(static_cast<int>(fy), g.ny - 1);
  const double a = fx - i, b = fy - j;
  return (1 - a) * (1 - b) * f(j, i) + a * (1 - b) * f(j, i + 1) + (1 - a) * b * f(j + 1, i) + a * b * f(j + 1, i + 1);
}

// ---- CSV ----------------------------------------------------------------------

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

ReferenceCloud ingest_reference_csv(std::istream& in, const std::optional<geo::BBox>& box) {
  std::string line;
  if (!std::getline(in, line)) throw CsvError("line 1: empty file");
  const auto header = split(line);
  ReferenceCloud c;
  std::vector<std::string> expect{"x", "y"};
  std::size_t k = 2;
  if (header.size() > k && header[k] == "t") c.has_t = true, ++k;
  if (header.size() <= k || header[k] != "u") throw CsvError("line 1: header must be x,y[,t],u[,v[,p]]");
  ++k;
  if (header.size() > k && header[k] == "v") c.has_v = true, ++k;
  if (header.size() > k && header[k] == "p") c.has_p = true, ++k;
  if (header.size() != k || header[0] != "x" || header[1] != "y")
    throw CsvError("line 1: header must be x,y[,t],u[,v[,p]]");
  const int dims = c.has_t ? 3 : 2;
  const int vals = 1 + c.has_v + c.has_p;

  std::vector<double> pts, data;
  std::map<std::vector<double>, int> seen;
  std::ostringstream errors;
  int bad = 0, lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split(line);
    if (cells.size() != k) {
      errors << "line " << lineno << ": expected " << k << " columns, got " << cells.size() << '\n';
      ++bad;
      continue;
    }
    std::vector<double> row;
    bool ok = true;
    for (const auto& s : cells) {
      char* end = nullptr;
      const double v = std::strtod(s.c_str(), &end);
      if (s.empty() || *end != '\0' || !std::isfinite(v)) {
        ok = false;
        break;
      }
      row.push_back(v);
    }
    if (!ok) {
      errors << "line " << lineno << ": malformed or non-finite value\n";
      ++bad;
      continue;
    }
    if (box) {
      const double tol = 1e-12;
      if (row[0] < box->x0 - tol || row[0] > box->x1 + tol || row[1] < box->y0 - tol || row[1] > box->y1 + tol) {
        errors << "line " << lineno << ": point (" << row[0] << ", " << row[1] << ") outside the domain\n";
        ++bad;
        continue;
      }
    }
    const std::vector<double> key(row.begin(), row.begin() + dims);
    if (seen.count(key)) continue;
    seen[key] = lineno;
    pts.insert(pts.end(), row.begin(), row.begin() + dims);
    data.insert(data.end(), row.begin() + dims, row.end());
  }
  if (bad) throw CsvError(errors.str());
  const Index n = static_cast<Index>(pts.size() / dims);
  if (n == 0) throw CsvError("no data rows");
  c.points = Eigen::Map<MatrixXd>(pts.data(), dims, n);
  c.values = Eigen::Map<MatrixXd>(data.data(), vals, n);
  return c;
}

ReferenceCloud ingest_reference_csv(const std::string& path, const std::optional<geo::BBox>& box) {
  std::ifstream in(path);
  if (!in) throw CsvError("cannot open " + path);
  return ingest_reference_csv(in, box);
}

void export_reference_csv(std::ostream& out, const ReferenceCloud& c) {
  out << "x,y" << (c.has_t ? ",t" : "") << ",u" << (c.has_v ? ",v" : "") << (c.has_p ? ",p" : "") << '\n';
  for (Index j = 0; j < c.points.cols(); ++j) {
    for (Index r = 0; r < c.points.rows(); ++r) out << (r ? "," : "") << g17(c.points(r, j));
    for (Index r = 0; r < c.values.rows(); ++r) out << ',' << g17(c.values(r, j));
    out << '\n';
  }
}

ReferenceCloud cloud_from_grid(const Grid2& g, const NodeField& u, const NodeField* v, const NodeField* p) {
  ReferenceCloud c;
  c.has_v = v != nullptr;
  c.has_p = p != nullptr;
  const int NX = g.nodes_x(), NY = g.nodes_y();
  c.points.resize(2, NX * NY);
  c.values.resize(1 + c.has_v + c.has_p, NX * NY);
  for (int j = 0; j < NY; ++j)
    for (int i = 0; i < NX; ++i) {
      const int k = j * NX + i;
      c.points.col(k) << g.x(i), g.y(j);
      int r = 0;
      c.values(r++, k) = u(j, i);
      if (v) c.values(r++, k) = (*v)(j, i);
      if (p) c.values(r++, k) = (*p)(j, i);
    }
  return c;
}

FieldSamples sample_observations(const FieldSamples& field, int n, std::uint64_t seed, double noise_sigma) {
  if (n < 0 || n > field.size()) throw std::invalid_argument("sample_observations: n exceeds available points");
  if (noise_sigma < 0) throw std::invalid_argument("sample_observations: negative noise level");
  std::vector<Index> idx(field.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  // Partial Fisher-Yates for a reproducible draw.
  for (int k = 0; k < n; ++k) {
    std::uniform_int_distribution<Index> pick(k, field.size() - 1);
    std::swap(idx[k], idx[pick(rng)]);
  }
  FieldSamples out{MatrixXd(field.points.rows(), n), MatrixXd(field.values.rows(), n)};
  std::normal_distribution<double> noise(0.0, noise_sigma > 0 ? noise_sigma : 1.0);
  for (int k = 0; k < n; ++k) {
    out.points.col(k) = field.points.col(idx[k]);
    out.values.col(k) = field.values.col(idx[k]);
    if (noise_sigma > 0)
      for (Index r = 0; r < out.values.rows(); ++r) out.values(r, k) += noise(rng);
  }
  return out;
}

FieldSamples to_samples(const ReferenceCloud& c, int components) {
  if (components > c.values.rows()) throw std::invalid_argument("to_samples: not enough value columns");
  return {c.points, c.values.topRows(components)};
}

}  // namespace rfpinn::ref
