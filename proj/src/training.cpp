#include "rfpinn/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>

namespace rfpinn {

using ad::JetLayout;
using ad::Tape;
using ad::Var;
using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

// ---- specs and configs ------------------------------------------------------

double PhysicsParams::viscosity(PdeKind kind) const {
  if (kind == PdeKind::SteadyNS) return 1.0 / reynolds;
  return nu;
}

void PhysicsParams::validate() const {
  if (!(reynolds > 0) || !(nu > 0) || !(rho > 0)) throw std::invalid_argument("physics: constants must be positive");
}

void ProblemSpec::validate() const {
  if (!domain.has(geo::BcKind::Dirichlet)) throw std::invalid_argument(name + ": no Dirichlet boundary");
  if (flow() && second_bc.size() != domain.pieces().size())
    throw std::invalid_argument(name + ": second component data must cover every piece");
  if (kind == PdeKind::UnsteadyNS && !(t1 > t0)) throw std::invalid_argument(name + ": empty time window");
  physics.validate();
}

void TrainConfig::validate() const {
  net.validate();
  if (iterations < 0) throw std::invalid_argument("iterations must be >= 0");
  if (n_pde <= 0 || n_dbc <= 0 || n_nbc <= 0) throw std::invalid_argument("point counts must be positive");
  if (!(beta >= 0.0 && beta < 1.0)) throw std::invalid_argument("beta must lie in [0, 1)");
  if (!(lr > 0)) throw std::invalid_argument("learning rate must be positive");
  if (decay_steps <= 0 || !(decay_rate > 0)) throw std::invalid_argument("bad learning-rate schedule");
  if (record_every <= 0) throw std::invalid_argument("record_every must be positive");
  if (lambda_bc < 0 || lambda_data < 0 || lambda_div < 0) throw std::invalid_argument("loss weights must be >= 0");
}

// ---- weighting and optimiser --------------------------------------------------

double dyn_norm_raw(double g_pde_norm, double g_term_norm, double previous, bool* stagnant) {
  if (stagnant) *stagnant = g_pde_norm == 0.0 && g_term_norm == 0.0;
  if (!(g_term_norm > 0.0)) return previous;
  return g_pde_norm / g_term_norm;
}

void dyn_norm_update(DynNormState& s, double raw) {
  s.n += 1;
  s.raw = raw;
  s.ema = s.beta * s.ema + (1.0 - s.beta) * raw;
  if (!s.bias_correction) {
    s.corrected = s.ema;
    return;
  }
  // Running form of ema / (1 - beta^n); constant streams stay exact.
  const double w = (1.0 - s.beta) / (1.0 - std::pow(s.beta, static_cast<double>(s.n)));
  s.corrected = s.n == 1 ? raw : s.corrected + w * (raw - s.corrected);
}

void adam_step(VectorXd& params, const VectorXd& grad, AdamState& s, double lr, const VectorXd& scale) {
  if (grad.size() != params.size() || (scale.size() != 0 && scale.size() != params.size()))
    throw std::invalid_argument("adam_step: size mismatch");
  if (s.m.size() != params.size()) {
    s.m = VectorXd::Zero(params.size());
    s.v = VectorXd::Zero(params.size());
  }
  s.t += 1;
  s.m = s.beta1 * s.m + (1.0 - s.beta1) * grad;
  s.v = s.beta2 * s.v + (1.0 - s.beta2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.t));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.t));
  for (Index i = 0; i < params.size(); ++i) {
    const double step = lr * (s.m[i] / c1) / (std::sqrt(s.v[i] / c2) + s.eps);
    params[i] -= scale.size() ? scale[i] * step : step;
  }
}

double decayed_lr(double lr0, double rate, int steps, int iter) {
  return lr0 * std::pow(rate, static_cast<double>(iter) / steps);
}

// ---- report -----------------------------------------------------------------

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

void write_report(std::ostream& out, const std::vector<ReportRow>& rows) {
  out << "iter,loss_pde,loss_bc,loss_data,loss_div,lambda_data,lambda_div,rel_l2,param_estimate\n";
  for (const auto& r : rows)
    out << r.iter << ',' << num(r.loss_pde) << ',' << num(r.loss_bc) << ',' << num(r.loss_data) << ','
        << num(r.loss_div) << ',' << num(r.lambda_data) << ',' << num(r.lambda_div) << ',' << num(r.rel_l2) << ','
        << num(r.param_estimate) << '\n';
}

std::vector<ReportRow> read_report(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("iter,", 0) != 0) throw std::runtime_error("report: missing header");
  std::vector<ReportRow> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> v;
    while (std::getline(ss, cell, ',')) v.push_back(std::strtod(cell.c_str(), nullptr));
    if (v.size() != 9) throw std::runtime_error("report: line " + std::to_string(lineno) + " has wrong column count");
    rows.push_back({static_cast<int>(v[0]), v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8]});
  }
  return rows;
}

double rel_l2(const MatrixXd& approx, const MatrixXd& reference) {
  if (approx.rows() != reference.rows() || approx.cols() != reference.cols())
    throw std::invalid_argument("rel_l2: shape mismatch");
  const double denom = reference.norm();
  if (!(denom > 0)) throw std::invalid_argument("rel_l2: reference has zero norm");
  return (approx - reference).norm() / denom;
}

// ---- trial construction -------------------------------------------------------

namespace {

/// Dirichlet sub-field carrying the data of one component.
geo::DistanceField dirichlet_field(const ProblemSpec& spec, int comp) {
  std::vector<geo::BoundaryPiece> pieces;
  for (std::size_t i = 0; i < spec.domain.pieces().size(); ++i) {
    geo::BoundaryPiece p = spec.domain.pieces()[i];
    if (p.bc_kind != geo::BcKind::Dirichlet) continue;
    if (comp == 1) p.bc_value = spec.second_bc[i];
    pieces.push_back(std::move(p));
  }
  if (pieces.empty()) throw std::invalid_argument(spec.name + ": no Dirichlet boundary");
  return geo::DistanceField(std::move(pieces), spec.domain.join(), spec.domain.trimming());
}

Expr piece_data(const ProblemSpec& spec, int piece, int comp) {
  return comp == 0 ? spec.domain.pieces().at(piece).bc_value : spec.second_bc.at(piece);
}

/// Data on the closed Dirichlet set; used where blending is undefined.
double closed_boundary_value(const ProblemSpec& spec, geo::Point2 x, int comp) {
  if (spec.boundary_value) return spec.boundary_value(x).at(comp);
  const auto& pieces = spec.domain.pieces();
  int best = -1;
  double dmin = std::numeric_limits<double>::infinity();
  for (int i = 0; i < static_cast<int>(pieces.size()); ++i) {
    if (pieces[i].bc_kind != geo::BcKind::Dirichlet) continue;
    const double d = std::visit(
        [&](const auto& s) {
          if constexpr (std::is_same_v<std::decay_t<decltype(s)>, geo::Segment>) return geo::distance_to_segment(s, x);
          else return geo::distance_to_arc(s, x);
        },
        pieces[i].shape);
    if (d < dmin) {
      dmin = d;
      best = i;
    }
  }
  return piece_data(spec, best, comp)(x.x, x.y);
}

/// Maps channels of a two-seed jet onto a layout that may carry a third seed.
std::vector<int> channel_map(const JetLayout& from, const JetLayout& to) {
  std::vector<int> map(to.channels(), -1);
  for (int ch = 0; ch < to.channels(); ++ch) {
    const auto& s = to.seeds_of(ch);
    if (std::any_of(s.begin(), s.end(), [](int k) { return k >= 2; })) continue;
    for (int c2 = 0; c2 < from.channels(); ++c2)
      if (from.seeds_of(c2) == s) {
        map[ch] = c2;
        break;
      }
  }
  return map;
}

template <int K>
void store(const ad::Jet<2, K>& j, const std::vector<int>& map, MatrixXd& dst, Index p, Index n) {
  for (std::size_t ch = 0; ch < map.size(); ++ch) dst(0, static_cast<Index>(ch) * n + p) = map[ch] < 0 ? 0.0 : j[map[ch]];
}

template <int K>
void fill_geometry(const ProblemSpec& spec, const MatrixXd& pts, const JetLayout& L, MatrixXd& phi,
                   std::vector<MatrixXd>& gbar) {
  using J = ad::Jet<2, K>;
  const Index n = pts.cols();
  const auto map = channel_map(J::layout(), L);
  const geo::DistanceField phi_field = dirichlet_field(spec, 0);
  std::vector<geo::DistanceField> data;
  for (int c = 0; c < spec.components(); ++c) data.push_back(dirichlet_field(spec, c));
  phi = MatrixXd::Zero(1, L.channels() * n);
  gbar.assign(spec.components(), MatrixXd::Zero(1, L.channels() * n));
  for (Index p = 0; p < n; ++p) {
    const J x = J::variable(pts(0, p), 0), y = J::variable(pts(1, p), 1);
    store(phi_field.value<J>(x, y), map, phi, p, n);
    for (int c = 0; c < spec.components(); ++c) {
      J g;
      try {
        g = data[c].interpolant<J>(x, y);
      } catch (const geo::DegenerateWeights&) {
        g = J(closed_boundary_value(spec, {pts(0, p), pts(1, p)}, c));
      }
      store(g, map, gbar[c], p, n);
    }
  }
}

void fill_geometry_values(const ProblemSpec& spec, const MatrixXd& pts, MatrixXd& phi, std::vector<MatrixXd>& gbar) {
  const Index n = pts.cols();
  const geo::DistanceField phi_field = dirichlet_field(spec, 0);
  std::vector<geo::DistanceField> data;
  for (int c = 0; c < spec.components(); ++c) data.push_back(dirichlet_field(spec, c));
  phi = MatrixXd::Zero(1, n);
  gbar.assign(spec.components(), MatrixXd::Zero(1, n));
  for (Index p = 0; p < n; ++p) {
    const double x = pts(0, p), y = pts(1, p);
    phi(0, p) = phi_field.value<double>(x, y);
    for (int c = 0; c < spec.components(); ++c) {
      try {
        gbar[c](0, p) = data[c].interpolant<double>(x, y);
      } catch (const geo::DegenerateWeights&) {
        gbar[c](0, p) = closed_boundary_value(spec, {x, y}, c);
      }
    }
  }
}

MatrixXd plain(const MatrixXd& row) { return row; }

}  // namespace

TrialBatch::TrialBatch(const ProblemSpec& spec, Imposition imp, const MatrixXd& points, int order)
    : spec_(&spec), imp_(imp), points_(points), layout_(&ad::layout_for(spec.inputs(), order)) {
  if (points.rows() != spec.inputs()) throw std::invalid_argument("TrialBatch: point dimension mismatch");
  if (imp != Imposition::Hard) return;
  if (order == 0) fill_geometry_values(spec, points, phi_, gbar_);
  else if (order <= 2) fill_geometry<2>(spec, points, *layout_, phi_, gbar_);
  else fill_geometry<3>(spec, points, *layout_, phi_, gbar_);
}

std::vector<Var> TrialBatch::record(Tape& t, const Mlp& net) const {
  const Index n = points_.cols();
  Var out = net.record(t, t.seeded_input(points_, *layout_));
  const int outputs = net.config().outputs;
  std::vector<Var> res;
  Var phi;
  if (imp_ == Imposition::Hard) phi = t.constant(phi_, *layout_, n);
  for (int c = 0; c < outputs; ++c) {
    Var r = outputs == 1 ? out : t.row(out, c);
    if (imp_ == Imposition::Hard && c < spec_->components()) r = t.add(t.constant(gbar_[c], *layout_, n), t.mul(phi, r));
    res.push_back(r);
  }
  return res;
}

MatrixXd source_channels(const ProblemSpec& spec, const MatrixXd& points, const JetLayout& L) {
  const Index n = points.cols();
  MatrixXd out = MatrixXd::Zero(1, L.channels() * n);
  if (L.order() == 0) {
    for (Index p = 0; p < n; ++p) out(0, p) = spec.source(points(0, p), points(1, p));
    return out;
  }
  using J = ad::Jet<2, 3>;
  const auto map = channel_map(J::layout(), L);
  for (Index p = 0; p < n; ++p)
    store(spec.source(J::variable(points(0, p), 0), J::variable(points(1, p), 1)), map, out, p, n);
  return out;
}

// ---- residuals ------------------------------------------------------------------

Var mean_square(Tape& t, Var r) { return t.mean(t.mul(r, r)); }

Var poisson_residual(Tape& t, const std::vector<Var>& u, const JetLayout& L, const MatrixXd& f) {
  const Index n = t.points(u[0]);
  Var lap = t.add(t.channel(u[0], L.channel({0, 0})), t.channel(u[0], L.channel({1, 1})));
  return t.sub(t.scale(lap, -1.0), t.constant(plain(f.leftCols(n)), ad::layout_for(0, 0), n));
}

Var poisson_residual_derivative(Tape& t, const std::vector<Var>& u, const JetLayout& L, const MatrixXd& f, int k) {
  if (L.order() < 3) throw std::invalid_argument("gradient-enhanced residual needs third-order carriers");
  const Index n = t.points(u[0]);
  Var d = t.add(t.channel(u[0], L.channel({k, 0, 0})), t.channel(u[0], L.channel({k, 1, 1})));
  return t.sub(t.scale(d, -1.0), t.constant(plain(f.middleCols(L.channel({k}) * n, n)), ad::layout_for(0, 0), n));
}

Var divergence(Tape& t, const std::vector<Var>& uvp, const JetLayout& L) {
  if (uvp.size() < 2) throw std::invalid_argument("divergence: needs two velocity components");
  return t.add(t.channel(uvp[0], L.channel({0})), t.channel(uvp[1], L.channel({1})));
}

std::pair<Var, Var> momentum_residual(Tape& t, const std::vector<Var>& uvp, const JetLayout& L, Var nu, double rho,
                                      bool unsteady) {
  if (uvp.size() != 3) throw std::invalid_argument("momentum: network must output (u, v, p)");
  const Var u = t.channel(uvp[0], 0), v = t.channel(uvp[1], 0);
  auto comp = [&](int c) {
    const Var w = uvp[c];
    Var r = t.add(t.mul(u, t.channel(w, L.channel({0}))), t.mul(v, t.channel(w, L.channel({1}))));
    r = t.add(r, t.scale(t.channel(uvp[2], L.channel({c})), 1.0 / rho));
    const Var lap = t.add(t.channel(w, L.channel({0, 0})), t.channel(w, L.channel({1, 1})));
    r = t.sub(r, t.scale(lap, nu));
    if (unsteady) r = t.add(r, t.channel(w, L.channel({2})));
    return r;
  };
  return {comp(0), comp(1)};
}

// ---- sampling -----------------------------------------------------------------

Collocation sample_collocation(const ProblemSpec& spec, const TrainConfig& cfg) {
  std::mt19937_64 rng(cfg.sample_seed);
  std::uniform_real_distribution<double> time(spec.t0, spec.t1);
  const bool unsteady = spec.kind == PdeKind::UnsteadyNS;
  const int rows = spec.inputs();
  Collocation c;

  const auto interior = geo::sample_interior(spec.domain, cfg.n_pde, rng);
  c.pde.resize(rows, cfg.n_pde);
  for (int i = 0; i < cfg.n_pde; ++i) {
    c.pde(0, i) = interior[i].x;
    c.pde(1, i) = interior[i].y;
    if (unsteady) c.pde(2, i) = time(rng);
  }

  auto boundary = [&](geo::BcKind kind, int n, MatrixXd& pts, std::vector<int>& piece) {
    std::vector<int> ids;
    for (int i = 0; i < static_cast<int>(spec.domain.pieces().size()); ++i)
      if (spec.domain.pieces()[i].bc_kind == kind) ids.push_back(i);
    if (ids.empty()) {
      pts.resize(rows, 0);
      return;
    }
    const auto s = geo::sample_boundary(spec.domain, n, rng, ids);
    pts.resize(rows, static_cast<Index>(s.size()));
    for (std::size_t i = 0; i < s.size(); ++i) {
      pts(0, i) = s[i].x.x;
      pts(1, i) = s[i].x.y;
      if (unsteady) pts(2, i) = time(rng);
      piece.push_back(s[i].piece);
    }
  };
  boundary(geo::BcKind::Dirichlet, cfg.n_dbc, c.dirichlet, c.dirichlet_piece);
  boundary(geo::BcKind::Neumann, cfg.n_nbc, c.neumann, c.neumann_piece);
  return c;
}

MatrixXd evaluate_trial(const ProblemSpec& spec, const Mlp& net, Imposition imp, const MatrixXd& points) {
  const TrialBatch batch(spec, imp, points, 0);
  Tape t;
  const auto out = batch.record(t, net);
  MatrixXd values(out.size(), points.cols());
  for (std::size_t c = 0; c < out.size(); ++c) values.row(c) = t.value(out[c]).leftCols(points.cols());
  return values;
}

// ---- training loop ------------------------------------------------------------

namespace {

Var constant_row(Tape& t, const Eigen::RowVectorXd& v) {
  return t.constant(MatrixXd(v), ad::layout_for(0, 0), v.size());
}

/// Sum over components of the (optionally point-weighted) mean square.
Var weighted_mean_square(Tape& t, const std::vector<Var>& rs, Var weights, bool weighted) {
  std::vector<Var> terms;
  for (Var r : rs) {
    Var sq = t.mul(r, r);
    if (weighted) sq = t.mul(t.relu_square(weights), sq);
    terms.push_back(t.mean(sq));
  }
  return terms.size() == 1 ? terms[0] : t.weighted_sum(terms, std::vector<double>(terms.size(), 1.0));
}

double theta_norm(const VectorXd& g, Index n) { return g.head(n).norm(); }

}  // namespace

TrainResult train(const ProblemSpec& spec, const TrainConfig& cfg, const FieldSamples* reference,
                  const FieldSamples* data) {
  spec.validate();
  cfg.validate();
  using Kind = Extension::Kind;
  const bool hard = cfg.imposition == Imposition::Hard;
  const bool dyn = cfg.weighting == Weighting::DynNorm;
  const bool unsteady = spec.kind == PdeKind::UnsteadyNS;
  const bool sa = cfg.ext.kind == Kind::SaPinn;
  const int comps = spec.components();

  NetworkConfig nc = cfg.net;
  nc.inputs = spec.inputs();
  nc.outputs = spec.outputs();
  nc.llaaf = nc.llaaf || cfg.ext.kind == Kind::Llaaf;
  Mlp net(nc);
  ad::ParamVector& P = net.params();
  const Index n_theta = net.network_size();

  const Collocation col = sample_collocation(spec, cfg);
  if (data && (data->points.rows() != spec.inputs() || data->values.rows() < comps || data->size() == 0))
    throw std::invalid_argument("train: observations do not match the problem");
  if (reference && (reference->points.rows() != spec.inputs() || reference->values.rows() < comps))
    throw std::invalid_argument("train: reference does not match the problem");

  int kappa = -1;
  if (spec.flow() && spec.physics.learnable) {
    kappa = P.add_block("kappa", 1, 1);
    P.block(kappa)(0, 0) = spec.physics.kappa_init;
  }
  auto sa_block = [&](const std::string& name, Index n) {
    if (!sa || n == 0) return -1;
    const int b = P.add_block(name, 1, n);
    P.block(b).setOnes();
    return b;
  };
  const int sa_pde = sa_block("sa_pde", col.pde.cols());
  const int sa_dbc = hard ? -1 : sa_block("sa_dbc", col.dirichlet.cols());
  const int sa_nbc = sa_block("sa_nbc", col.neumann.cols());
  const int sa_data = data ? sa_block("sa_data", data->size()) : -1;

  Tape t;
  auto sa_var = [&](int b) { return b >= 0 ? t.param(P, b) : Var{}; };

  // PDE points
  const int pde_order = cfg.ext.kind == Kind::Gpinn ? 3 : (unsteady ? 2 : 2);
  const TrialBatch pde_batch(spec, cfg.imposition, col.pde, pde_order);
  const auto U = pde_batch.record(t, net);
  const JetLayout& L = pde_batch.layout();
  Var loss_pde, loss_div, loss_bc, loss_data, loss_extra;
  bool has_div = false, has_bc = false, has_data = false, has_extra = false;
  if (!spec.flow()) {
    const MatrixXd f = source_channels(spec, col.pde, L);
    loss_pde = weighted_mean_square(t, {poisson_residual(t, U, L, f)}, sa_var(sa_pde), sa_pde >= 0);
    if (cfg.ext.kind == Kind::Gpinn) {
      const Var g0 = mean_square(t, poisson_residual_derivative(t, U, L, f, 0));
      const Var g1 = mean_square(t, poisson_residual_derivative(t, U, L, f, 1));
      loss_extra = t.weighted_sum({g0, g1}, {cfg.ext.lambda_ge, cfg.ext.lambda_ge});
      has_extra = true;
    }
  } else {
    const Var nu = kappa >= 0 ? t.unary(ad::Unary::Exp, t.param(P, kappa))
                              : t.scalar_constant(spec.physics.viscosity(spec.kind));
    const auto [rx, ry] = momentum_residual(t, U, L, nu, spec.physics.rho, unsteady);
    loss_pde = weighted_mean_square(t, {rx, ry}, sa_var(sa_pde), sa_pde >= 0);
    loss_div = mean_square(t, divergence(t, U, L));
    has_div = true;
  }
  if (cfg.ext.kind == Kind::Llaaf) {
    const Var sr = t.scale(net.slope_recovery(t), cfg.ext.lambda_sr);
    loss_extra = has_extra ? t.add(loss_extra, sr) : sr;
    has_extra = true;
  }

  // Boundary terms
  std::vector<Var> bc_terms;
  const Index nd = col.dirichlet.cols();
  MatrixXd d_target(comps, nd);
  for (Index i = 0; i < nd; ++i)
    for (int c = 0; c < comps; ++c) d_target(c, i) = piece_data(spec, col.dirichlet_piece[i], c)(col.dirichlet(0, i), col.dirichlet(1, i));
  if (!hard && nd > 0) {
    const TrialBatch db(spec, cfg.imposition, col.dirichlet, 0);
    const auto Ud = db.record(t, net);
    std::vector<Var> rs;
    for (int c = 0; c < comps; ++c) rs.push_back(t.sub(t.channel(Ud[c], 0), constant_row(t, d_target.row(c))));
    bc_terms.push_back(weighted_mean_square(t, rs, sa_var(sa_dbc), sa_dbc >= 0));
  }
  const Index nn = col.neumann.cols();
  if (nn > 0) {
    const TrialBatch nb(spec, cfg.imposition, col.neumann, 1);
    const auto Un = nb.record(t, net);
    Eigen::RowVectorXd nx(nn), ny(nn);
    MatrixXd target(comps, nn);
    for (Index i = 0; i < nn; ++i) {
      const geo::Point2 x{col.neumann(0, i), col.neumann(1, i)};
      const geo::Vec2 g = spec.domain.gradient(x).g;
      const double len = std::hypot(g[0], g[1]);
      nx[i] = -g[0] / len;
      ny[i] = -g[1] / len;
      for (int c = 0; c < comps; ++c) target(c, i) = piece_data(spec, col.neumann_piece[i], c)(x.x, x.y);
    }
    const Var vnx = constant_row(t, nx), vny = constant_row(t, ny);
    const JetLayout& Ln = nb.layout();
    std::vector<Var> rs;
    for (int c = 0; c < comps; ++c) {
      const Var dn = t.add(t.mul(t.channel(Un[c], Ln.channel({0})), vnx), t.mul(t.channel(Un[c], Ln.channel({1})), vny));
      rs.push_back(t.sub(dn, constant_row(t, target.row(c))));
    }
    bc_terms.push_back(weighted_mean_square(t, rs, sa_var(sa_nbc), sa_nbc >= 0));
  }
  if (!bc_terms.empty()) {
    loss_bc = bc_terms.size() == 1 ? bc_terms[0] : t.add(bc_terms[0], bc_terms[1]);
    has_bc = true;
  }

  if (data) {
    const TrialBatch ob(spec, cfg.imposition, data->points, 0);
    const auto Uo = ob.record(t, net);
    std::vector<Var> rs;
    for (int c = 0; c < comps; ++c)
      rs.push_back(t.sub(t.channel(Uo[c], 0), constant_row(t, data->values.row(c))));
    loss_data = weighted_mean_square(t, rs, sa_var(sa_data), sa_data >= 0);
    has_data = true;
  }

  // Fixed-weight total (also used to report the decomposition).
  std::vector<Var> fixed_terms{loss_pde};
  std::vector<double> fixed_weights{1.0};
  if (has_bc) fixed_terms.push_back(loss_bc), fixed_weights.push_back(cfg.lambda_bc);
  if (has_data) fixed_terms.push_back(loss_data), fixed_weights.push_back(cfg.lambda_data);
  if (has_div) fixed_terms.push_back(loss_div), fixed_weights.push_back(cfg.lambda_div);
  if (has_extra) fixed_terms.push_back(loss_extra), fixed_weights.push_back(1.0);
  const Var total = t.weighted_sum(fixed_terms, fixed_weights);

  // Evaluation and monitoring tapes.
  Tape te;
  std::optional<TrialBatch> eval_batch;
  std::vector<Var> E;
  if (reference) {
    eval_batch.emplace(spec, cfg.imposition, reference->points, 0);
    E = eval_batch->record(te, net);
  }
  Tape tm;
  std::optional<TrialBatch> mon_batch;
  std::vector<Var> M;
  if (hard && nd > 0) {
    mon_batch.emplace(spec, cfg.imposition, col.dirichlet, 0);
    M = mon_batch->record(tm, net);
  }

  // Adaptive terms: data and divergence, plus the boundary term in soft mode.
  DynNormState dn_data{cfg.beta, cfg.bias_correction}, dn_div = dn_data, dn_bc = dn_data;
  double w_bc = cfg.lambda_bc, w_data = cfg.lambda_data, w_div = cfg.lambda_div;

  // Point weights are excluded from Adam and follow plain gradient ascent.
  VectorXd scale = VectorXd::Ones(P.size());
  const std::vector<int> sa_blocks{sa_pde, sa_dbc, sa_nbc, sa_data};
  for (int b : sa_blocks)
    if (b >= 0) scale.segment(P.info(b).offset, P.info(b).rows * P.info(b).cols).setZero();
  double sa_rate = cfg.ext.c_sa;

  AdamState adam;
  TrainResult result{{}, std::numeric_limits<double>::quiet_NaN(), 0.0, 0.0, Mlp(nc)};
  auto estimate = [&]() {
    const double nu = kappa >= 0 ? positivity(P.block(kappa)(0, 0)) : spec.physics.viscosity(spec.kind);
    if (spec.kind == PdeKind::SteadyNS) return 1.0 / nu;
    if (spec.kind == PdeKind::UnsteadyNS) return nu;
    return 0.0;
  };
  auto current_rel_l2 = [&]() {
    if (!reference) return std::numeric_limits<double>::quiet_NaN();
    te.replay();
    MatrixXd approx(comps, reference->size());
    for (int c = 0; c < comps; ++c) approx.row(c) = te.value(E[c]).leftCols(reference->size());
    return rel_l2(approx, reference->values.topRows(comps));
  };
  auto monitor = [&]() {
    if (M.empty()) return;
    tm.replay();
    for (int c = 0; c < comps; ++c)
      result.dirichlet_violation =
          std::max(result.dirichlet_violation, (tm.value(M[c]).leftCols(nd) - d_target.row(c)).cwiseAbs().maxCoeff());
  };

  auto value = [&](bool has, Var v) { return has ? t.scalar(v) : 0.0; };
  for (int it = 0; it <= cfg.iterations; ++it) {
    if (it > 0) t.replay();
    const double lp = t.scalar(loss_pde), lb = value(has_bc, loss_bc), ld = value(has_data, loss_data),
                 lv = value(has_div, loss_div), lx = value(has_extra, loss_extra);
    if (!std::isfinite(lp) || !std::isfinite(lb) || !std::isfinite(ld) || !std::isfinite(lv) || !std::isfinite(lx)) {
      std::ostringstream msg;
      msg << "non-finite loss at iteration " << it << ": pde=" << lp << " bc=" << lb << " data=" << ld
          << " div=" << lv << " extra=" << lx << " estimate=" << estimate();
      throw NumericalFailure(msg.str());
    }
    const bool rec = it % cfg.record_every == 0 || it == cfg.iterations;
    if (it == cfg.iterations) {
      monitor();
      result.rows.push_back({it, lp, lb, ld, lv, w_data, w_div, current_rel_l2(), estimate()});
      break;
    }

    VectorXd g;
    if (!dyn) {
      g = t.gradient(total, P);
    } else {
      g = t.gradient(loss_pde, P);
      const double npde = theta_norm(g, n_theta);
      auto adapt = [&](bool has, Var term, DynNormState& st, double& w) {
        if (!has) return;
        const VectorXd gk = t.gradient(term, P);
        dyn_norm_update(st, dyn_norm_raw(npde, theta_norm(gk, n_theta), st.n ? st.corrected : 1.0, &st.stagnant));
        w = st.corrected;
        g += w * gk;
      };
      adapt(has_data, loss_data, dn_data, w_data);
      adapt(has_div, loss_div, dn_div, w_div);
      if (has_bc) {
        if (hard) g += cfg.lambda_bc * t.gradient(loss_bc, P);
        else adapt(true, loss_bc, dn_bc, w_bc);
      }
      if (has_extra) g += t.gradient(loss_extra, P);
    }
    if (rec) {
      monitor();
      result.rows.push_back({it, lp, lb, ld, lv, w_data, w_div, current_rel_l2(), estimate()});
    }
    if (sa && cfg.ext.dagger && it == cfg.iterations / 2) sa_rate = 0.0;
    const double lr = decayed_lr(cfg.lr, cfg.decay_rate, cfg.decay_steps, it);
    adam_step(P.values(), g, adam, lr, scale);
    for (int b : sa_blocks) {
      if (b < 0) continue;
      const Index off = P.info(b).offset, len = P.info(b).rows * P.info(b).cols;
      P.values().segment(off, len) += sa_rate * lr * g.segment(off, len);
    }
  }

  result.rel_l2 = result.rows.back().rel_l2;
  result.param_estimate = result.rows.back().param_estimate;
  result.net.params().values() = P.values().head(n_theta);
  return result;
}

}  // namespace rfpinn
