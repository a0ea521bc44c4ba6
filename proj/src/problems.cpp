#include <numbers>

#include "rfpinn/training.hpp"

namespace rfpinn {

namespace {

constexpr double kPi = std::numbers::pi;

geo::Join join_of(int m) {
  if (m < 1) throw std::invalid_argument("normalization order must be >= 1");
  return {geo::JoinKind::Normalized, m};
}

// Annulus solution cos(2 pi c1 r) sin(c2 phi) with (c1, c2) = (1, 2).
Expr radius() { return sqrt(Expr::x() * Expr::x() + Expr::y() * Expr::y()); }
Expr sin_2phi() { return 2.0 * Expr::x() * Expr::y() / (Expr::x() * Expr::x() + Expr::y() * Expr::y()); }

ProblemSpec poisson_mixed(const std::string& id, const ProblemOptions& opt) {
  // bottom (Neumann), right, top, left
  auto pieces = geo::rectangle_pieces(0, 0, 1, 1);
  pieces[0].bc_kind = geo::BcKind::Neumann;
  pieces[0].bc_value = Expr(opt.neumann_value);
  pieces[2].bc_value = sin(kPi * Expr::x());
  ProblemSpec s;
  s.name = id;
  s.kind = PdeKind::Poisson;
  s.domain = geo::DistanceField(std::move(pieces), join_of(opt.m));
  s.source = sin(2.0 * kPi * (Expr::x() + Expr::y()));
  return s;
}

ProblemSpec flow_channel(const std::string& id, const ProblemOptions& opt, std::vector<geo::BoundaryPiece> obstacle) {
  // bottom wall, outlet, top wall, inlet
  auto pieces = geo::rectangle_pieces(0, 0, 4, 1);
  pieces[1].bc_kind = geo::BcKind::Neumann;
  pieces[3].bc_value = 4.0 * Expr::y() * (1.0 - Expr::y());
  pieces.insert(pieces.end(), obstacle.begin(), obstacle.end());
  ProblemSpec s;
  s.name = id;
  s.kind = PdeKind::UnsteadyNS;
  s.second_bc.assign(pieces.size(), Expr(0.0));
  s.domain = geo::DistanceField(std::move(pieces), join_of(opt.m));
  s.physics.nu = opt.nu;
  s.physics.rho = 1.0;
  s.physics.learnable = opt.learnable;
  s.t0 = 0.0;
  s.t1 = opt.t1;
  return s;
}

}  // namespace

ProblemSpec make_problem(const std::string& id, const ProblemOptions& opt) {
  if (id == "poisson_hmg") {
    ProblemOptions o = opt;
    o.neumann_value = 0.0;
    return poisson_mixed(id, o);
  }
  if (id == "poisson_inhmg") {
    ProblemOptions o = opt;
    if (o.neumann_value == 0.0) o.neumann_value = 0.1;
    return poisson_mixed(id, o);
  }
  if (id == "annulus") {
    geo::DomainParams dp;
    dp.join = join_of(opt.m);
    geo::DistanceField base = geo::build_named_domain("annulus", dp);
    auto pieces = base.pieces();
    pieces[0].bc_value = sin_2phi();   // r = 1: cos(2 pi) = 1
    pieces[1].bc_value = -sin_2phi();  // r = 0.5: cos(pi) = -1
    ProblemSpec s;
    s.name = id;
    s.kind = PdeKind::Poisson;
    s.domain = geo::DistanceField(std::move(pieces), dp.join);
    const Expr r = radius(), k = Expr(2.0 * kPi);
    s.source = k / r * sin(k * r) * sin_2phi() + (k * k + 4.0 / (r * r)) * cos(k * r) * sin_2phi();
    return s;
  }
  if (id == "cavity") {
    auto pieces = geo::rectangle_pieces(0, 0, 1, 1);
    pieces[2].bc_value = Expr(1.0);
    ProblemSpec s;
    s.name = id;
    s.kind = PdeKind::SteadyNS;
    s.second_bc.assign(pieces.size(), Expr(0.0));
    s.domain = geo::DistanceField(std::move(pieces), join_of(opt.m));
    s.physics.reynolds = opt.reynolds;
    s.physics.learnable = opt.learnable;
    // The lid owns its end points.
    s.boundary_value = [](geo::Point2 x) { return std::vector<double>{x.y >= 1.0 - 1e-12 ? 1.0 : 0.0, 0.0}; };
    return s;
  }
  if (id == "obstacle_square") return flow_channel(id, opt, geo::rectangle_pieces(0.9, 0.4, 1.1, 0.6, true));
  if (id == "obstacle_heart") return flow_channel(id, opt, geo::heart_pieces(opt.heart, true));
  throw std::invalid_argument("unknown problem '" + id + "'");
}

std::optional<Expr> exact_solution(const std::string& id) {
  if (id == "annulus") return cos(2.0 * kPi * radius()) * sin_2phi();
  return std::nullopt;
}

}  // namespace rfpinn
