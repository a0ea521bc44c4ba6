#include "rfpinn/geometry.hpp"

#include <algorithm>
#include <iomanip>
#include <limits>
#include <ostream>

namespace rfpinn::geo {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

bool angle_in_arc(const Arc& a, double angle) {
  if (a.full()) return true;
  double d = std::fmod(angle - a.start_angle, kTwoPi);
  if (d < 0) d += kTwoPi;
  return d <= a.span() + 1e-14;
}

double dist(Point2 a, Point2 b) { return std::hypot(a.x - b.x, a.y - b.y); }

}  // namespace

void validate(const Segment& s) {
  if (!std::isfinite(s.p.x) || !std::isfinite(s.p.y) || !std::isfinite(s.q.x) || !std::isfinite(s.q.y))
    throw std::invalid_argument("segment endpoints must be finite");
  if (!(s.length() > 0.0)) throw std::invalid_argument("degenerate segment");
}

void validate(const Arc& a) {
  if (!(a.radius > 0.0) || !std::isfinite(a.radius)) throw std::invalid_argument("arc radius must be positive");
  if (!(a.span() > 0.0) || a.span() > kTwoPi + 1e-12) throw std::invalid_argument("arc angles must define a nonempty arc");
}

namespace detail {

std::vector<double> circle_series(double radius, int m) {
  std::vector<double> c(static_cast<std::size_t>(m) + 1, 0.0);
  double b = 1.0;      // binom(1/2, k)
  double rpow = 1.0;   // radius^(2k)
  for (int k = 1; k <= m; ++k) {
    b *= (0.5 - (k - 1)) / k;
    rpow *= radius * radius;
    const double a = (k % 2 == 0) ? -b : b;
    c[k] = radius * a / rpow;
  }
  return c;
}

}  // namespace detail

// ---- pieces ---------------------------------------------------------------

double BoundaryPiece::length() const {
  if (const auto* s = std::get_if<Segment>(&shape)) return s->length();
  return std::get<Arc>(shape).length();
}

Point2 BoundaryPiece::point_at(double u) const {
  if (const auto* s = std::get_if<Segment>(&shape))
    return {s->p.x + u * (s->q.x - s->p.x), s->p.y + u * (s->q.y - s->p.y)};
  const Arc& a = std::get<Arc>(shape);
  return a.at(a.start_angle + u * a.span());
}

Vec2 BoundaryPiece::inward_normal(Point2 x) const {
  if (const auto* s = std::get_if<Segment>(&shape)) {
    const double l = s->length();
    return {-(s->q.y - s->p.y) / l, (s->q.x - s->p.x) / l};
  }
  const Arc& a = std::get<Arc>(shape);
  const double r = std::hypot(x.x - a.center.x, x.y - a.center.y);
  Vec2 n{(x.x - a.center.x) / r, (x.y - a.center.y) / r};
  if (a.domain_inside) n = {-n[0], -n[1]};
  return n;
}

double distance_to_segment(const Segment& s, Point2 x) {
  const double dx = s.q.x - s.p.x, dy = s.q.y - s.p.y;
  double u = ((x.x - s.p.x) * dx + (x.y - s.p.y) * dy) / (dx * dx + dy * dy);
  u = std::clamp(u, 0.0, 1.0);
  return std::hypot(x.x - (s.p.x + u * dx), x.y - (s.p.y + u * dy));
}

double distance_to_arc(const Arc& a, Point2 x) {
  const double r = std::hypot(x.x - a.center.x, x.y - a.center.y);
  if (r > 0 && angle_in_arc(a, std::atan2(x.y - a.center.y, x.x - a.center.x))) return std::abs(r - a.radius);
  if (a.full()) return a.radius;
  return std::min(dist(x, a.at(a.start_angle)), dist(x, a.at(a.end_angle)));
}

// ---- distance field -------------------------------------------------------

DistanceField::DistanceField(std::vector<BoundaryPiece> pieces, Join join, Trimming trimming)
    : pieces_(std::move(pieces)), join_(join), trimming_(trimming) {
  if (pieces_.empty()) throw std::invalid_argument("distance field needs at least one piece");
  if (join_.kind == JoinKind::Normalized && join_.m < 1) throw std::invalid_argument("normalization order must be >= 1");
  for (const auto& p : pieces_) {
    if (p.mu < 1) throw std::invalid_argument("interpolation order mu must be >= 1");
    std::visit([](const auto& s) { validate(s); }, p.shape);
  }
}

DistanceField DistanceField::restricted(BcKind kind) const {
  std::vector<BoundaryPiece> sub;
  for (const auto& p : pieces_)
    if (p.bc_kind == kind) sub.push_back(p);
  if (sub.empty()) throw std::invalid_argument("no boundary pieces of the requested kind");
  return DistanceField(std::move(sub), join_, trimming_);
}

bool DistanceField::has(BcKind kind) const {
  return std::any_of(pieces_.begin(), pieces_.end(), [&](const auto& p) { return p.bc_kind == kind; });
}

GradientResult DistanceField::gradient(Point2 x) const {
  using J = ad::Jet<2, 1>;
  const std::vector<double> phi = piece_values<double>(x.x, x.y);
  // Points on curved pieces rarely land exactly on zero; treat round-off as on the piece.
  const BBox b = bbox();
  const double on_tol = 1e-13 * std::max({1.0, b.x1 - b.x0, b.y1 - b.y0});
  std::vector<int> zero;
  for (int i = 0; i < static_cast<int>(phi.size()); ++i)
    if (std::abs(phi[i]) <= on_tol) zero.push_back(i);

  if (zero.empty() || join_.kind == JoinKind::Naive) {
    const J v = value(J::variable(x.x, 0), J::variable(x.y, 1));
    return {{v.d(0), v.d(1)}, zero.size() >= 2};
  }
  // One-sided limits from the domain side, averaged at corners.
  GradientResult r;
  for (int k : zero) {
    const Vec2 n = pieces_[k].inward_normal(x);
    double f = 1.0;
    if (join_.kind == JoinKind::NonNormalized)
      for (int j = 0; j < static_cast<int>(phi.size()); ++j)
        if (j != k) f *= phi[j];
    r.g[0] += f * n[0] / zero.size();
    r.g[1] += f * n[1] / zero.size();
  }
  r.flagged = zero.size() >= 2;
  return r;
}

LaplacianResult DistanceField::laplacian(Point2 x) const {
  if (join_.kind != JoinKind::Naive) {
    const std::vector<double> phi = piece_values<double>(x.x, x.y);
    if (std::any_of(phi.begin(), phi.end(), [](double v) { return v == 0.0; }))
      return {std::numeric_limits<double>::quiet_NaN(), true};
  }
  const ad::Jet2 v = value(ad::Jet2::variable(x.x, 0), ad::Jet2::variable(x.y, 1));
  return {v.laplacian(), false};
}

double DistanceField::edf(Point2 x) const {
  double d = std::numeric_limits<double>::infinity();
  for (const auto& p : pieces_) {
    if (const auto* s = std::get_if<Segment>(&p.shape)) d = std::min(d, distance_to_segment(*s, x));
    else d = std::min(d, distance_to_arc(std::get<Arc>(p.shape), x));
  }
  return d;
}

bool DistanceField::contains(Point2 x) const {
  // Crossing parity of the ray from x towards +infinity in x.
  bool inside = false;
  for (const auto& p : pieces_) {
    if (const auto* s = std::get_if<Segment>(&p.shape)) {
      if ((s->p.y > x.y) != (s->q.y > x.y)) {
        const double xi = s->p.x + (x.y - s->p.y) * (s->q.x - s->p.x) / (s->q.y - s->p.y);
        if (xi > x.x) inside = !inside;
      }
      continue;
    }
    const Arc& a = std::get<Arc>(p.shape);
    const double dy = x.y - a.center.y;
    if (std::abs(dy) >= a.radius) continue;
    const double h = std::sqrt(a.radius * a.radius - dy * dy);
    for (double xi : {a.center.x - h, a.center.x + h})
      if (xi > x.x && angle_in_arc(a, std::atan2(dy, xi - a.center.x))) inside = !inside;
  }
  return inside;
}

BBox DistanceField::bbox() const {
  BBox b{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
         -std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  auto add = [&](Point2 p) {
    b.x0 = std::min(b.x0, p.x);
    b.y0 = std::min(b.y0, p.y);
    b.x1 = std::max(b.x1, p.x);
    b.y1 = std::max(b.y1, p.y);
  };
  for (const auto& p : pieces_) {
    if (const auto* s = std::get_if<Segment>(&p.shape)) {
      add(s->p);
      add(s->q);
      continue;
    }
    const Arc& a = std::get<Arc>(p.shape);
    add(a.at(a.start_angle));
    add(a.at(a.end_angle));
    for (int k = 0; k < 4; ++k) {
      const double ang = k * 0.5 * std::numbers::pi;
      if (angle_in_arc(a, ang)) add(a.at(ang));
    }
  }
  return b;
}

double DistanceField::perimeter() const {
  double s = 0.0;
  for (const auto& p : pieces_) s += p.length();
  return s;
}

// ---- named domains --------------------------------------------------------

namespace {

BoundaryPiece seg(Point2 p, Point2 q) { return BoundaryPiece{Segment{p, q}, BcKind::Dirichlet, Expr(0.0), 1}; }

std::vector<BoundaryPiece> polygon(const std::vector<Point2>& v, bool hole) {
  std::vector<BoundaryPiece> out;
  const std::size_t n = v.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (hole) out.push_back(seg(v[(n - i) % n], v[n - 1 - i]));
    else out.push_back(seg(v[i], v[(i + 1) % n]));
  }
  return out;
}

struct HeartGeometry {
  Point2 tip, tangent_left, tangent_right;
  Arc right, left;
};

HeartGeometry heart_geometry(const HeartParams& hp) {
  const double a = hp.lobe_offset, r = hp.lobe_radius, h = hp.tip_depth;
  if (!(r > a) || !(a > 0) || !(h > 0) || !(hp.scale > 0) || !(std::hypot(a, h) > r))
    throw std::invalid_argument("heart: need 0 < offset < radius and the tip outside both lobes");
  auto tangent = [&](double cx, bool take_right) {
    const double vx = -cx, vy = -h;
    const double d = std::hypot(vx, vy);
    const double alpha = std::acos(r / d);
    const double base = std::atan2(vy, vx);
    const Point2 t1{cx + r * std::cos(base + alpha), r * std::sin(base + alpha)};
    const Point2 t2{cx + r * std::cos(base - alpha), r * std::sin(base - alpha)};
    return (t1.x > t2.x) == take_right ? t1 : t2;
  };
  const Point2 dip{0.0, std::sqrt(r * r - a * a)};
  const Point2 tr = tangent(a, true), tl = tangent(-a, false);

  auto place = [&](Point2 p) { return Point2{hp.center.x + hp.scale * p.x, hp.center.y + hp.scale * p.y}; };
  HeartGeometry g;
  g.tip = place({0.0, -h});
  g.tangent_right = place(tr);
  g.tangent_left = place(tl);

  double s0 = std::atan2(tr.y, tr.x - a), s1 = std::atan2(dip.y, dip.x - a);
  if (s1 <= s0) s1 += kTwoPi;
  g.right = Arc{place({a, 0.0}), r * hp.scale, s0, s1, true};
  double l0 = std::atan2(dip.y, dip.x + a), l1 = std::atan2(tl.y, tl.x + a);
  if (l1 <= l0) l1 += kTwoPi;
  g.left = Arc{place({-a, 0.0}), r * hp.scale, l0, l1, true};
  return g;
}

double enclosed_area(const std::vector<BoundaryPiece>& pieces) {
  double area = 0.0;
  for (const auto& p : pieces) {
    if (const auto* s = std::get_if<Segment>(&p.shape)) {
      area += 0.5 * (s->p.x * s->q.y - s->q.x * s->p.y);
      continue;
    }
    const Arc& a = std::get<Arc>(p.shape);
    const double t0 = a.start_angle, t1 = a.end_angle, r = a.radius;
    area += 0.5 * (r * a.center.x * (std::sin(t1) - std::sin(t0)) - r * a.center.y * (std::cos(t1) - std::cos(t0)) +
                   r * r * (t1 - t0));
  }
  return area;
}

}  // namespace

std::vector<BoundaryPiece> rectangle_pieces(double x0, double y0, double x1, double y1, bool hole) {
  if (!(x1 > x0) || !(y1 > y0)) throw std::invalid_argument("rectangle: empty extent");
  return polygon({{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}}, hole);
}

std::vector<BoundaryPiece> heart_pieces(const HeartParams& hp, bool hole) {
  const HeartGeometry g = heart_geometry(hp);
  Arc right = g.right, left = g.left;
  right.domain_inside = left.domain_inside = !hole;
  auto arc = [](const Arc& a) { return BoundaryPiece{a, BcKind::Dirichlet, Expr(0.0), 1}; };
  if (!hole) return {seg(g.tip, g.tangent_right), arc(right), arc(left), seg(g.tangent_left, g.tip)};
  return {seg(g.tip, g.tangent_left), arc(left), arc(right), seg(g.tangent_right, g.tip)};
}

double heart_area(const HeartParams& hp) { return enclosed_area(heart_pieces(hp, false)); }

DistanceField build_named_domain(const std::string& name, const DomainParams& prm) {
  std::vector<BoundaryPiece> pieces;
  if (name == "square") {
    pieces = rectangle_pieces(prm.x0, prm.y0, prm.x1, prm.y1);
  } else if (name == "l_shape") {
    const double xm = 0.5 * (prm.x0 + prm.x1), ym = 0.5 * (prm.y0 + prm.y1);
    pieces = polygon({{prm.x0, prm.y0}, {prm.x1, prm.y0}, {prm.x1, ym}, {xm, ym}, {xm, prm.y1}, {prm.x0, prm.y1}}, false);
  } else if (name == "heart") {
    pieces = heart_pieces(prm.heart, false);
  } else if (name == "annulus") {
    if (!(prm.r_outer > prm.r_inner) || !(prm.r_inner > 0)) throw std::invalid_argument("annulus: need 0 < r_inner < r_outer");
    const Arc outer{prm.annulus_center, prm.r_outer, 0.0, kTwoPi, true};
    const Arc inner{prm.annulus_center, prm.r_inner, 0.0, kTwoPi, false};
    pieces = {BoundaryPiece{outer, BcKind::Dirichlet, Expr(0.0), 1}, BoundaryPiece{inner, BcKind::Dirichlet, Expr(0.0), 1}};
  } else if (name == "rect_with_obstacle") {
    pieces = rectangle_pieces(prm.x0, prm.y0, prm.x1, prm.y1);
    std::vector<BoundaryPiece> obstacle;
    if (prm.obstacle == "square") {
      const double h = 0.5 * prm.obstacle_size;
      const Point2 c = prm.obstacle_center;
      obstacle = rectangle_pieces(c.x - h, c.y - h, c.x + h, c.y + h, true);
    } else if (prm.obstacle == "heart") {
      obstacle = heart_pieces(prm.heart, true);
    } else {
      throw std::invalid_argument("unknown obstacle: " + prm.obstacle);
    }
    pieces.insert(pieces.end(), obstacle.begin(), obstacle.end());
  } else {
    throw std::invalid_argument("unknown domain: " + name);
  }
  return DistanceField(std::move(pieces), prm.join, prm.trimming);
}

// ---- sampling ---------------------------------------------------------------

std::vector<BoundarySample> sample_boundary(const DistanceField& df, int n, std::mt19937_64& rng,
                                            const std::vector<int>& which) {
  std::vector<int> ids = which;
  if (ids.empty())
    for (int i = 0; i < static_cast<int>(df.pieces().size()); ++i) ids.push_back(i);
  double total = 0.0;
  for (int i : ids) total += df.pieces().at(i).length();

  // Largest-remainder allocation proportional to length.
  std::vector<int> count(ids.size());
  std::vector<std::pair<double, std::size_t>> rem;
  int used = 0;
  for (std::size_t k = 0; k < ids.size(); ++k) {
    const double exact = n * df.pieces()[ids[k]].length() / total;
    count[k] = static_cast<int>(std::floor(exact));
    used += count[k];
    rem.push_back({exact - count[k], k});
  }
  std::stable_sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (int i = 0; i < n - used; ++i) ++count[rem[i].second];

  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<BoundarySample> out;
  out.reserve(n);
  for (std::size_t k = 0; k < ids.size(); ++k)
    for (int j = 0; j < count[k]; ++j) out.push_back({df.pieces()[ids[k]].point_at(u(rng)), ids[k]});
  return out;
}

std::vector<Point2> sample_interior(const DistanceField& df, int n, std::mt19937_64& rng, double* acceptance) {
  const BBox b = df.bbox();
  std::uniform_real_distribution<double> ux(b.x0, b.x1), uy(b.y0, b.y1);
  std::vector<Point2> out;
  out.reserve(n);
  long long tries = 0;
  while (static_cast<int>(out.size()) < n) {
    ++tries;
    const Point2 p{ux(rng), uy(rng)};
    if (df.contains(p)) out.push_back(p);
    if (tries > 10000 && static_cast<double>(out.size()) / tries < 1e-3)
      throw std::invalid_argument("interior sampling acceptance rate below 1e-3");
  }
  if (acceptance) *acceptance = static_cast<double>(n) / tries;
  return out;
}

// ---- export -----------------------------------------------------------------

namespace {

void write_row(const DistanceField& df, Point2 p, FieldKind kind, bool derivs, std::ostream& out) {
  if (kind == FieldKind::Edf) {
    out << df.edf(p);
    if (derivs) out << ",,,";
    return;
  }
  out << df.value(p);
  if (!derivs) return;
  const GradientResult g = df.gradient(p);
  const LaplacianResult l = df.laplacian(p);
  out << ',' << g.g[0] << ',' << g.g[1] << ',' << l.value;
}

}  // namespace

void write_raster(const DistanceField& df, const RasterSpec& spec, std::ostream& out, FieldKind kind) {
  if (spec.nx < 2 || spec.ny < 2) throw std::invalid_argument("raster needs at least 2x2 nodes");
  const BBox b = spec.box.value_or(df.bbox());
  out << std::setprecision(17) << (spec.derivatives ? "x,y,value,gx,gy,lap\n" : "x,y,value\n");
  for (int j = 0; j < spec.ny; ++j)
    for (int i = 0; i < spec.nx; ++i) {
      const Point2 p{b.x0 + (b.x1 - b.x0) * i / (spec.nx - 1), b.y0 + (b.y1 - b.y0) * j / (spec.ny - 1)};
      out << p.x << ',' << p.y << ',';
      write_row(df, p, kind, spec.derivatives, out);
      out << '\n';
    }
}

void write_slice(const DistanceField& df, double y, int n, double x0, double x1, std::ostream& out, FieldKind kind,
                 bool derivatives) {
  if (n < 2) throw std::invalid_argument("slice needs at least 2 samples");
  out << std::setprecision(17) << (derivatives ? "x,value,gx,gy,lap\n" : "x,value\n");
  for (int i = 0; i < n; ++i) {
    const Point2 p{x0 + (x1 - x0) * i / (n - 1), y};
    out << p.x << ',';
    write_row(df, p, kind, derivatives, out);
    out << '\n';
  }
}

}  // namespace rfpinn::geo
