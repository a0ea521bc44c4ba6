#pragma once
/**
 * @file geometry.hpp
 * @brief Approximate distance fields to piecewise boundaries built with
 *        R-functions, plus transfinite interpolation of boundary data.
 *
 * All field evaluations are templated on the scalar type so the same code
 * produces plain values (double, long double) and Taylor carriers (Jet).
 *
 * Orientation: outer boundaries are listed counterclockwise and hole
 * boundaries clockwise, so the left normal of every segment points into the
 * domain. Arcs always run counterclockwise from start_angle to end_angle and
 * say explicitly on which side of their circle the domain lies.
 */

#include <array>
#include <cmath>
#include <iosfwd>
#include <numbers>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "rfpinn/expr.hpp"
#include "rfpinn/jet.hpp"

namespace rfpinn::geo {

using Vec2 = std::array<double, 2>;

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

struct Segment {
  Point2 p, q;
  double length() const { return std::hypot(q.x - p.x, q.y - p.y); }
};

struct Arc {
  Point2 center;
  double radius = 1.0;
  double start_angle = 0.0;
  double end_angle = 2.0 * std::numbers::pi;
  /// True when the domain lies inside the circle near the arc.
  bool domain_inside = true;

  double span() const { return end_angle - start_angle; }
  bool full() const { return span() >= 2.0 * std::numbers::pi - 1e-12; }
  double length() const { return radius * span(); }
  Point2 at(double angle) const { return {center.x + radius * std::cos(angle), center.y + radius * std::sin(angle)}; }
};

enum class BcKind { Dirichlet, Neumann };

struct BoundaryPiece {
  std::variant<Segment, Arc> shape;
  BcKind bc_kind = BcKind::Dirichlet;
  Expr bc_value = Expr(0.0);
  int mu = 1;

  double length() const;
  Point2 point_at(double u) const;  // u in [0, 1] along the piece
  Vec2 inward_normal(Point2 x) const;
};

enum class JoinKind { Naive, NonNormalized, Normalized };

struct Join {
  JoinKind kind = JoinKind::Normalized;
  int m = 1;
};

enum class Trimming { Squared, Verbatim };

/// Thrown when every weight denominator vanishes (a point shared by all pieces).
struct DegenerateWeights : std::domain_error {
  using std::domain_error::domain_error;
};

inline constexpr double kGuard = 1e-12;

void validate(const Segment& s);
void validate(const Arc& a);

// ---- scalar helpers -------------------------------------------------------

namespace detail {

template <typename S>
double val(const S& s) {
  if constexpr (std::is_arithmetic_v<S>) return static_cast<double>(s);
  else return s.value();
}

template <typename S>
S ipow(S b, int n) {
  S r(1.0);
  while (n > 0) {
    if (n & 1) r = r * b;
    n >>= 1;
    if (n) b = b * b;
  }
  return r;
}

template <typename S>
S sq(const S& a) {
  return a * a;
}

template <typename S>
S root(const S& a) {
  using std::sqrt;
  using ad::sqrt;
  return sqrt(a);
}

template <typename S>
S ex(const S& a) {
  using std::exp;
  using ad::exp;
  return exp(a);
}

template <typename S>
S ln(const S& a) {
  using std::log;
  using ad::log;
  return log(a);
}

/// Coefficients of R - sqrt(R^2 - w) as a power series in w, up to w^m.
std::vector<double> circle_series(double radius, int m);

}  // namespace detail

// ---- primitives -----------------------------------------------------------

/// Line function of the segment: inward-normal offset divided by the length.
template <typename S>
S signed_distance(const Segment& seg, const S& x, const S& y) {
  const double dx = seg.q.x - seg.p.x, dy = seg.q.y - seg.p.y;
  const double l2 = dx * dx + dy * dy;
  if (!(l2 > 0.0)) throw std::invalid_argument("degenerate segment");
  return ((x - seg.p.x) * (-dy) + (y - seg.p.y) * dx) * (1.0 / l2);
}

template <typename S>
S trimming(const Segment& seg, const S& x, const S& y, Trimming mode = Trimming::Squared) {
  const double l = seg.length();
  if (!(l > 0.0)) throw std::invalid_argument("degenerate segment");
  const double mx = 0.5 * (seg.p.x + seg.q.x), my = 0.5 * (seg.p.y + seg.q.y);
  const S r2 = detail::sq(S(x - mx)) + detail::sq(S(y - my));
  if (mode == Trimming::Verbatim) return (0.25 * l * l - detail::root(r2)) * (1.0 / l);
  return (0.25 * l * l - r2) * (1.0 / l);
}

/// Smooth trimmed distance sqrt(s^2 + ((sqrt(s^4 + t^2) - t) / 2)^2).
template <typename S>
S trimmed_adf(const S& s, const S& t) {
  const S s2 = s * s;
  const S rho = detail::root(s2 * s2 + t * t);
  const S b = (rho - t) * 0.5;
  return detail::root(s2 + b * b);
}

/// Segment ADF; the line function is scaled back to a true distance so the
/// inward normal derivative is one on segments of any length.
template <typename S>
S adf_segment(const Segment& seg, const S& x, const S& y, Trimming mode = Trimming::Squared) {
  const S s = signed_distance(seg, x, y) * seg.length();
  return trimmed_adf(s, trimming(seg, x, y, mode));
}

/// Circle function, positive on the domain side. Order 1 is (R^2 - r^2)/(2R);
/// higher orders match the exact distance to that many normal derivatives.
template <typename S>
S circle_function(const Arc& arc, const S& x, const S& y, int order) {
  const double r = arc.radius;
  const S q = detail::sq(S(x - arc.center.x)) + detail::sq(S(y - arc.center.y));
  if (order <= 1) {
    const S s = (r * r - q) * (0.5 / r);
    return arc.domain_inside ? s : -s;
  }
  if (!arc.domain_inside) return detail::root(q) - r;
  const std::vector<double> c = detail::circle_series(r, order);
  const S w = r * r - q;
  S acc(c.back());
  for (int k = static_cast<int>(c.size()) - 2; k >= 1; --k) acc = acc * w + c[k];
  return acc * w;
}

/// Signed distance to the chord through the arc endpoints, positive on the arc side.
template <typename S>
S arc_trimming(const Arc& arc, const S& x, const S& y) {
  const Point2 a = arc.at(arc.start_angle), b = arc.at(arc.end_angle);
  const Point2 mid = arc.at(0.5 * (arc.start_angle + arc.end_angle));
  double nx = -(b.y - a.y), ny = b.x - a.x;
  const double nn = std::hypot(nx, ny);
  nx /= nn;
  ny /= nn;
  if (nx * (mid.x - a.x) + ny * (mid.y - a.y) < 0) {
    nx = -nx;
    ny = -ny;
  }
  return (x - a.x) * nx + (y - a.y) * ny;
}

template <typename S>
S adf_arc(const Arc& arc, const S& x, const S& y, int order) {
  const S s = circle_function(arc, x, y, order);
  if (arc.full()) return s;
  return trimmed_adf(s, arc_trimming(arc, x, y));
}

template <typename S>
S piece_adf(const BoundaryPiece& p, const S& x, const S& y, int order, Trimming mode) {
  if (const auto* seg = std::get_if<Segment>(&p.shape)) return adf_segment(*seg, x, y, mode);
  return adf_arc(std::get<Arc>(p.shape), x, y, order);
}

/// Untrimmed signed function used by the naive product join.
template <typename S>
S piece_sdf(const BoundaryPiece& p, const S& x, const S& y) {
  if (const auto* seg = std::get_if<Segment>(&p.shape)) return signed_distance(*seg, x, y);
  return circle_function(std::get<Arc>(p.shape), x, y, 1);
}

// ---- joins ----------------------------------------------------------------

template <typename S>
S join_normalized(const std::vector<S>& phi, int m) {
  if (phi.empty()) throw std::invalid_argument("join_normalized: empty list");
  if (m < 1) throw std::invalid_argument("join_normalized: m must be positive");
  std::size_t k = 0;
  for (std::size_t i = 0; i < phi.size(); ++i) {
    if (detail::val(phi[i]) <= 0.0) return S(0.0);
    if (detail::val(phi[i]) < detail::val(phi[k])) k = i;
  }
  if (phi.size() == 1) return phi[0];
  // Factor out the smallest value so the powers cannot overflow.
  S sum(0.0);
  for (std::size_t i = 0; i < phi.size(); ++i)
    sum = sum + (i == k ? S(1.0) : detail::ipow(S(phi[k] / phi[i]), m));
  if (m == 1) return phi[k] / sum;
  return phi[k] * detail::ex(detail::ln(sum) * (-1.0 / m));
}

template <typename S>
S join_naive(const std::vector<S>& s) {
  if (s.empty()) throw std::invalid_argument("join_naive: empty list");
  S r = s[0];
  for (std::size_t i = 1; i < s.size(); ++i) r = r * s[i];
  return r;
}

template <typename S>
S join_non_normalized(const std::vector<S>& phi) {
  if (phi.empty()) throw std::invalid_argument("join_non_normalized: empty list");
  return join_naive(phi);
}

/// Product-form inverse-distance weights; they sum to one and are finite on pieces.
template <typename S>
std::vector<S> transfinite_weights(const std::vector<S>& phi, const std::vector<int>& mu) {
  if (phi.empty() || phi.size() != mu.size()) throw std::invalid_argument("transfinite_weights: size mismatch");
  const std::size_t n = phi.size();
  std::vector<S> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = detail::ipow(phi[i], mu[i]);
  std::vector<S> num(n, S(1.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) num[i] = num[i] * p[j];
  S den(0.0);
  for (const S& v : num) den = den + v;
  if (std::abs(detail::val(den)) < 1e-300) throw DegenerateWeights("transfinite weights are degenerate here");
  for (S& v : num) v = v / den;
  return num;
}

// ---- distance field -------------------------------------------------------

struct GradientResult {
  Vec2 g{0.0, 0.0};
  bool flagged = false;  // corner: average of one-sided limits
};

struct LaplacianResult {
  double value = 0.0;
  bool flagged = false;
};

struct BBox {
  double x0, y0, x1, y1;
};

class DistanceField {
 public:
  DistanceField(std::vector<BoundaryPiece> pieces, Join join, Trimming trimming = Trimming::Squared);

  const std::vector<BoundaryPiece>& pieces() const { return pieces_; }
  const Join& join() const { return join_; }
  Trimming trimming() const { return trimming_; }

  /// Same geometry with another join.
  DistanceField with_join(Join j) const { return DistanceField(pieces_, j, trimming_); }
  /// Sub-field over the pieces of one boundary-condition kind (same join).
  DistanceField restricted(BcKind kind) const;
  bool has(BcKind kind) const;

  /// Order used for the individual circle functions.
  int piece_order() const { return join_.kind == JoinKind::Normalized ? join_.m : 1; }

  template <typename S>
  S value(const S& x, const S& y) const {
    std::vector<S> v;
    v.reserve(pieces_.size());
    if (join_.kind == JoinKind::Naive) {
      for (const auto& p : pieces_) v.push_back(piece_sdf(p, x, y));
      return join_naive(v);
    }
    for (const auto& p : pieces_) v.push_back(piece_adf(p, x, y, piece_order(), trimming_));
    if (join_.kind == JoinKind::NonNormalized) return join_non_normalized(v);
    return join_normalized(v, join_.m);
  }

  /// Per-piece ADF values.
  template <typename S>
  std::vector<S> piece_values(const S& x, const S& y) const {
    std::vector<S> v;
    v.reserve(pieces_.size());
    for (const auto& p : pieces_) v.push_back(piece_adf(p, x, y, piece_order(), trimming_));
    return v;
  }

  /// Blend of the pieces' boundary data with transfinite weights.
  template <typename S>
  S interpolant(const S& x, const S& y) const {
    if (pieces_.size() == 1) return pieces_[0].bc_value(x, y);
    std::vector<int> mu;
    for (const auto& p : pieces_) mu.push_back(p.mu);
    const std::vector<S> w = transfinite_weights(piece_values(x, y), mu);
    S acc(0.0);
    for (std::size_t i = 0; i < pieces_.size(); ++i) acc = acc + w[i] * pieces_[i].bc_value(x, y);
    return acc;
  }

  double value(Point2 x) const { return value<double>(x.x, x.y); }
  GradientResult gradient(Point2 x) const;
  LaplacianResult laplacian(Point2 x) const;
  double edf(Point2 x) const;
  bool contains(Point2 x) const;
  BBox bbox() const;
  double perimeter() const;

 private:
  std::vector<BoundaryPiece> pieces_;
  Join join_;
  Trimming trimming_;
};

inline double field_value(const DistanceField& df, Point2 x) { return df.value(x); }
inline GradientResult field_gradient(const DistanceField& df, Point2 x) { return df.gradient(x); }
inline LaplacianResult field_laplacian(const DistanceField& df, Point2 x) { return df.laplacian(x); }
inline double edf(const DistanceField& df, Point2 x) { return df.edf(x); }

double distance_to_segment(const Segment& s, Point2 x);
double distance_to_arc(const Arc& a, Point2 x);

// ---- named domains --------------------------------------------------------

struct HeartParams {
  double lobe_offset = 0.5;   // circle centers at (+-offset, 0)
  double lobe_radius = 0.7;
  double tip_depth = 1.3;     // cusp at (0, -depth)
  Point2 center{0.0, 0.0};
  double scale = 1.0;
};

struct DomainParams {
  // square and rectangles
  double x0 = 0.0, y0 = 0.0, x1 = 1.0, y1 = 1.0;
  // annulus
  Point2 annulus_center{0.0, 0.0};
  double r_inner = 0.5, r_outer = 1.0;
  // obstacle inside a rectangle: "square" or "heart"
  std::string obstacle = "square";
  Point2 obstacle_center{0.5, 0.5};
  double obstacle_size = 0.2;  // square side
  HeartParams heart;
  Join join{JoinKind::Normalized, 1};
  Trimming trimming = Trimming::Squared;
};

/// square | l_shape | heart | annulus | rect_with_obstacle
DistanceField build_named_domain(const std::string& name, const DomainParams& params = {});

std::vector<BoundaryPiece> rectangle_pieces(double x0, double y0, double x1, double y1, bool hole = false);
std::vector<BoundaryPiece> heart_pieces(const HeartParams& hp, bool hole = false);
/// Area enclosed by the heart outline (exact).
double heart_area(const HeartParams& hp);

// ---- sampling and export --------------------------------------------------

struct BoundarySample {
  Point2 x;
  int piece;
};

/// n points on the chosen pieces (all when empty), allocated proportionally to length.
std::vector<BoundarySample> sample_boundary(const DistanceField& df, int n, std::mt19937_64& rng,
                                            const std::vector<int>& pieces = {});

/// n uniform interior points by rejection from the bounding box.
std::vector<Point2> sample_interior(const DistanceField& df, int n, std::mt19937_64& rng,
                                    double* acceptance = nullptr);

enum class FieldKind { Adf, Edf };

struct RasterSpec {
  int nx = 101, ny = 101;
  std::optional<BBox> box;
  bool derivatives = false;
};

void write_raster(const DistanceField& df, const RasterSpec& spec, std::ostream& out, FieldKind kind = FieldKind::Adf);
void write_slice(const DistanceField& df, double y, int n, double x0, double x1, std::ostream& out,
                 FieldKind kind = FieldKind::Adf, bool derivatives = false);

}  // namespace rfpinn::geo
