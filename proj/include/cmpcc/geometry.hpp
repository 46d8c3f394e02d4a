#pragma once

#include <Eigen/Dense>
#include <vector>

namespace cmpcc {

using Vec2 = Eigen::Vector2d;

inline double cross2(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

/// Rotate a vector by +90 degrees (counter-clockwise).
inline Vec2 rot90(const Vec2& v) { return Vec2(-v.y(), v.x()); }

/// One cubic piece r(u) = a + b u + c u^2 + d u^3 on a local parameter
/// u in [0, knot_{i+1} - knot_i].
struct CurveSegment {
  Vec2 a, b, c, d;

  Vec2 eval(double u) const { return a + u * (b + u * (c + u * d)); }
  Vec2 deriv(double u) const { return b + u * (2.0 * c + u * 3.0 * d); }
  Vec2 deriv2(double u) const { return 2.0 * c + u * 6.0 * d; }
};

/// Piecewise-cubic planar curve with differential-geometry queries.
///
/// The parameter is nominal at construction; after reparameterize_arclength
/// it is arc length to within 1e-3 on the derivative norm. Queries outside
/// [0, total_length] clamp to the endpoints. Immutable after construction.
class PlanarCurve {
 public:
  PlanarCurve(std::vector<CurveSegment> segments, std::vector<double> knots);

  double total_length() const { return knots_.back(); }
  const std::vector<double>& knots() const { return knots_; }
  const std::vector<CurveSegment>& segments() const { return segments_; }

  Vec2 evaluate(double xi) const;
  Vec2 derivative(double xi) const;
  Vec2 second_derivative(double xi) const;

  /// Unit tangent t_r(xi).
  Vec2 tangent(double xi) const;
  /// Unit counter-clockwise normal, rot90(tangent).
  Vec2 normal(double xi) const;
  /// d(tangent)/dxi.
  Vec2 tangent_derivative(double xi) const;
  /// Signed curvature, positive when turning counter-clockwise.
  double curvature(double xi) const;
  /// Max |curvature| over a dense sample plus per-segment stationary points.
  double max_curvature() const;

 private:
  // Locates the segment index for a clamped parameter value.
  std::pair<int, double> locate(double xi) const;

  std::vector<CurveSegment> segments_;
  std::vector<double> knots_;  // size = segments + 1, strictly increasing, knots[0] = 0
};

/// Interpolating natural C2 cubic spline through the waypoints,
/// chord-length parameterized. Throws std::invalid_argument on fewer than
/// two waypoints or duplicate consecutive waypoints.
PlanarCurve fit_spline(const std::vector<Vec2>& waypoints);

/// Returns a curve with the same geometry whose parameter is arc length:
/// |dr/dxi| in [1 - 1e-3, 1 + 1e-3] everywhere and total_length within
/// tol * s of the numerically integrated length s of the input.
/// Throws std::runtime_error if the bisection lookup fails to converge.
PlanarCurve reparameterize_arclength(const PlanarCurve& curve, double tol = 1e-4);

/// Cuts the curve at parameter s_end (clamped to (0, total_length]).
PlanarCurve truncate_curve(const PlanarCurve& curve, double s_end);

/// Parameter of the point on the curve closest to p (grid search at
/// `step` followed by local refinement).
double closest_point_param(const PlanarCurve& curve, const Vec2& p, double step = 0.01);

/// Numerically integrated length of the curve (adaptive Simpson on |r'|).
double integrated_length(const PlanarCurve& curve, double tol = 1e-9);

}  // namespace cmpcc
