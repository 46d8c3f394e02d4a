#pragma once

#include <Eigen/Dense>
#include <functional>
#include <iosfwd>
#include <vector>

#include "cmpcc/geometry.hpp"
#include "cmpcc/world.hpp"

namespace cmpcc {

/// Free-space corridor around a reference curve: two polynomial offset
/// widths over an arc-length interval. Widths evaluate floored at zero and
/// with the parameter clamped into the interval. Coefficients are stored in
/// the shifted variable u = xi - xi_start for conditioning. Immutable after
/// the fit.
struct Corridor {
  Eigen::VectorXd coeff_upper;  // degree D polynomial, m per m^j
  Eigen::VectorXd coeff_lower;
  double xi_start = 0.0;
  double xi_end = 0.0;
  double step = 0.0;  // sample spacing
  std::vector<double> sample_xi;
  std::vector<double> samples_upper;  // raw raycast distances
  std::vector<double> samples_lower;
  bool origin_blocked = false;  // some curve point sat inside an obstacle
  bool degenerate = false;      // corridor collapsed to zero width everywhere

  double upper(double xi) const;
  double lower(double xi) const;
  /// d/dxi of the fitted width; zero where the width is floored at zero or
  /// xi is clamped outside the interval.
  double upper_derivative(double xi) const;
  double lower_derivative(double xi) const;
};

/// Largest arc-length step keeping consecutive offset samples within one
/// costmap cell: r_c / (1 + d_plus * kappa_plus).
double sampling_step(double r_c, double d_plus, double kappa_plus);

struct OffsetSamples {
  std::vector<double> xi;
  std::vector<double> upper;
  std::vector<double> lower;
  double xi_start = 0.0;
  double xi_end = 0.0;
  double step = 0.0;
  bool origin_blocked = false;
};

/// Raycasts along +/- the curve normal at ceil((xi_end-xi_start)/dxi) + 1
/// equidistant arc lengths, each clipped at d_plus. Curve points inside an
/// obstacle yield zero-width samples and set the origin_blocked warning.
OffsetSamples sample_offsets(const PlanarCurve& curve, const Costmap& map, double xi_start,
                             double xi_end, double dxi, double d_plus);

/// Fits both width polynomials of the given degree by maximizing the
/// trapezoidal area between them subject to 0 <= d(xi_i) <= sample_i.
Corridor fit_corridor(const OffsetSamples& samples, int degree);

/// Callable samplers for the two offset curves r(xi) +/- d(xi) n(xi).
std::pair<std::function<Vec2(double)>, std::function<Vec2(double)>> offset_curves(
    const PlanarCurve& curve, const Corridor& corridor);

struct SelfIntersection {
  bool upper = false;
  bool lower = false;
  bool any() const { return upper || lower; }
};

/// A side self-intersects when d(xi)*|kappa(xi)| >= 1 on the inner side of a
/// bend, or when its densely sampled offset polyline crosses itself.
SelfIntersection check_self_intersection(const PlanarCurve& curve, const Corridor& corridor);

/// Scales each offending side down by the largest factor in {0.9, 0.8, ...}
/// that clears the self-intersection check. Fit feasibility is preserved.
Corridor shrink_to_regular(const PlanarCurve& curve, const Corridor& corridor);

/// Largest distance an undetected obstacle can protrude into the corridor
/// when consecutive samples are at most r_c apart: r_c / 2.
double max_protrusion(double r_c);

/// Per-sample rows (xi, upper sample, lower sample, fitted upper, fitted
/// lower) as CSV.
void dump_corridor_csv(const Corridor& corridor, std::ostream& out);

}  // namespace cmpcc
