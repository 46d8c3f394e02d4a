#include "cmpcc/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace cmpcc {

namespace {

// Tridiagonal moment system for cubic spline interpolation of points P at
// parameters t. Boundary rows are either natural (M = 0) or clamped to a
// prescribed first derivative.
struct SplineBc {
  bool clamped = false;
  Vec2 deriv_start = Vec2::Zero();
  Vec2 deriv_end = Vec2::Zero();
};

std::vector<Vec2> solve_moments(const std::vector<Vec2>& pts, const std::vector<double>& t,
                                const SplineBc& bc) {
  const int n = static_cast<int>(pts.size());
  std::vector<double> sub(n, 0.0), diag(n, 0.0), sup(n, 0.0);
  std::vector<Vec2> rhs(n, Vec2::Zero());

  auto h = [&](int i) { return t[i + 1] - t[i]; };
  auto slope = [&](int i) { return Vec2((pts[i + 1] - pts[i]) / h(i)); };

  if (bc.clamped) {
    diag[0] = 2.0 * h(0);
    sup[0] = h(0);
    rhs[0] = 6.0 * (slope(0) - bc.deriv_start);
    sub[n - 1] = h(n - 2);
    diag[n - 1] = 2.0 * h(n - 2);
    rhs[n - 1] = 6.0 * (bc.deriv_end - slope(n - 2));
  } else {
    diag[0] = 1.0;
    diag[n - 1] = 1.0;
  }
  for (int i = 1; i + 1 < n; ++i) {
    sub[i] = h(i - 1);
    diag[i] = 2.0 * (h(i - 1) + h(i));
    sup[i] = h(i);
    rhs[i] = 6.0 * (slope(i) - slope(i - 1));
  }

  // Thomas algorithm.
  std::vector<double> cp(n, 0.0);
  std::vector<Vec2> dp(n, Vec2::Zero());
  cp[0] = sup[0] / diag[0];
  dp[0] = rhs[0] / diag[0];
  for (int i = 1; i < n; ++i) {
    const double m = diag[i] - sub[i] * cp[i - 1];
    cp[i] = sup[i] / m;
    dp[i] = (rhs[i] - sub[i] * dp[i - 1]) / m;
  }
  std::vector<Vec2> moments(n);
  moments[n - 1] = dp[n - 1];
  for (int i = n - 2; i >= 0; --i) moments[i] = dp[i] - cp[i] * moments[i + 1];
  return moments;
}

PlanarCurve spline_from_points(const std::vector<Vec2>& pts, const std::vector<double>& t,
                               const SplineBc& bc) {
  const int n = static_cast<int>(pts.size());
  std::vector<Vec2> moments = solve_moments(pts, t, bc);
  std::vector<CurveSegment> segments(n - 1);
  for (int i = 0; i + 1 < n; ++i) {
    const double h = t[i + 1] - t[i];
    CurveSegment& s = segments[i];
    s.a = pts[i];
    s.c = moments[i] / 2.0;
    s.d = (moments[i + 1] - moments[i]) / (6.0 * h);
    s.b = (pts[i + 1] - pts[i]) / h - h * (2.0 * moments[i] + moments[i + 1]) / 6.0;
  }
  std::vector<double> knots(t.begin(), t.end());
  const double t0 = knots.front();
  for (double& k : knots) k -= t0;
  return PlanarCurve(std::move(segments), std::move(knots));
}

double segment_speed(const CurveSegment& s, double u) { return s.deriv(u).norm(); }

// Adaptive Simpson quadrature of |r'| over one segment.
double simpson(const CurveSegment& s, double a, double b, double fa, double fm, double fb,
               double whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = segment_speed(s, lm), frm = segment_speed(s, rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  if (depth <= 0 || std::abs(left + right - whole) < 15.0 * tol) {
    return left + right + (left + right - whole) / 15.0;
  }
  return simpson(s, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) +
         simpson(s, m, b, fm, frm, fb, right, tol / 2.0, depth - 1);
}

double segment_arclength(const CurveSegment& s, double u0, double u1, double tol) {
  if (u1 <= u0) return 0.0;
  const double fa = segment_speed(s, u0);
  const double fb = segment_speed(s, u1);
  const double fm = segment_speed(s, 0.5 * (u0 + u1));
  const double whole = (u1 - u0) / 6.0 * (fa + 4.0 * fm + fb);
  return simpson(s, u0, u1, fa, fm, fb, whole, tol, 40);
}

}  // namespace

PlanarCurve::PlanarCurve(std::vector<CurveSegment> segments, std::vector<double> knots)
    : segments_(std::move(segments)), knots_(std::move(knots)) {
  if (segments_.empty() || knots_.size() != segments_.size() + 1) {
    throw std::invalid_argument("PlanarCurve: segment/knot count mismatch");
  }
  for (size_t i = 0; i + 1 < knots_.size(); ++i) {
    if (!(knots_[i + 1] > knots_[i])) {
      throw std::invalid_argument("PlanarCurve: knots must be strictly increasing");
    }
  }
  if (!(knots_.back() > 0.0)) throw std::invalid_argument("PlanarCurve: zero length");
}

std::pair<int, double> PlanarCurve::locate(double xi) const {
  const double x = std::clamp(xi, 0.0, knots_.back());
  auto it = std::upper_bound(knots_.begin(), knots_.end(), x);
  int idx = static_cast<int>(it - knots_.begin()) - 1;
  idx = std::clamp(idx, 0, static_cast<int>(segments_.size()) - 1);
  return {idx, x - knots_[idx]};
}

Vec2 PlanarCurve::evaluate(double xi) const {
  auto [i, u] = locate(xi);
  return segments_[i].eval(u);
}

Vec2 PlanarCurve::derivative(double xi) const {
  auto [i, u] = locate(xi);
  return segments_[i].deriv(u);
}

Vec2 PlanarCurve::second_derivative(double xi) const {
  auto [i, u] = locate(xi);
  return segments_[i].deriv2(u);
}

Vec2 PlanarCurve::tangent(double xi) const { return derivative(xi).normalized(); }

Vec2 PlanarCurve::normal(double xi) const { return rot90(tangent(xi)); }

Vec2 PlanarCurve::tangent_derivative(double xi) const {
  const Vec2 d1 = derivative(xi);
  const Vec2 d2 = second_derivative(xi);
  const double n = d1.norm();
  const Vec2 t = d1 / n;
  return (d2 - t * t.dot(d2)) / n;
}

double PlanarCurve::curvature(double xi) const {
  const Vec2 d1 = derivative(xi);
  const Vec2 d2 = second_derivative(xi);
  const double n = d1.norm();
  return cross2(d1, d2) / (n * n * n);
}

double PlanarCurve::max_curvature() const {
  double best = 0.0;
  auto consider = [&](int seg, double u) {
    const CurveSegment& s = segments_[seg];
    const Vec2 d1 = s.deriv(u);
    const Vec2 d2 = s.deriv2(u);
    const double n = d1.norm();
    if (n > 1e-12) best = std::max(best, std::abs(cross2(d1, d2)) / (n * n * n));
  };
  for (size_t i = 0; i < segments_.size(); ++i) {
    const CurveSegment& s = segments_[i];
    const double h = knots_[i + 1] - knots_[i];
    const int steps = std::max(2, static_cast<int>(std::ceil(h / 0.002)));
    for (int j = 0; j <= steps; ++j) consider(static_cast<int>(i), h * j / steps);
    // cross(r', r'') is quadratic in u; include its stationary point.
    const double q1 = 6.0 * cross2(s.b, s.d);
    const double q2 = 6.0 * cross2(s.c, s.d);
    if (std::abs(q2) > 1e-15) {
      const double ustar = -q1 / (2.0 * q2);
      if (ustar > 0.0 && ustar < h) consider(static_cast<int>(i), ustar);
    }
  }
  return best;
}

PlanarCurve fit_spline(const std::vector<Vec2>& waypoints) {
  if (waypoints.size() < 2) throw std::invalid_argument("fit_spline: need at least 2 waypoints");
  std::vector<double> t(waypoints.size(), 0.0);
  for (size_t i = 1; i < waypoints.size(); ++i) {
    const double chord = (waypoints[i] - waypoints[i - 1]).norm();
    if (chord < 1e-12) throw std::invalid_argument("fit_spline: duplicate consecutive waypoints");
    t[i] = t[i - 1] + chord;
  }
  return spline_from_points(waypoints, t, SplineBc{});
}

double integrated_length(const PlanarCurve& curve, double tol) {
  double total = 0.0;
  const auto& knots = curve.knots();
  for (size_t i = 0; i < curve.segments().size(); ++i) {
    total += segment_arclength(curve.segments()[i], 0.0, knots[i + 1] - knots[i], tol);
  }
  return total;
}

PlanarCurve reparameterize_arclength(const PlanarCurve& curve, double tol) {
  const auto& segs = curve.segments();
  const auto& knots = curve.knots();
  const int nseg = static_cast<int>(segs.size());

  // Cumulative arc length at the original knots.
  std::vector<double> cum(nseg + 1, 0.0);
  for (int i = 0; i < nseg; ++i) {
    cum[i + 1] = cum[i] + segment_arclength(segs[i], 0.0, knots[i + 1] - knots[i], 1e-10);
  }
  const double total = cum[nseg];
  if (!(total > 0.0)) throw std::runtime_error("reparameterize_arclength: degenerate curve");

  // Maps a global arc length to the original parameter via per-segment bisection.
  auto param_at_arclength = [&](double s) -> double {
    s = std::clamp(s, 0.0, total);
    int seg = static_cast<int>(std::upper_bound(cum.begin(), cum.end(), s) - cum.begin()) - 1;
    seg = std::clamp(seg, 0, nseg - 1);
    const double target = s - cum[seg];
    double lo = 0.0, hi = knots[seg + 1] - knots[seg];
    if (target <= 0.0) return knots[seg];
    if (target >= cum[seg + 1] - cum[seg]) return knots[seg + 1];
    int iters = 0;
    while (hi - lo > 1e-12 && iters < 200) {
      const double mid = 0.5 * (lo + hi);
      if (segment_arclength(segs[seg], 0.0, mid, 1e-10) < target) {
        lo = mid;
      } else {
        hi = mid;
      }
      ++iters;
    }
    if (iters >= 200) {
      std::ostringstream oss;
      oss << "reparameterize_arclength: bisection did not converge (segment " << seg
          << ", target " << target << ")";
      throw std::runtime_error(oss.str());
    }
    return knots[seg] + 0.5 * (lo + hi);
  };

  // Resample at equal arc-length steps and interpolate with end tangents
  // clamped to the input's; natural ends would break the unit-speed
  // invariant wherever the curve ends with nonzero curvature.
  SplineBc bc;
  bc.clamped = true;
  bc.deriv_start = curve.tangent(0.0);
  bc.deriv_end = curve.tangent(curve.total_length());

  double step = std::min(0.02, total / 8.0);
  for (int attempt = 0; attempt < 8; ++attempt) {
    const int n = std::max(3, static_cast<int>(std::ceil(total / step)) + 1);
    std::vector<Vec2> pts(n);
    std::vector<double> s(n);
    for (int j = 0; j < n; ++j) {
      s[j] = total * j / (n - 1);
      pts[j] = curve.evaluate(param_at_arclength(s[j]));
    }
    PlanarCurve out = spline_from_points(pts, s, bc);

    // Unit-speed check on a grid offset from the knots.
    bool ok = true;
    const int checks = 4 * n;
    for (int j = 0; j <= checks && ok; ++j) {
      const double xi = total * (j + 0.37) / (checks + 1);
      const double speed = out.derivative(xi).norm();
      if (std::abs(speed - 1.0) > 1e-3) ok = false;
    }
    if (ok) {
      if (std::abs(out.total_length() - total) > std::max(tol, 1e-12) * total) {
        throw std::runtime_error("reparameterize_arclength: length drift exceeds tolerance");
      }
      return out;
    }
    step *= 0.5;
  }
  throw std::runtime_error("reparameterize_arclength: unit-speed invariant not reached");
}

PlanarCurve truncate_curve(const PlanarCurve& curve, double s_end) {
  const double send = std::clamp(s_end, 1e-9, curve.total_length());
  const auto& knots = curve.knots();
  auto it = std::upper_bound(knots.begin(), knots.end(), send);
  int last = static_cast<int>(it - knots.begin()) - 1;
  last = std::clamp(last, 0, static_cast<int>(curve.segments().size()) - 1);
  std::vector<CurveSegment> segments(curve.segments().begin(),
                                     curve.segments().begin() + last + 1);
  std::vector<double> new_knots(knots.begin(), knots.begin() + last + 1);
  new_knots.push_back(send);
  if (new_knots.back() - new_knots[new_knots.size() - 2] < 1e-9) {
    // Cut lands on a knot; drop the zero-length tail segment.
    segments.pop_back();
    new_knots.erase(new_knots.end() - 2);
  }
  return PlanarCurve(std::move(segments), std::move(new_knots));
}

double closest_point_param(const PlanarCurve& curve, const Vec2& p, double step) {
  const double total = curve.total_length();
  const int n = std::max(2, static_cast<int>(std::ceil(total / step)));
  double best_xi = 0.0;
  double best_d2 = (curve.evaluate(0.0) - p).squaredNorm();
  for (int i = 1; i <= n; ++i) {
    const double xi = total * i / n;
    const double d2 = (curve.evaluate(xi) - p).squaredNorm();
    if (d2 < best_d2) {
      best_d2 = d2;
      best_xi = xi;
    }
  }
  // Golden-section refinement around the best grid point.
  double lo = std::max(0.0, best_xi - total / n);
  double hi = std::min(total, best_xi + total / n);
  const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
  double x1 = hi - gr * (hi - lo), x2 = lo + gr * (hi - lo);
  double f1 = (curve.evaluate(x1) - p).squaredNorm();
  double f2 = (curve.evaluate(x2) - p).squaredNorm();
  for (int it = 0; it < 60 && hi - lo > 1e-10; ++it) {
    if (f1 < f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - gr * (hi - lo);
      f1 = (curve.evaluate(x1) - p).squaredNorm();
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + gr * (hi - lo);
      f2 = (curve.evaluate(x2) - p).squaredNorm();
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace cmpcc
