#include "cmpcc/corridor.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

#include "cmpcc/linprog.hpp"

namespace cmpcc {

namespace {

double poly_eval(const Eigen::VectorXd& c, double u) {
  double v = 0.0;
  for (int j = static_cast<int>(c.size()) - 1; j >= 0; --j) v = v * u + c(j);
  return v;
}

double poly_deriv(const Eigen::VectorXd& c, double u) {
  double v = 0.0;
  for (int j = static_cast<int>(c.size()) - 1; j >= 1; --j) v = v * u + j * c(j);
  return v;
}

// Solves one side of the corridor fit: maximize sum_i w_i p(u_i) subject to
// 0 <= p(u_i) <= d_i, polynomial coefficients free. Free variables are split
// into positive and negative parts for the simplex.
Eigen::VectorXd fit_side(const std::vector<double>& u, const std::vector<double>& d,
                         const std::vector<double>& w, int degree) {
  const int nc = degree + 1;
  const int n = static_cast<int>(u.size());
  Eigen::MatrixXd phi(n, nc);
  for (int i = 0; i < n; ++i) {
    double p = 1.0;
    for (int j = 0; j < nc; ++j) {
      phi(i, j) = p;
      p *= u[i];
    }
  }
  Eigen::MatrixXd A(2 * n, 2 * nc);
  Eigen::VectorXd b(2 * n);
  A.block(0, 0, n, nc) = phi;
  A.block(0, nc, n, nc) = -phi;
  A.block(n, 0, n, nc) = -phi;
  A.block(n, nc, n, nc) = phi;
  for (int i = 0; i < n; ++i) {
    b(i) = std::max(0.0, d[i]);
    b(n + i) = 0.0;
  }
  Eigen::VectorXd obj(2 * nc);
  Eigen::VectorXd wphi = Eigen::VectorXd::Zero(nc);
  for (int i = 0; i < n; ++i) wphi += w[i] * phi.row(i).transpose();
  obj.head(nc) = wphi;
  obj.tail(nc) = -wphi;

  const LpResult r = simplex_maximize(A, b, obj);
  if (r.status != LpStatus::kOptimal) {
    throw std::runtime_error("fit_corridor: LP did not reach optimality");
  }
  return r.x.head(nc) - r.x.tail(nc);
}

double clamp_xi(const Corridor& c, double xi) { return std::clamp(xi, c.xi_start, c.xi_end); }

}  // namespace

double Corridor::upper(double xi) const {
  return std::max(0.0, poly_eval(coeff_upper, clamp_xi(*this, xi) - xi_start));
}

double Corridor::lower(double xi) const {
  return std::max(0.0, poly_eval(coeff_lower, clamp_xi(*this, xi) - xi_start));
}

double Corridor::upper_derivative(double xi) const {
  if (xi < xi_start || xi > xi_end) return 0.0;
  const double u = xi - xi_start;
  if (poly_eval(coeff_upper, u) <= 0.0) return 0.0;
  return poly_deriv(coeff_upper, u);
}

double Corridor::lower_derivative(double xi) const {
  if (xi < xi_start || xi > xi_end) return 0.0;
  const double u = xi - xi_start;
  if (poly_eval(coeff_lower, u) <= 0.0) return 0.0;
  return poly_deriv(coeff_lower, u);
}

double sampling_step(double r_c, double d_plus, double kappa_plus) {
  if (r_c <= 0.0 || d_plus <= 0.0 || kappa_plus < 0.0) {
    throw std::invalid_argument("sampling_step: arguments must be positive");
  }
  return r_c / (1.0 + d_plus * kappa_plus);
}

OffsetSamples sample_offsets(const PlanarCurve& curve, const Costmap& map, double xi_start,
                             double xi_end, double dxi, double d_plus) {
  if (!(xi_end > xi_start) || dxi <= 0.0 || d_plus <= 0.0) {
    throw std::invalid_argument("sample_offsets: bad interval or step");
  }
  OffsetSamples out;
  out.xi_start = xi_start;
  out.xi_end = xi_end;
  out.step = dxi;
  const int n = static_cast<int>(std::ceil((xi_end - xi_start) / dxi)) + 1;
  out.xi.resize(n);
  out.upper.resize(n);
  out.lower.resize(n);
  for (int i = 0; i < n; ++i) {
    const double xi = std::min(xi_start + i * dxi, xi_end);
    out.xi[i] = xi;
    const Vec2 p = curve.evaluate(xi);
    const Vec2 nrm = curve.normal(xi);
    const RaycastResult up = raycast(map, p, nrm, d_plus);
    const RaycastResult lo = raycast(map, p, Vec2(-nrm), d_plus);
    if (up.origin_blocked || lo.origin_blocked) out.origin_blocked = true;
    out.upper[i] = up.distance;
    out.lower[i] = lo.distance;
  }
  return out;
}

Corridor fit_corridor(const OffsetSamples& samples, int degree) {
  const int n = static_cast<int>(samples.xi.size());
  if (n < degree + 1) throw std::invalid_argument("fit_corridor: need >= degree+1 samples");

  std::vector<double> u(n), w(n);
  for (int i = 0; i < n; ++i) {
    u[i] = samples.xi[i] - samples.xi_start;
    // Trapezoidal area weights.
    const double left = i == 0 ? 0.0 : samples.xi[i] - samples.xi[i - 1];
    const double right = i + 1 == n ? 0.0 : samples.xi[i + 1] - samples.xi[i];
    w[i] = 0.5 * (left + right);
  }

  Corridor c;
  c.xi_start = samples.xi_start;
  c.xi_end = samples.xi_end;
  c.step = samples.step;
  c.sample_xi = samples.xi;
  c.samples_upper = samples.upper;
  c.samples_lower = samples.lower;
  c.origin_blocked = samples.origin_blocked;
  c.coeff_upper = fit_side(u, samples.upper, w, degree);
  c.coeff_lower = fit_side(u, samples.lower, w, degree);

  double widest = 0.0;
  for (int i = 0; i < n; ++i) {
    widest = std::max(widest, c.upper(samples.xi[i]) + c.lower(samples.xi[i]));
  }
  c.degenerate = widest < 1e-9;
  return c;
}

std::pair<std::function<Vec2(double)>, std::function<Vec2(double)>> offset_curves(
    const PlanarCurve& curve, const Corridor& corridor) {
  const PlanarCurve* cp = &curve;
  Corridor cc = corridor;
  auto upper = [cp, cc](double xi) { return Vec2(cp->evaluate(xi) + cc.upper(xi) * cp->normal(xi)); };
  auto lower = [cp, cc](double xi) { return Vec2(cp->evaluate(xi) - cc.lower(xi) * cp->normal(xi)); };
  return {upper, lower};
}

SelfIntersection check_self_intersection(const PlanarCurve& curve, const Corridor& corridor) {
  SelfIntersection result;
  const double span = corridor.xi_end - corridor.xi_start;
  if (span <= 0.0) return result;

  // Local offset-curve regularity: the offset with width d on the inner side
  // of a bend degenerates once d * |kappa| reaches 1.
  const double fine = std::min(0.005, corridor.step > 0 ? corridor.step : 0.005);
  const int nf = std::max(2, static_cast<int>(std::ceil(span / fine)));
  for (int i = 0; i <= nf; ++i) {
    const double xi = corridor.xi_start + span * i / nf;
    const double kappa = curve.curvature(xi);
    if (kappa > 0.0 && corridor.upper(xi) * kappa >= 1.0) result.upper = true;
    if (kappa < 0.0 && corridor.lower(xi) * (-kappa) >= 1.0) result.lower = true;
  }

  // Global check: does the offset polyline cross itself.
  auto polyline_crosses = [&](bool upper_side) {
    const double coarse = std::max(0.02, corridor.step);
    const int n = std::max(4, static_cast<int>(std::ceil(span / coarse)));
    std::vector<Vec2> pts(n + 1);
    for (int i = 0; i <= n; ++i) {
      const double xi = corridor.xi_start + span * i / n;
      const double d = upper_side ? corridor.upper(xi) : -corridor.lower(xi);
      pts[i] = curve.evaluate(xi) + d * curve.normal(xi);
    }
    auto segs_intersect = [](const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d) {
      const double d1 = cross2(b - a, c - a);
      const double d2 = cross2(b - a, d - a);
      const double d3 = cross2(d - c, a - c);
      const double d4 = cross2(d - c, b - c);
      return ((d1 > 0) != (d2 > 0)) && ((d3 > 0) != (d4 > 0));
    };
    for (int i = 0; i + 1 <= n; ++i) {
      for (int j = i + 2; j + 1 <= n; ++j) {
        if (segs_intersect(pts[i], pts[i + 1], pts[j], pts[j + 1])) return true;
      }
    }
    return false;
  };
  if (!result.upper && polyline_crosses(true)) result.upper = true;
  if (!result.lower && polyline_crosses(false)) result.lower = true;
  return result;
}

Corridor shrink_to_regular(const PlanarCurve& curve, const Corridor& corridor) {
  Corridor out = corridor;
  SelfIntersection bad = check_self_intersection(curve, out);
  for (double factor = 0.9; bad.any() && factor > -0.05; factor -= 0.1) {
    const double f = std::max(0.0, factor);
    if (bad.upper) out.coeff_upper = corridor.coeff_upper * f;
    if (bad.lower) out.coeff_lower = corridor.coeff_lower * f;
    bad = check_self_intersection(curve, out);
  }
  return out;
}

double max_protrusion(double r_c) {
  if (r_c < 0.0) throw std::invalid_argument("max_protrusion: negative resolution");
  return 0.5 * r_c;
}

void dump_corridor_csv(const Corridor& corridor, std::ostream& out) {
  out << "xi,sample_upper,sample_lower,fit_upper,fit_lower\n";
  char buf[160];
  for (size_t i = 0; i < corridor.sample_xi.size(); ++i) {
    const double xi = corridor.sample_xi[i];
    std::snprintf(buf, sizeof(buf), "%.12g,%.12g,%.12g,%.12g,%.12g\n", xi,
                  corridor.samples_upper[i], corridor.samples_lower[i], corridor.upper(xi),
                  corridor.lower(xi));
    out << buf;
  }
}

}  // namespace cmpcc
