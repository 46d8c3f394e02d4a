#include "cmpcc/clf_cbf.hpp"

#include <cmath>

#include "cmpcc/qp.hpp"

namespace cmpcc {

ContourErrors contour_lag_errors(const Vec2& p, double xi, const PlanarCurve& curve) {
  const Vec2 eps = p - curve.evaluate(xi);
  const Vec2 t = curve.tangent(xi);
  const Vec2 residual = eps - t * t.dot(eps);
  return {residual.norm(), t.dot(eps)};
}

double signed_normal_error(const Vec2& p, double xi, const PlanarCurve& curve) {
  return curve.normal(xi).dot(p - curve.evaluate(xi));
}

ErrorGradients error_gradients(const Vec2& p, double xi, const PlanarCurve& curve) {
  const Vec2 eps = p - curve.evaluate(xi);
  const Vec2 t = curve.tangent(xi);
  const Vec2 n = rot90(t);
  const Vec2 dt = curve.tangent_derivative(xi);
  const Vec2 dn = rot90(dt);
  const Vec2 r1 = curve.derivative(xi);

  ErrorGradients g;
  g.e_n = n.dot(eps);
  g.e_t = t.dot(eps);
  g.den_dp = n;
  g.det_dp = t;
  // n . r' vanishes identically (n is r' rotated), so only the frame term
  // survives in the normal component.
  g.den_dxi = dn.dot(eps);
  g.det_dxi = dt.dot(eps) - t.dot(r1);
  return g;
}

LyapunovValue lyapunov(const Vec2& p, double xi, const PlanarCurve& curve,
                       const ClfParams& params) {
  const ErrorGradients g = error_gradients(p, xi, curve);
  LyapunovValue out;
  out.value = params.lambda_c * g.e_n * g.e_n + params.lambda_l * g.e_t * g.e_t;
  out.grad_p = 2.0 * params.lambda_c * g.e_n * g.den_dp + 2.0 * params.lambda_l * g.e_t * g.det_dp;
  out.grad_xi =
      2.0 * params.lambda_c * g.e_n * g.den_dxi + 2.0 * params.lambda_l * g.e_t * g.det_dxi;
  return out;
}

StateGradient lyapunov_state_gradient(const AugmentedState& state, const PlanarCurve& curve,
                                      const ClfParams& params) {
  const LyapunovValue v = lyapunov(state.position(), state.xi_hat, curve, params);
  StateGradient out;
  out.value = v.value;
  out.grad(0) = v.grad_p.x();
  out.grad(1) = v.grad_p.y();
  out.grad(4) = v.grad_xi;
  return out;
}

CbfPair cbf_pair(const AugmentedState& state, const PlanarCurve& curve,
                 const Corridor& corridor, const CbfParams& params) {
  const double xi = state.xi_hat;
  const double d_pm = signed_normal_error(state.position(), xi, curve);
  const Vec2 n = curve.normal(xi);
  const Vec2 e_theta = state.heading();
  const double ne = n.dot(e_theta);
  const double vl = state.v * params.lambda;
  CbfPair h;
  h.upper = (corridor.upper(xi) - d_pm - params.r_o) * std::exp(-ne - vl);
  h.lower = (corridor.lower(xi) + d_pm - params.r_o) * std::exp(ne - vl);
  return h;
}

CbfPair relative_degree_one_cbfs(const Vec2& p, double xi, const PlanarCurve& curve,
                                 const Corridor& corridor) {
  const double d_pm = signed_normal_error(p, xi, curve);
  return {corridor.upper(xi) - d_pm, corridor.lower(xi) + d_pm};
}

namespace {

StateGradient cbf_gradient_impl(const AugmentedState& state, const PlanarCurve& curve,
                                const Corridor& corridor, const CbfParams& params,
                                bool upper) {
  const double xi = state.xi_hat;
  const ErrorGradients eg = error_gradients(state.position(), xi, curve);
  const Vec2 t = curve.tangent(xi);
  const Vec2 dn = rot90(curve.tangent_derivative(xi));
  const Vec2 e_theta = state.heading();
  const double sgn = upper ? 1.0 : -1.0;

  // h = A * exp(phi) with
  //   A   = d(xi) -/+ e_n - r_o
  //   phi = -/+ n.e_theta - v*lambda.
  const double width = upper ? corridor.upper(xi) : corridor.lower(xi);
  const double dwidth = upper ? corridor.upper_derivative(xi) : corridor.lower_derivative(xi);
  const double A = width - sgn * eg.e_n - params.r_o;
  const Vec2 n = rot90(t);
  const double phi = -sgn * n.dot(e_theta) - state.v * params.lambda;
  const double E = std::exp(phi);
  const double h = A * E;

  StateGradient out;
  out.value = h;
  // dA/dp = -/+ n, dphi/dp = 0.
  out.grad(0) = E * (-sgn * eg.den_dp.x());
  out.grad(1) = E * (-sgn * eg.den_dp.y());
  // dphi/dtheta = -/+ n.rot90(e_theta) = -/+ t.e_theta.
  out.grad(2) = h * (-sgn * t.dot(e_theta));
  // dphi/dv = -lambda.
  out.grad(3) = -params.lambda * h;
  // dA/dxi = d'(xi) -/+ de_n/dxi, dphi/dxi = -/+ n'.e_theta.
  out.grad(4) = E * (dwidth - sgn * eg.den_dxi) + h * (-sgn * dn.dot(e_theta));
  out.grad(5) = 0.0;
  return out;
}

LieDerivatives lie_from_gradient(const StateGradient& g, const AugmentedState& state) {
  LieDerivatives out;
  out.value = g.value;
  const Vec2 e_theta = state.heading();
  // f(x) = (v cos, v sin, 0, 0, nu, 0).
  out.Lf = g.grad(0) * state.v * e_theta.x() + g.grad(1) * state.v * e_theta.y() +
           g.grad(4) * state.nu;
  // g(x) columns: a -> vdot, omega -> thetadot, nudot -> nudot.
  out.Lg(0) = g.grad(3);
  out.Lg(1) = g.grad(2);
  out.Lg(2) = g.grad(5);
  return out;
}

}  // namespace

StateGradient cbf_upper_gradient(const AugmentedState& state, const PlanarCurve& curve,
                                 const Corridor& corridor, const CbfParams& params) {
  return cbf_gradient_impl(state, curve, corridor, params, true);
}

StateGradient cbf_lower_gradient(const AugmentedState& state, const PlanarCurve& curve,
                                 const Corridor& corridor, const CbfParams& params) {
  return cbf_gradient_impl(state, curve, corridor, params, false);
}

CbfRates cbf_lie_derivatives(const AugmentedState& state, const PlanarCurve& curve,
                             const Corridor& corridor, const CbfParams& params) {
  CbfRates rates;
  rates.upper = lie_from_gradient(cbf_upper_gradient(state, curve, corridor, params), state);
  rates.lower = lie_from_gradient(cbf_lower_gradient(state, curve, corridor, params), state);
  return rates;
}

QpFilterResult clf_cbf_qp_filter(const Eigen::VectorXd& nominal, const StabilityRow& clf,
                                 const std::vector<BarrierRow>& cbfs, double slack_weight) {
  const int m = static_cast<int>(nominal.size());
  const int nz = m + 1;  // (u, delta)

  Eigen::MatrixXd H = Eigen::MatrixXd::Identity(nz, nz);
  H(m, m) = 2.0 * slack_weight;
  Eigen::VectorXd g(nz);
  g.head(m) = -nominal;
  g(m) = 0.0;

  const int rows = 1 + static_cast<int>(cbfs.size());
  Eigen::MatrixXd A(rows, nz);
  Eigen::VectorXd b(rows);
  A.setZero();
  // LfV + LgV.u + psi V - delta <= 0.
  A.block(0, 0, 1, m) = clf.Lg.transpose();
  A(0, m) = -1.0;
  b(0) = -clf.Lf - clf.psi * clf.value;
  // -(Lfh + Lgh.u) <= alpha h.
  for (size_t i = 0; i < cbfs.size(); ++i) {
    A.block(1 + i, 0, 1, m) = -cbfs[i].Lg.transpose();
    b(1 + i) = cbfs[i].Lf + cbfs[i].alpha * cbfs[i].value;
  }

  const QpResult qp = qp_solve(H, g, A, b);
  QpFilterResult out;
  out.feasible = qp.status == QpStatus::kOptimal;
  if (out.feasible) {
    out.input = qp.x.head(m);
    out.slack = qp.x(m);
    out.kkt_residual = qp.kkt_residual;
  }
  return out;
}

QpFilterResult clf_cbf_qp_filter(const ControlInput& nominal, const AugmentedState& state,
                                 const PlanarCurve& curve, const Corridor& corridor,
                                 const ClfParams& clf, const CbfParams& cbf,
                                 double slack_weight) {
  const StateGradient vg = lyapunov_state_gradient(state, curve, clf);
  const LieDerivatives v_lie = lie_from_gradient(vg, state);
  StabilityRow clf_row;
  clf_row.value = v_lie.value;
  clf_row.Lf = v_lie.Lf;
  clf_row.Lg = v_lie.Lg;
  clf_row.psi = clf.psi;

  const CbfRates rates = cbf_lie_derivatives(state, curve, corridor, cbf);
  std::vector<BarrierRow> rows(2);
  rows[0].value = rates.upper.value;
  rows[0].Lf = rates.upper.Lf;
  rows[0].Lg = rates.upper.Lg;
  rows[0].alpha = cbf.alpha_upper;
  rows[1].value = rates.lower.value;
  rows[1].Lf = rates.lower.Lf;
  rows[1].Lg = rates.lower.Lg;
  rows[1].alpha = cbf.alpha_lower;

  return clf_cbf_qp_filter(nominal.to_vector(), clf_row, rows, slack_weight);
}

}  // namespace cmpcc
