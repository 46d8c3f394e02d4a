#pragma once

#include <Eigen/Dense>
#include <vector>

#include "cmpcc/corridor.hpp"
#include "cmpcc/geometry.hpp"
#include "cmpcc/state.hpp"

namespace cmpcc {

struct ClfParams {
  double lambda_c = 1.0;  // contour error weight
  double lambda_l = 1.0;  // lag error weight
  double psi = 1.0;       // class-K slope, 1/s
};

struct CbfParams {
  double alpha_upper = 0.25;  // class-K slope for the upper corridor CBF, 1/s
  double alpha_lower = 0.25;
  double lambda = 0.4;   // velocity shaping, s/m; keep lambda < 1/v_max
  double r_o = 0.15;     // circumscribing radius, m
  double alpha_min = 0.05;
  double alpha_max = 0.25;
};

struct ContourErrors {
  double contour = 0.0;  // nonnegative normal component
  double lag = 0.0;      // signed tangential component
};

/// Normal and tangential components of p - r(xi).
ContourErrors contour_lag_errors(const Vec2& p, double xi, const PlanarCurve& curve);

/// Signed normal distance n_r(xi) . (p - r(xi)); positive on the +normal side.
double signed_normal_error(const Vec2& p, double xi, const PlanarCurve& curve);

/// Signed normal and lag errors with their derivatives in (p, xi); shared by
/// the Lyapunov gradient, the CBF gradients, and the contour cost rows.
struct ErrorGradients {
  double e_n = 0.0;  // signed normal error
  double e_t = 0.0;  // lag error
  Vec2 den_dp = Vec2::Zero();
  Vec2 det_dp = Vec2::Zero();
  double den_dxi = 0.0;
  double det_dxi = 0.0;
};
ErrorGradients error_gradients(const Vec2& p, double xi, const PlanarCurve& curve);

struct LyapunovValue {
  double value = 0.0;
  Vec2 grad_p = Vec2::Zero();
  double grad_xi = 0.0;
};

/// V = lambda_c (contour)^2 + lambda_l (lag)^2 with its analytic gradient.
LyapunovValue lyapunov(const Vec2& p, double xi, const PlanarCurve& curve,
                       const ClfParams& params);

/// V and its gradient lifted to the augmented state (zero rows for theta, v, nu).
struct StateGradient {
  double value = 0.0;
  Vector6d grad = Vector6d::Zero();
};
StateGradient lyapunov_state_gradient(const AugmentedState& state, const PlanarCurve& curve,
                                      const ClfParams& params);

struct CbfPair {
  double upper = 0.0;
  double lower = 0.0;
};

/// Relative-degree-reduced unicycle corridor CBFs
///   h_up = [d_up(xi) - d_pm - r_o] exp(-n_r.e_theta - v lambda)
///   h_lo = [d_lo(xi) + d_pm - r_o] exp(+n_r.e_theta - v lambda).
CbfPair cbf_pair(const AugmentedState& state, const PlanarCurve& curve,
                 const Corridor& corridor, const CbfParams& params);

/// Plain corridor CBFs for relative-degree-1 systems: d_up - d_pm, d_lo + d_pm.
CbfPair relative_degree_one_cbfs(const Vec2& p, double xi, const PlanarCurve& curve,
                                 const Corridor& corridor);

/// Full-state gradients of the unicycle CBFs.
StateGradient cbf_upper_gradient(const AugmentedState& state, const PlanarCurve& curve,
                                 const Corridor& corridor, const CbfParams& params);
StateGradient cbf_lower_gradient(const AugmentedState& state, const PlanarCurve& curve,
                                 const Corridor& corridor, const CbfParams& params);

struct LieDerivatives {
  double value = 0.0;           // h
  double Lf = 0.0;              // drift term
  Eigen::Vector3d Lg = Eigen::Vector3d::Zero();  // per input (a, omega, nudot)
  double rate(const ControlInput& u) const { return Lf + Lg.dot(u.to_vector()); }
};

struct CbfRates {
  LieDerivatives upper;
  LieDerivatives lower;
};

/// Analytic Lie derivatives of both unicycle CBFs along f(x) and g(x).
CbfRates cbf_lie_derivatives(const AugmentedState& state, const PlanarCurve& curve,
                             const Corridor& corridor, const CbfParams& params);

/// One barrier row hdot + alpha h >= 0 in decomposed form.
struct BarrierRow {
  double value = 0.0;
  double Lf = 0.0;
  Eigen::VectorXd Lg;
  double alpha = 0.0;
};

/// The stability row Vdot + psi V <= delta in decomposed form.
struct StabilityRow {
  double value = 0.0;
  double Lf = 0.0;
  Eigen::VectorXd Lg;
  double psi = 0.0;
};

struct QpFilterResult {
  bool feasible = false;
  Eigen::VectorXd input;
  double slack = 0.0;
  double kkt_residual = 0.0;
};

/// Minimally perturbing CLF-CBF filter:
///   min 1/2 ||nominal - u||^2 + p delta^2
///   s.t. Vdot(x,u) + psi V(x) <= delta,   hdot_i(x,u) + alpha_i h_i(x) >= 0.
/// Generic over the constraint data so the same filter serves test systems
/// of any dimension.
QpFilterResult clf_cbf_qp_filter(const Eigen::VectorXd& nominal, const StabilityRow& clf,
                                 const std::vector<BarrierRow>& cbfs, double slack_weight);

/// Unicycle convenience overload: builds the rows from the corridor CBFs and
/// the Lyapunov candidate at the given state.
QpFilterResult clf_cbf_qp_filter(const ControlInput& nominal, const AugmentedState& state,
                                 const PlanarCurve& curve, const Corridor& corridor,
                                 const ClfParams& clf, const CbfParams& cbf,
                                 double slack_weight);

}  // namespace cmpcc
