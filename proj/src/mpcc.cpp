#include "cmpcc/mpcc.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

#include "cmpcc/qp.hpp"

namespace cmpcc {

void MpccConfig::validate() const {
  if (horizon < 2) throw std::invalid_argument("MpccConfig: horizon must be >= 2");
  if (dt <= 0.0) throw std::invalid_argument("MpccConfig: dt must be positive");
  if (q_c <= 0.0 || q_l <= 0.0 || q_nu <= 0.0 || slack_weight <= 0.0) {
    throw std::invalid_argument("MpccConfig: weights must be positive");
  }
  if (q_l < 10.0 * q_c) {
    throw std::invalid_argument("MpccConfig: q_l must be at least 10 q_c");
  }
  if (nu_max < 0.0 || nudot_max <= 0.0 || a_max <= 0.0 || omega_max <= 0.0) {
    throw std::invalid_argument("MpccConfig: bounds must be positive");
  }
  if (v_max <= v_min) throw std::invalid_argument("MpccConfig: empty velocity interval");
}

const char* to_string(MpccStatus status) {
  switch (status) {
    case MpccStatus::kOptimal: return "optimal";
    case MpccStatus::kMaxIter: return "max_iter";
    case MpccStatus::kInfeasible: return "infeasible";
  }
  return "unknown";
}

Vector6d dynamics_continuous(const AugmentedState& state, const ControlInput& input) {
  Vector6d dz;
  dz << state.v * std::cos(state.theta), state.v * std::sin(state.theta), input.omega, input.a,
      state.nu, input.nudot;
  return dz;
}

namespace {

using Vec4 = Eigen::Vector4d;
using Mat4 = Eigen::Matrix4d;
using Mat42 = Eigen::Matrix<double, 4, 2>;

Vec4 pose_flow(const Vec4& z, double a, double omega) {
  return Vec4(z(3) * std::cos(z(2)), z(3) * std::sin(z(2)), omega, a);
}

Mat4 pose_jacobian(const Vec4& z) {
  Mat4 J = Mat4::Zero();
  J(0, 2) = -z(3) * std::sin(z(2));
  J(0, 3) = std::cos(z(2));
  J(1, 2) = z(3) * std::cos(z(2));
  J(1, 3) = std::sin(z(2));
  return J;
}

constexpr double kInputJacobian[4][2] = {{0, 0}, {0, 0}, {0, 1}, {1, 0}};

Mat42 pose_input_jacobian() {
  Mat42 Ju;
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 2; ++j) Ju(i, j) = kInputJacobian[i][j];
  }
  return Ju;
}

}  // namespace

AugmentedState dynamics_discrete(const AugmentedState& state, const ControlInput& input,
                                 double dt) {
  // RK4 on the pose/velocity block; the progress pair keeps its printed
  // linear updates exactly.
  Vec4 z(state.x, state.y, state.theta, state.v);
  const Vec4 k1 = pose_flow(z, input.a, input.omega);
  const Vec4 k2 = pose_flow(z + 0.5 * dt * k1, input.a, input.omega);
  const Vec4 k3 = pose_flow(z + 0.5 * dt * k2, input.a, input.omega);
  const Vec4 k4 = pose_flow(z + dt * k3, input.a, input.omega);
  z += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);

  AugmentedState out;
  out.x = z(0);
  out.y = z(1);
  out.theta = wrap_angle(z(2));
  out.v = z(3);
  out.xi_hat = state.xi_hat + state.nu * dt;
  out.nu = state.nu + input.nudot * dt;
  return out;
}

AugmentedState dynamics_discrete_clamped(const AugmentedState& state, const ControlInput& input,
                                         double dt, const StateBounds& bounds, bool* clamped) {
  AugmentedState next = dynamics_discrete(state, input, dt);
  bool hit = false;
  auto clamp_to = [&hit](double v, double lo, double hi) {
    if (v < lo || v > hi) hit = true;
    return std::clamp(v, lo, hi);
  };
  next.v = clamp_to(next.v, bounds.v_min, bounds.v_max);
  next.nu = clamp_to(next.nu, 0.0, bounds.nu_max);
  next.xi_hat = clamp_to(next.xi_hat, 0.0, bounds.s_r);
  if (clamped) *clamped = hit;
  return next;
}

Linearization linearize(const AugmentedState& state, const ControlInput& input, double dt) {
  const Mat42 Ju = pose_input_jacobian();
  Vec4 z(state.x, state.y, state.theta, state.v);

  const Vec4 k1 = pose_flow(z, input.a, input.omega);
  const Mat4 D1 = pose_jacobian(z);
  const Mat42 E1 = Ju;

  const Vec4 z2 = z + 0.5 * dt * k1;
  const Vec4 k2 = pose_flow(z2, input.a, input.omega);
  const Mat4 J2 = pose_jacobian(z2);
  const Mat4 D2 = J2 * (Mat4::Identity() + 0.5 * dt * D1);
  const Mat42 E2 = J2 * (0.5 * dt * E1) + Ju;

  const Vec4 z3 = z + 0.5 * dt * k2;
  const Vec4 k3 = pose_flow(z3, input.a, input.omega);
  const Mat4 J3 = pose_jacobian(z3);
  const Mat4 D3 = J3 * (Mat4::Identity() + 0.5 * dt * D2);
  const Mat42 E3 = J3 * (0.5 * dt * E2) + Ju;

  const Vec4 z4 = z + dt * k3;
  const Mat4 J4 = pose_jacobian(z4);
  const Mat4 D4 = J4 * (Mat4::Identity() + dt * D3);
  const Mat42 E4 = J4 * (dt * E3) + Ju;
  (void)k3;

  const Mat4 A4 = Mat4::Identity() + dt / 6.0 * (D1 + 2.0 * D2 + 2.0 * D3 + D4);
  const Mat42 B4 = dt / 6.0 * (E1 + 2.0 * E2 + 2.0 * E3 + E4);

  Linearization lin;
  lin.A.setZero();
  lin.B.setZero();
  lin.A.topLeftCorner<4, 4>() = A4;
  lin.A(4, 4) = 1.0;
  lin.A(4, 5) = dt;
  lin.A(5, 5) = 1.0;
  // Input order (a, omega, nudot); the pose block sees (a, omega).
  lin.B.block<4, 1>(0, 0) = B4.col(0);
  lin.B.block<4, 1>(0, 1) = B4.col(1);
  lin.B(5, 2) = dt;
  return lin;
}

namespace {

std::vector<AugmentedState> rollout(const AugmentedState& x0,
                                    const std::vector<ControlInput>& inputs, double dt) {
  std::vector<AugmentedState> states(inputs.size() + 1);
  states[0] = x0;
  for (size_t k = 0; k < inputs.size(); ++k) {
    states[k + 1] = dynamics_discrete(states[k], inputs[k], dt);
  }
  return states;
}

struct StageEvals {
  std::vector<StateGradient> V;
  std::vector<StateGradient> h_up;
  std::vector<StateGradient> h_lo;
  bool horizon_clamped = false;
};

StageEvals evaluate_stages(const std::vector<AugmentedState>& states, const PlanarCurve& curve,
                           const Corridor* corridor, const ClfParams& clf,
                           const CbfParams& cbf) {
  StageEvals ev;
  const size_t n = states.size();
  ev.V.resize(n);
  for (size_t k = 0; k < n; ++k) ev.V[k] = lyapunov_state_gradient(states[k], curve, clf);
  if (corridor) {
    ev.h_up.resize(n);
    ev.h_lo.resize(n);
    for (size_t k = 0; k < n; ++k) {
      ev.h_up[k] = cbf_upper_gradient(states[k], curve, *corridor, cbf);
      ev.h_lo[k] = cbf_lower_gradient(states[k], curve, *corridor, cbf);
      if (states[k].xi_hat > corridor->xi_end + 1e-12) ev.horizon_clamped = true;
    }
  }
  return ev;
}

double true_cost(const MpccConfig& config, const std::vector<AugmentedState>& states,
                 const PlanarCurve& curve, double slack) {
  double cost = config.slack_weight * slack * slack;
  for (size_t k = 1; k < states.size(); ++k) {
    const ErrorGradients e = error_gradients(states[k].position(), states[k].xi_hat, curve);
    cost += config.q_c * e.e_n * e.e_n + config.q_l * e.e_t * e.e_t - config.q_nu * states[k].nu;
  }
  return cost;
}

// Nonlinear stagewise constraint violations (<= 0 convention) of a rollout.
struct Violations {
  double max = 0.0;
  double sum = 0.0;
  void add(double v) {
    const double over = std::max(0.0, v);
    max = std::max(max, over);
    sum += over;
  }
};

Violations evaluate_violations(const MpccConfig& config, const std::vector<AugmentedState>& states,
                               const std::vector<ControlInput>& inputs, const PlanarCurve& curve,
                               const Corridor* corridor, const ClfParams& clf,
                               const CbfParams& cbf, double slack) {
  Violations viol;
  const double s_r = curve.total_length();
  for (const ControlInput& u : inputs) {
    viol.add(std::abs(u.a) - config.a_max);
    viol.add(std::abs(u.omega) - config.omega_max);
    viol.add(std::abs(u.nudot) - config.nudot_max);
  }
  for (size_t k = 1; k < states.size(); ++k) {
    viol.add(config.v_min - states[k].v);
    viol.add(states[k].v - config.v_max);
    viol.add(-states[k].nu);
    viol.add(states[k].nu - config.nu_max);
    viol.add(-states[k].xi_hat);
    viol.add(states[k].xi_hat - s_r);
  }
  viol.add(-slack);
  const double psi_d = 1.0 - clf.psi * config.dt;
  for (size_t k = 0; k + 1 < states.size(); ++k) {
    const double v0 = lyapunov(states[k].position(), states[k].xi_hat, curve, clf).value;
    const double v1 = lyapunov(states[k + 1].position(), states[k + 1].xi_hat, curve, clf).value;
    viol.add(v1 - psi_d * v0 - slack * config.dt);
  }
  if (corridor) {
    const double au = 1.0 - cbf.alpha_upper * config.dt;
    const double al = 1.0 - cbf.alpha_lower * config.dt;
    for (size_t k = 0; k + 1 < states.size(); ++k) {
      const CbfPair h0 = cbf_pair(states[k], curve, *corridor, cbf);
      const CbfPair h1 = cbf_pair(states[k + 1], curve, *corridor, cbf);
      viol.add(au * h0.upper - h1.upper);
      viol.add(al * h0.lower - h1.lower);
    }
  }
  return viol;
}

// Smallest slack satisfying every stability row exactly; the slack appears
// linearly in those rows only, so the line search can eliminate it instead of
// trusting the QP's linearized value.
double required_slack(const MpccConfig& config, const std::vector<AugmentedState>& states,
                      const PlanarCurve& curve, const ClfParams& clf) {
  const double psi_d = 1.0 - clf.psi * config.dt;
  double worst = 0.0;
  double v0 = lyapunov(states[0].position(), states[0].xi_hat, curve, clf).value;
  for (size_t k = 0; k + 1 < states.size(); ++k) {
    const double v1 = lyapunov(states[k + 1].position(), states[k + 1].xi_hat, curve, clf).value;
    worst = std::max(worst, (v1 - psi_d * v0) / config.dt);
    v0 = v1;
  }
  return worst;
}

}  // namespace

OcpQp assemble_ocp(const MpccConfig& config, const std::vector<AugmentedState>& states,
                   const std::vector<ControlInput>& inputs, const PlanarCurve& curve,
                   const Corridor* corridor, const ClfParams& clf, const CbfParams& cbf) {
  const int N = config.horizon;
  const int nu = 3 * N;
  const int nz = nu + 1;  // input corrections + slack
  const double dt = config.dt;
  const double s_r = curve.total_length();

  const StageEvals ev = evaluate_stages(states, curve, corridor, clf, cbf);

  // State sensitivities S[k] = d x_k / d U.
  std::vector<Eigen::MatrixXd> S(N + 1, Eigen::MatrixXd::Zero(6, nu));
  for (int k = 0; k < N; ++k) {
    const Linearization lin = linearize(states[k], inputs[k], dt);
    S[k + 1] = lin.A * S[k];
    S[k + 1].block(0, 3 * k, 6, 3) += lin.B;
  }

  OcpQp qp;
  qp.horizon_clamped = ev.horizon_clamped;
  qp.hessian = Eigen::MatrixXd::Zero(nz, nz);
  qp.gradient = Eigen::VectorXd::Zero(nz);
  qp.hessian.diagonal().array() += 1e-8;
  qp.hessian(nu, nu) += 2.0 * config.slack_weight;

  // Gauss-Newton contour/lag rows plus the linear progress reward.
  for (int k = 1; k <= N; ++k) {
    const ErrorGradients e = error_gradients(states[k].position(), states[k].xi_hat, curve);
    Eigen::RowVectorXd Jn = e.den_dp.x() * S[k].row(0) + e.den_dp.y() * S[k].row(1) +
                            e.den_dxi * S[k].row(4);
    Eigen::RowVectorXd Jt = e.det_dp.x() * S[k].row(0) + e.det_dp.y() * S[k].row(1) +
                            e.det_dxi * S[k].row(4);
    qp.hessian.topLeftCorner(nu, nu) +=
        2.0 * config.q_c * Jn.transpose() * Jn + 2.0 * config.q_l * Jt.transpose() * Jt;
    qp.gradient.head(nu) += 2.0 * config.q_c * e.e_n * Jn.transpose() +
                            2.0 * config.q_l * e.e_t * Jt.transpose();
    qp.gradient.head(nu) -= config.q_nu * S[k].row(5).transpose();
  }

  const int n_cbf = corridor ? 2 * N : 0;
  const int rows = 6 * N /*input boxes*/ + 6 * N /*state boxes*/ + N /*clf*/ + n_cbf + 1;
  qp.rows = Eigen::MatrixXd::Zero(rows, nz);
  qp.rhs = Eigen::VectorXd::Zero(rows);
  int r = 0;

  // Input boxes around the current iterate.
  for (int k = 0; k < N; ++k) {
    const double vals[3] = {inputs[k].a, inputs[k].omega, inputs[k].nudot};
    const double lims[3] = {config.a_max, config.omega_max, config.nudot_max};
    for (int j = 0; j < 3; ++j) {
      qp.rows(r, 3 * k + j) = 1.0;
      qp.rhs(r++) = lims[j] - vals[j];
      qp.rows(r, 3 * k + j) = -1.0;
      qp.rhs(r++) = lims[j] + vals[j];
    }
  }
  // State boxes (linear in the corrections through the sensitivities).
  for (int k = 1; k <= N; ++k) {
    auto box = [&](int row6, double value, double lo, double hi) {
      qp.rows.block(r, 0, 1, nu) = S[k].row(row6);
      qp.rhs(r++) = hi - value;
      qp.rows.block(r, 0, 1, nu) = -S[k].row(row6);
      qp.rhs(r++) = value - lo;
    };
    box(3, states[k].v, config.v_min, config.v_max);
    box(5, states[k].nu, 0.0, config.nu_max);
    box(4, states[k].xi_hat, 0.0, s_r);
  }
  // Discrete stability rows V(x_{k+1}) <= (1 - psi dt) V(x_k) + delta dt.
  const double psi_d = 1.0 - clf.psi * dt;
  for (int k = 0; k < N; ++k) {
    qp.rows.block(r, 0, 1, nu) =
        ev.V[k + 1].grad.transpose() * S[k + 1] - psi_d * ev.V[k].grad.transpose() * S[k];
    qp.rows(r, nu) = -dt;
    qp.rhs(r++) = psi_d * ev.V[k].value - ev.V[k + 1].value;
  }
  // Discrete barrier rows h(x_{k+1}) >= (1 - alpha dt) h(x_k).
  if (corridor) {
    const double au = 1.0 - cbf.alpha_upper * dt;
    const double al = 1.0 - cbf.alpha_lower * dt;
    for (int k = 0; k < N; ++k) {
      qp.rows.block(r, 0, 1, nu) =
          au * ev.h_up[k].grad.transpose() * S[k] - ev.h_up[k + 1].grad.transpose() * S[k + 1];
      qp.rhs(r++) = ev.h_up[k + 1].value - au * ev.h_up[k].value;
      qp.rows.block(r, 0, 1, nu) =
          al * ev.h_lo[k].grad.transpose() * S[k] - ev.h_lo[k + 1].grad.transpose() * S[k + 1];
      qp.rhs(r++) = ev.h_lo[k + 1].value - al * ev.h_lo[k].value;
    }
  }
  // delta >= 0.
  qp.rows(r, nu) = -1.0;
  qp.rhs(r++) = 0.0;

  return qp;
}

MpccSolution solve(const MpccConfig& config, const AugmentedState& x0, const PlanarCurve& curve,
                   const Corridor* corridor, const ClfParams& clf, const CbfParams& cbf,
                   const std::vector<ControlInput>* warm_start) {
  config.validate();
  const auto t_start = std::chrono::steady_clock::now();
  const int N = config.horizon;
  const int nu = 3 * N;

  std::vector<ControlInput> U(N);
  if (warm_start && static_cast<int>(warm_start->size()) == N) U = *warm_start;
  for (ControlInput& u : U) {
    u.a = std::clamp(u.a, -config.a_max, config.a_max);
    u.omega = std::clamp(u.omega, -config.omega_max, config.omega_max);
    u.nudot = std::clamp(u.nudot, -config.nudot_max, config.nudot_max);
  }

  MpccSolution sol;
  std::vector<AugmentedState> states = rollout(x0, U, config.dt);
  double slack = required_slack(config, states, curve, clf);
  const double mu = 1e6;  // l1 merit weight

  // The stability rows are linear in the shared slack, so the merit
  // evaluates each candidate with its exact minimal slack; only the
  // remaining (barrier, box) violations are penalized.
  auto merit = [&](const std::vector<AugmentedState>& st, const std::vector<ControlInput>& in,
                   double d) {
    return true_cost(config, st, curve, d) +
           mu * evaluate_violations(config, st, in, curve, corridor, clf, cbf, d).sum;
  };

  bool qp_infeasible = false;
  for (int iter = 0; iter < config.sqp_iters; ++iter) {
    sol.sqp_iterations = iter + 1;
    const OcpQp qp = assemble_ocp(config, states, U, curve, corridor, clf, cbf);
    sol.horizon_clamped = sol.horizon_clamped || qp.horizon_clamped;
    const QpResult res = qp_solve(qp.hessian, qp.gradient, qp.rows, qp.rhs, config.qp_tol);
    if (res.status == QpStatus::kInfeasible) {
      qp_infeasible = true;
      break;
    }
    sol.qp_kkt_residual = res.kkt_residual;
    const Eigen::VectorXd du = res.x.head(nu);
    if (du.lpNorm<Eigen::Infinity>() < 1e-10) break;

    const double m0 = merit(states, U, slack);
    double t = 1.0;
    bool accepted = false;
    double m_new = m0;
    for (int bt = 0; bt < 8; ++bt) {
      std::vector<ControlInput> U_try(N);
      for (int k = 0; k < N; ++k) {
        U_try[k] = ControlInput::from_vector(U[k].to_vector() + t * du.segment<3>(3 * k));
      }
      const std::vector<AugmentedState> states_try = rollout(x0, U_try, config.dt);
      const double slack_try = required_slack(config, states_try, curve, clf);
      m_new = merit(states_try, U_try, slack_try);
      if (m_new < m0 - 1e-12) {
        U = std::move(U_try);
        states = states_try;
        slack = slack_try;
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) break;
    if (m0 - m_new < 1e-9 * (1.0 + std::abs(m0))) break;  // merit fixed point
  }

  sol.states = states;
  sol.inputs = U;
  sol.slack = slack;
  const Violations viol =
      evaluate_violations(config, states, U, curve, corridor, clf, cbf, slack);
  sol.kkt_residual = viol.max;
  if (qp_infeasible) {
    sol.status = MpccStatus::kInfeasible;
  } else {
    sol.status = viol.max <= config.qp_tol ? MpccStatus::kOptimal : MpccStatus::kMaxIter;
  }
  sol.solve_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return sol;
}

std::vector<ControlInput> shift_warm_start(const MpccSolution& solution) {
  std::vector<ControlInput> shifted(solution.inputs.size());
  if (solution.inputs.empty()) return shifted;
  for (size_t k = 0; k + 1 < solution.inputs.size(); ++k) shifted[k] = solution.inputs[k + 1];
  shifted.back() = solution.inputs.back();
  return shifted;
}

ControlInput fallback_control(const AugmentedState& state, double a_max) {
  const double sign = state.v > 0.0 ? 1.0 : (state.v < 0.0 ? -1.0 : 0.0);
  return {-a_max * sign, 0.0, 0.0};
}

}  // namespace cmpcc
