#pragma once

#include <optional>
#include <vector>

#include "cmpcc/clf_cbf.hpp"
#include "cmpcc/corridor.hpp"
#include "cmpcc/geometry.hpp"
#include "cmpcc/state.hpp"

namespace cmpcc {

struct MpccConfig {
  int horizon = 20;  // N
  double dt = 0.1;   // s
  double q_c = 5.0;
  double q_l = 500.0;  // keep q_l >= 10 q_c so the lag stays near zero
  double q_nu = 1.0;
  double slack_weight = 1000.0;  // p
  double nu_max = 2.0;
  // Progress acceleration bound. Applied as [-nudot_max, nudot_max]: the
  // one-sided interval printed with the OCP would forbid slowing progress,
  // which is required near infeasibility.
  double nudot_max = 2.0;
  double a_max = 2.0;
  double omega_max = 3.0;
  double v_min = 0.0;
  double v_max = 2.0;
  int sqp_iters = 30;
  double qp_tol = 1e-6;

  void validate() const;
};

enum class MpccStatus { kOptimal, kMaxIter, kInfeasible };

const char* to_string(MpccStatus status);

struct MpccSolution {
  MpccStatus status = MpccStatus::kMaxIter;
  std::vector<AugmentedState> states;  // horizon + 1
  std::vector<ControlInput> inputs;    // horizon
  double slack = 0.0;
  /// Max stagewise constraint violation of the returned trajectory.
  double kkt_residual = 0.0;
  /// KKT residual reported by the last inner QP.
  double qp_kkt_residual = 0.0;
  int sqp_iterations = 0;
  double solve_time = 0.0;  // s, wall clock
  /// Corridor interval ended before the horizon reach; widths were clamped.
  bool horizon_clamped = false;
};

/// Continuous augmented unicycle dynamics f(x) + g(x) u.
Vector6d dynamics_continuous(const AugmentedState& state, const ControlInput& input);

/// Discrete step: RK4 on the pose/velocity block, exact Euler rows for the
/// virtual progress pair, theta wrapped.
AugmentedState dynamics_discrete(const AugmentedState& state, const ControlInput& input,
                                 double dt);

struct StateBounds {
  double v_min = 0.0;
  double v_max = 2.0;
  double nu_max = 2.0;
  double s_r = 0.0;
};

/// Discrete step with v, nu, xi clamped into bounds; sets *clamped when a
/// bound was hit.
AugmentedState dynamics_discrete_clamped(const AugmentedState& state, const ControlInput& input,
                                         double dt, const StateBounds& bounds, bool* clamped);

struct Linearization {
  Eigen::Matrix<double, 6, 6> A;
  Eigen::Matrix<double, 6, 3> B;
};

/// Jacobians of dynamics_discrete at (state, input).
Linearization linearize(const AugmentedState& state, const ControlInput& input, double dt);

/// Condensed QP over (input corrections, slack) for one SQP iteration;
/// exposed for white-box tests of the OCP assembly.
struct OcpQp {
  Eigen::MatrixXd hessian;
  Eigen::VectorXd gradient;
  Eigen::MatrixXd rows;  // rows * z <= rhs
  Eigen::VectorXd rhs;
  bool horizon_clamped = false;
};

OcpQp assemble_ocp(const MpccConfig& config, const std::vector<AugmentedState>& rollout,
                   const std::vector<ControlInput>& inputs, const PlanarCurve& curve,
                   const Corridor* corridor, const ClfParams& clf, const CbfParams& cbf);

/// Solves the contouring OCP by Gauss-Newton SQP with an l1 merit line
/// search. Passing corridor = nullptr drops the barrier rows (the plain
/// contouring baseline). Warm starts reuse the given input sequence as-is.
MpccSolution solve(const MpccConfig& config, const AugmentedState& x0, const PlanarCurve& curve,
                   const Corridor* corridor, const ClfParams& clf, const CbfParams& cbf,
                   const std::vector<ControlInput>* warm_start = nullptr);

/// Previous solution shifted by one stage (last input repeated).
std::vector<ControlInput> shift_warm_start(const MpccSolution& solution);

/// Maximal braking used when the solver reports infeasibility; callers set
/// the Z flag alongside it.
ControlInput fallback_control(const AugmentedState& state, double a_max);

}  // namespace cmpcc
