#include <doctest.h>

#include <cmath>
#include <random>

#include "cmpcc/mpcc.hpp"

using namespace cmpcc;

namespace {

PlanarCurve x_axis_line(double length = 8.0) {
  return fit_spline({{0.0, 0.0}, {0.5 * length, 0.0}, {length, 0.0}});
}

Corridor constant_corridor(double span, double up, double lo) {
  Corridor c;
  c.xi_start = 0.0;
  c.xi_end = span;
  c.step = 0.05;
  c.coeff_upper = Eigen::VectorXd::Constant(1, up);
  c.coeff_lower = Eigen::VectorXd::Constant(1, lo);
  return c;
}

// Symbolic oracle for the continuous model: the printed f(x) + g(x)u.
Vector6d continuous_oracle(const AugmentedState& s, const ControlInput& u) {
  Vector6d f;
  f << s.v * std::cos(s.theta), s.v * std::sin(s.theta), 0.0, 0.0, s.nu, 0.0;
  Eigen::Matrix<double, 6, 3> g = Eigen::Matrix<double, 6, 3>::Zero();
  g(2, 1) = 1.0;
  g(3, 0) = 1.0;
  g(5, 2) = 1.0;
  return f + g * u.to_vector();
}

}  // namespace

TEST_CASE("dynamics_continuous matches the printed model") {
  AugmentedState s;
  s.v = 1.0;
  s.nu = 0.7;
  const Vector6d d = dynamics_continuous(s, ControlInput{});
  CHECK(d(0) == 1.0);
  CHECK(d(1) == 0.0);
  CHECK(d(2) == 0.0);
  CHECK(d(3) == 0.0);
  CHECK(d(4) == 0.7);
  CHECK(d(5) == 0.0);

  const Vector6d accel = dynamics_continuous(AugmentedState{}, ControlInput{1.0, 0.0, 0.0});
  CHECK(accel.norm() == 1.0);
  CHECK(accel(3) == 1.0);

  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int i = 0; i < 100; ++i) {
    AugmentedState st{u(rng), u(rng), 0.5 * u(rng), u(rng), std::abs(u(rng)), std::abs(u(rng))};
    const ControlInput in{u(rng), u(rng), u(rng)};
    CHECK((dynamics_continuous(st, in) - continuous_oracle(st, in)).norm() < 1e-14);
  }
}

TEST_CASE("dynamics_discrete: straight drive, pure rotation, progress rows") {
  AugmentedState s;
  s.v = 1.0;
  const AugmentedState next = dynamics_discrete(s, ControlInput{}, 0.1);
  CHECK(next.x == doctest::Approx(0.1).epsilon(1e-9));
  CHECK(next.y == doctest::Approx(0.0).epsilon(1e-12));

  AugmentedState r;
  const AugmentedState spun = dynamics_discrete(r, ControlInput{0.0, M_PI, 0.0}, 0.1);
  CHECK(spun.theta == doctest::Approx(M_PI * 0.1).epsilon(1e-12));

  AugmentedState p;
  p.xi_hat = 0.4;
  p.nu = 1.2;
  const AugmentedState q = dynamics_discrete(p, ControlInput{0.0, 0.0, 0.5}, 0.1);
  CHECK(q.xi_hat == 0.4 + 1.2 * 0.1);  // exact printed update
  CHECK(q.nu == 1.2 + 0.5 * 0.1);

  AugmentedState w;
  w.theta = 3.1;
  const AugmentedState wrapped = dynamics_discrete(w, ControlInput{0.0, 1.0, 0.0}, 0.2);
  CHECK(wrapped.theta <= M_PI);
  CHECK(wrapped.theta >= -M_PI);
}

TEST_CASE("dynamics_discrete: halving dt cuts the global error by at least 4x") {
  const ControlInput u{0.3, 0.8, 0.1};
  auto integrate = [&](double dt, double horizon) {
    AugmentedState s;
    s.v = 0.5;
    const int n = static_cast<int>(std::round(horizon / dt));
    for (int i = 0; i < n; ++i) s = dynamics_discrete(s, u, dt);
    return s;
  };
  const AugmentedState ref = integrate(1e-5, 1.6);
  const AugmentedState coarse = integrate(0.1, 1.6);
  const AugmentedState fine = integrate(0.05, 1.6);
  // The progress pair evolves by the exact printed Euler updates, so the
  // convergence claim concerns the RK4-integrated pose/velocity block.
  const double err_coarse = (coarse.to_vector() - ref.to_vector()).head(4).norm();
  const double err_fine = (fine.to_vector() - ref.to_vector()).head(4).norm();
  REQUIRE(err_coarse > 0.0);
  CHECK(err_coarse / std::max(err_fine, 1e-16) >= 3.9);
}

TEST_CASE("dynamics_discrete_clamped flags and clamps bound hits") {
  StateBounds bounds{0.0, 2.0, 2.0, 5.0};
  AugmentedState s;
  s.nu = 0.05;
  bool clamped = false;
  const AugmentedState next =
      dynamics_discrete_clamped(s, ControlInput{0.0, 0.0, -2.0}, 0.1, bounds, &clamped);
  CHECK(clamped);
  CHECK(next.nu == 0.0);
}

TEST_CASE("linearize matches finite differences") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  int checked = 0;
  for (int trial = 0; trial < 100; ++trial) {
    AugmentedState s{u(rng), u(rng), 2.0 * u(rng), 1.0 + u(rng), std::abs(u(rng)),
                     std::abs(u(rng))};
    if (std::abs(s.theta) > 2.9) continue;  // keep away from the wrap seam
    const ControlInput in{u(rng), u(rng), u(rng)};
    const double dt = 0.1;
    const Linearization lin = linearize(s, in, dt);
    const double h = 1e-6;
    for (int k = 0; k < 6; ++k) {
      Vector6d plus = s.to_vector(), minus = s.to_vector();
      plus(k) += h;
      minus(k) -= h;
      const Vector6d fd = (dynamics_discrete(AugmentedState::from_vector(plus), in, dt).to_vector() -
                           dynamics_discrete(AugmentedState::from_vector(minus), in, dt).to_vector()) /
                          (2.0 * h);
      CHECK((lin.A.col(k) - fd).norm() <= 1e-4 * std::max(1.0, fd.norm()));
    }
    for (int k = 0; k < 3; ++k) {
      Eigen::Vector3d plus = in.to_vector(), minus = in.to_vector();
      plus(k) += h;
      minus(k) -= h;
      const Vector6d fd =
          (dynamics_discrete(s, ControlInput::from_vector(plus), dt).to_vector() -
           dynamics_discrete(s, ControlInput::from_vector(minus), dt).to_vector()) /
          (2.0 * h);
      CHECK((lin.B.col(k) - fd).norm() <= 1e-4 * std::max(1.0, fd.norm()));
    }
    ++checked;
  }
  CHECK(checked >= 90);
}

TEST_CASE("assemble_ocp: rhs at zero correction equals the nonlinear residuals") {
  const PlanarCurve line = x_axis_line();
  const Corridor corridor = constant_corridor(8.0, 0.35, 0.35);
  MpccConfig config;
  config.horizon = 5;
  ClfParams clf;
  CbfParams cbf;

  AugmentedState x0;
  x0.y = 0.08;
  x0.v = 0.6;
  x0.nu = 0.6;
  std::vector<ControlInput> U(config.horizon, ControlInput{0.1, -0.05, 0.1});
  std::vector<AugmentedState> states(config.horizon + 1);
  states[0] = x0;
  for (int k = 0; k < config.horizon; ++k) {
    states[k + 1] = dynamics_discrete(states[k], U[k], config.dt);
  }
  const OcpQp qp = assemble_ocp(config, states, U, line, &corridor, clf, cbf);
  REQUIRE(qp.rows.rows() == 6 * 5 + 6 * 5 + 5 + 2 * 5 + 1);

  // CLF rows live right after the 12N box rows: rhs must equal
  // (1 - psi dt) V_k - V_{k+1} evaluated on the rollout.
  const int clf_offset = 12 * config.horizon;
  for (int k = 0; k < config.horizon; ++k) {
    const double v0 = lyapunov(states[k].position(), states[k].xi_hat, line, clf).value;
    const double v1 = lyapunov(states[k + 1].position(), states[k + 1].xi_hat, line, clf).value;
    CHECK(qp.rhs(clf_offset + k) ==
          doctest::Approx((1.0 - clf.psi * config.dt) * v0 - v1).epsilon(1e-12));
  }
  const int cbf_offset = clf_offset + config.horizon;
  for (int k = 0; k < config.horizon; ++k) {
    const CbfPair h0 = cbf_pair(states[k], line, corridor, cbf);
    const CbfPair h1 = cbf_pair(states[k + 1], line, corridor, cbf);
    CHECK(qp.rhs(cbf_offset + 2 * k) ==
          doctest::Approx(h1.upper - (1.0 - cbf.alpha_upper * config.dt) * h0.upper)
              .epsilon(1e-12));
    CHECK(qp.rhs(cbf_offset + 2 * k + 1) ==
          doctest::Approx(h1.lower - (1.0 - cbf.alpha_lower * config.dt) * h0.lower)
              .epsilon(1e-12));
  }
}

TEST_CASE("solve: wide straight corridor tracks tightly and saturates progress") {
  const PlanarCurve line = x_axis_line();
  const Corridor corridor = constant_corridor(8.0, 0.35, 0.35);
  MpccConfig config;
  ClfParams clf;
  CbfParams cbf;

  AugmentedState x;
  x.v = 0.0;
  x.nu = 0.0;
  std::vector<ControlInput> warm;
  MpccSolution sol;
  // Closed-loop rollout oracle: progress must be monotone, contour error
  // small, and the progress rate must approach its bound.
  double prev_xi = 0.0;
  for (int cycle = 0; cycle < 30; ++cycle) {
    sol = solve(config, x, line, &corridor, clf, cbf, warm.empty() ? nullptr : &warm);
    REQUIRE(sol.status == MpccStatus::kOptimal);
    for (const AugmentedState& s : sol.states) {
      CHECK(contour_lag_errors(s.position(), s.xi_hat, line).contour < 0.01);
    }
    for (size_t k = 1; k < sol.states.size(); ++k) {
      CHECK(sol.states[k].xi_hat >= sol.states[k - 1].xi_hat - 1e-12);
    }
    x = sol.states[1];
    CHECK(x.xi_hat >= prev_xi - 1e-12);
    prev_xi = x.xi_hat;
    warm = shift_warm_start(sol);
  }
  CHECK(x.nu > 0.9 * config.nu_max);
  CHECK(x.v > 0.9 * config.nu_max);
}

TEST_CASE("solve: displaced start stays inside the corridor barriers") {
  const PlanarCurve line = x_axis_line();
  const Corridor corridor = constant_corridor(8.0, 0.3, 0.3);
  MpccConfig config;
  ClfParams clf;
  CbfParams cbf;
  cbf.r_o = 0.05;

  AugmentedState x;
  x.y = 0.2;
  x.v = 0.5;
  x.nu = 0.5;
  const MpccSolution sol = solve(config, x, line, &corridor, clf, cbf);
  REQUIRE(sol.status == MpccStatus::kOptimal);
  for (const AugmentedState& s : sol.states) {
    const CbfPair h = cbf_pair(s, line, corridor, cbf);
    CHECK(h.upper >= -1e-9);
    CHECK(h.lower >= -1e-9);
  }
  CHECK(sol.kkt_residual <= config.qp_tol);
}

TEST_CASE("solve: zero progress bound holds station with negligible slack") {
  const PlanarCurve line = x_axis_line();
  const Corridor corridor = constant_corridor(8.0, 0.35, 0.35);
  MpccConfig config;
  config.nu_max = 0.0;
  ClfParams clf;
  CbfParams cbf;

  AugmentedState x;
  x.x = 1.0;
  x.xi_hat = 1.0;
  const MpccSolution sol = solve(config, x, line, &corridor, clf, cbf);
  REQUIRE(sol.status == MpccStatus::kOptimal);
  CHECK(std::abs(sol.slack) < 1e-6);
  for (const AugmentedState& s : sol.states) {
    CHECK(s.nu == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(s.xi_hat == doctest::Approx(1.0).epsilon(1e-9));
    CHECK((s.position() - Vec2(1.0, 0.0)).norm() < 0.01);
  }
}

TEST_CASE("solve: warm starting a repeated problem never takes more iterations") {
  const PlanarCurve line = x_axis_line();
  const Corridor corridor = constant_corridor(8.0, 0.35, 0.35);
  MpccConfig config;
  ClfParams clf;
  CbfParams cbf;

  AugmentedState x;
  x.y = 0.1;
  x.v = 0.8;
  x.nu = 0.8;
  const MpccSolution cold = solve(config, x, line, &corridor, clf, cbf);
  REQUIRE(cold.status == MpccStatus::kOptimal);
  const std::vector<ControlInput> warm = cold.inputs;
  const MpccSolution hot = solve(config, x, line, &corridor, clf, cbf, &warm);
  REQUIRE(hot.status == MpccStatus::kOptimal);
  CHECK(hot.sqp_iterations <= cold.sqp_iterations);
}

TEST_CASE("solve: stagewise residuals meet the tolerance on feasible instances") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const PlanarCurve line = x_axis_line();
  const Corridor corridor = constant_corridor(8.0, 0.35, 0.35);
  MpccConfig config;
  ClfParams clf;
  CbfParams cbf;
  for (int trial = 0; trial < 5; ++trial) {
    AugmentedState x;
    x.x = 1.0 + u(rng);
    x.y = 0.1 * u(rng);
    x.theta = 0.2 * u(rng);
    x.v = 0.5 + 0.4 * u(rng);
    x.nu = x.v;
    x.xi_hat = x.x;
    const MpccSolution sol = solve(config, x, line, &corridor, clf, cbf);
    REQUIRE(sol.status == MpccStatus::kOptimal);
    CHECK(sol.kkt_residual <= 1e-6);
  }
}

TEST_CASE("solve: impossible barrier geometry reports a non-optimal status") {
  const PlanarCurve line = x_axis_line();
  // Zero-width corridor with the robot pinned at v_max: the barriers are
  // negative and cannot be raised, so the stage rows conflict.
  const Corridor corridor = constant_corridor(8.0, 0.0, 0.0);
  MpccConfig config;
  ClfParams clf;
  CbfParams cbf;

  AugmentedState x;
  x.x = 1.0;
  x.xi_hat = 1.0;
  x.v = 2.0;
  x.nu = 1.0;
  const MpccSolution sol = solve(config, x, line, &corridor, clf, cbf);
  CHECK(sol.status != MpccStatus::kOptimal);
}

TEST_CASE("fallback_control brakes toward zero and freezes progress") {
  AugmentedState s;
  s.v = 1.2;
  const ControlInput u = fallback_control(s, 2.0);
  CHECK(u.a == -2.0);
  CHECK(u.omega == 0.0);
  CHECK(u.nudot == 0.0);
  s.v = 0.0;
  CHECK(fallback_control(s, 2.0).a == 0.0);
}
