#pragma once

#include <Eigen/Dense>
#include <cmath>

namespace cmpcc {

using Vector6d = Eigen::Matrix<double, 6, 1>;

inline double wrap_angle(double a) {
  a = std::fmod(a + M_PI, 2.0 * M_PI);
  if (a < 0.0) a += 2.0 * M_PI;
  return a - M_PI;
}

/// Unicycle state extended with the virtual progress pair (xi_hat, nu).
struct AugmentedState {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;   // rad, wrapped to [-pi, pi]
  double v = 0.0;       // m/s
  double xi_hat = 0.0;  // m, progress along the reference
  double nu = 0.0;      // m/s, progress rate

  Eigen::Vector2d position() const { return {x, y}; }
  Eigen::Vector2d heading() const { return {std::cos(theta), std::sin(theta)}; }

  Vector6d to_vector() const {
    Vector6d z;
    z << x, y, theta, v, xi_hat, nu;
    return z;
  }
  static AugmentedState from_vector(const Vector6d& z) {
    return {z(0), z(1), z(2), z(3), z(4), z(5)};
  }
};

/// Control input (a, omega, nudot).
struct ControlInput {
  double a = 0.0;      // m/s^2
  double omega = 0.0;  // rad/s
  double nudot = 0.0;  // m/s^2

  Eigen::Vector3d to_vector() const { return {a, omega, nudot}; }
  static ControlInput from_vector(const Eigen::Vector3d& u) { return {u(0), u(1), u(2)}; }
};

}  // namespace cmpcc
