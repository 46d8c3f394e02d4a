#pragma once

#include <Eigen/Dense>

namespace cmpcc {

enum class QpStatus { kOptimal, kInfeasible, kMaxIterations };

struct QpResult {
  QpStatus status = QpStatus::kMaxIterations;
  Eigen::VectorXd x;
  Eigen::VectorXd duals;  // one multiplier per inequality row, >= 0
  double objective = 0.0;
  double kkt_residual = 0.0;
  int iterations = 0;
};

/// Solves min 1/2 x'Hx + g'x subject to A x <= b with a dual active-set
/// method (Goldfarb-Idnani walk from the unconstrained optimum). H is made
/// positive definite by shifting its minimum eigenvalue to at least 1e-8
/// before solving. Reports KKT residuals of the returned point.
QpResult qp_solve(const Eigen::MatrixXd& H, const Eigen::VectorXd& g,
                  const Eigen::MatrixXd& A, const Eigen::VectorXd& b, double tol = 1e-9);

}  // namespace cmpcc
