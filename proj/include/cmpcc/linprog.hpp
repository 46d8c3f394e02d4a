#pragma once

#include <Eigen/Dense>

namespace cmpcc {

enum class LpStatus { kOptimal, kUnbounded, kIterationLimit };

struct LpResult {
  LpStatus status = LpStatus::kIterationLimit;
  Eigen::VectorXd x;
  double objective = 0.0;
  int iterations = 0;
};

/// Maximizes c'x subject to A x <= b, x >= 0 with a dense primal simplex.
///
/// Requires b >= 0 (the slack basis is then feasible, which holds for every
/// corridor fit since raycast distances are nonnegative). Dantzig pricing
/// with a switch to Bland's rule after 5(m+n) iterations guards against
/// cycling.
LpResult simplex_maximize(const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                          const Eigen::VectorXd& c);

}  // namespace cmpcc
