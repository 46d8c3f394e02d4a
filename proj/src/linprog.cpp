#include "cmpcc/linprog.hpp"

#include <limits>
#include <stdexcept>
#include <vector>

namespace cmpcc {

LpResult simplex_maximize(const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                          const Eigen::VectorXd& c) {
  const int m = static_cast<int>(A.rows());
  const int n = static_cast<int>(A.cols());
  if (b.minCoeff() < 0.0) {
    throw std::invalid_argument("simplex_maximize: requires b >= 0");
  }

  // Tableau with slack columns; row m holds the reduced costs.
  Eigen::MatrixXd t(m + 1, n + m + 1);
  t.setZero();
  t.block(0, 0, m, n) = A;
  t.block(0, n, m, m).setIdentity();
  t.col(n + m).head(m) = b;
  t.row(m).head(n) = -c.transpose();

  std::vector<int> basis(m);
  for (int i = 0; i < m; ++i) basis[i] = n + i;

  const double eps = 1e-10;
  const int max_iters = 50 * (m + n) + 1000;
  const int bland_after = 5 * (m + n);
  LpResult result;

  for (int iter = 0; iter < max_iters; ++iter) {
    // Entering column.
    int pivot_col = -1;
    if (iter < bland_after) {
      double best = -eps;
      for (int j = 0; j < n + m; ++j) {
        if (t(m, j) < best) {
          best = t(m, j);
          pivot_col = j;
        }
      }
    } else {
      for (int j = 0; j < n + m; ++j) {
        if (t(m, j) < -eps) {
          pivot_col = j;
          break;
        }
      }
    }
    if (pivot_col < 0) {
      result.status = LpStatus::kOptimal;
      result.iterations = iter;
      break;
    }

    // Leaving row by minimum ratio; ties to the smallest basis index (Bland).
    int pivot_row = -1;
    double best_ratio = std::numeric_limits<double>::infinity();
    for (int i = 0; i < m; ++i) {
      const double a = t(i, pivot_col);
      if (a > eps) {
        const double ratio = t(i, n + m) / a;
        if (ratio < best_ratio - eps ||
            (ratio < best_ratio + eps && (pivot_row < 0 || basis[i] < basis[pivot_row]))) {
          best_ratio = ratio;
          pivot_row = i;
        }
      }
    }
    if (pivot_row < 0) {
      result.status = LpStatus::kUnbounded;
      result.iterations = iter;
      return result;
    }

    t.row(pivot_row) /= t(pivot_row, pivot_col);
    for (int i = 0; i <= m; ++i) {
      if (i == pivot_row) continue;
      const double f = t(i, pivot_col);
      if (f != 0.0) t.row(i) -= f * t.row(pivot_row);
    }
    basis[pivot_row] = pivot_col;
  }

  result.x = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < m; ++i) {
    if (basis[i] < n) result.x(basis[i]) = t(i, n + m);
  }
  result.objective = c.dot(result.x);
  return result;
}

}  // namespace cmpcc
