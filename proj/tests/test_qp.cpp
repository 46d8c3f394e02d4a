#include <doctest.h>

#include <functional>
#include <random>

#include "cmpcc/qp.hpp"

using namespace cmpcc;

namespace {

// Active-set enumeration oracle: try every subset of constraints as the
// active set, solve the equality-constrained KKT system, keep the best
// feasible dual-feasible candidate. Exponential, fine for small m.
struct OracleSolution {
  bool feasible = false;
  double objective = std::numeric_limits<double>::infinity();
  Eigen::VectorXd x;
};

OracleSolution qp_oracle(const Eigen::MatrixXd& H, const Eigen::VectorXd& g,
                         const Eigen::MatrixXd& A, const Eigen::VectorXd& b) {
  const int n = static_cast<int>(g.size());
  const int m = static_cast<int>(A.rows());
  OracleSolution best;
  for (int mask = 0; mask < (1 << m); ++mask) {
    std::vector<int> act;
    for (int i = 0; i < m; ++i) {
      if (mask & (1 << i)) act.push_back(i);
    }
    if (static_cast<int>(act.size()) > n) continue;
    const int q = static_cast<int>(act.size());
    Eigen::MatrixXd kkt(n + q, n + q);
    kkt.setZero();
    kkt.topLeftCorner(n, n) = H;
    Eigen::VectorXd rhs(n + q);
    rhs.head(n) = -g;
    for (int k = 0; k < q; ++k) {
      kkt.block(n + k, 0, 1, n) = A.row(act[k]);
      kkt.block(0, n + k, n, 1) = A.row(act[k]).transpose();
      rhs(n + k) = b(act[k]);
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(kkt);
    if (!lu.isInvertible()) continue;
    const Eigen::VectorXd sol = lu.solve(rhs);
    const Eigen::VectorXd x = sol.head(n);
    const Eigen::VectorXd u = sol.tail(q);
    if (q > 0 && u.minCoeff() < -1e-9) continue;  // dual infeasible
    if (m > 0 && ((A * x - b).array() > 1e-8).any()) continue;
    const double obj = 0.5 * x.dot(H * x) + g.dot(x);
    if (obj < best.objective) {
      best.feasible = true;
      best.objective = obj;
      best.x = x;
    }
  }
  return best;
}

}  // namespace

TEST_CASE("qp_solve: unconstrained optimum is -H^{-1} g") {
  Eigen::MatrixXd H(2, 2);
  H << 4, 1, 1, 3;
  Eigen::VectorXd g(2);
  g << -1, 2;
  const QpResult r = qp_solve(H, g, Eigen::MatrixXd(0, 2), Eigen::VectorXd(0));
  REQUIRE(r.status == QpStatus::kOptimal);
  const Eigen::VectorXd expect = -H.ldlt().solve(g);
  CHECK((r.x - expect).norm() < 1e-8);
}

TEST_CASE("qp_solve: single active constraint matches the closed-form projection") {
  // min 1/2 ||x - c||^2 s.t. a'x <= b with c violating the constraint:
  // optimum is the projection c - (a'c - b)/||a||^2 * a.
  Eigen::MatrixXd H = Eigen::MatrixXd::Identity(3, 3);
  Eigen::VectorXd c(3);
  c << 2, 1, -1;
  Eigen::VectorXd g = -c;
  Eigen::MatrixXd A(1, 3);
  A << 1, 1, 0;
  Eigen::VectorXd b(1);
  b << 1;
  const QpResult r = qp_solve(H, g, A, b);
  REQUIRE(r.status == QpStatus::kOptimal);
  const Eigen::VectorXd a = A.row(0).transpose();
  const Eigen::VectorXd expect = c - (a.dot(c) - b(0)) / a.squaredNorm() * a;
  CHECK((r.x - expect).norm() < 1e-8);
  CHECK(r.kkt_residual < 1e-6);
}

TEST_CASE("qp_solve: detects infeasible constraint pairs") {
  Eigen::MatrixXd H = Eigen::MatrixXd::Identity(1, 1);
  Eigen::VectorXd g(1);
  g << 0;
  Eigen::MatrixXd A(2, 1);
  A << 1, -1;  // x <= -1 and -x <= -2 i.e. x >= 2
  Eigen::VectorXd b(2);
  b << -1, -2;
  CHECK(qp_solve(H, g, A, b).status == QpStatus::kInfeasible);
}

TEST_CASE("qp_solve: 200 random dense QPs match the enumeration oracle to 1e-6") {
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> gauss(0.0, 1.0);
  int solved = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 9);       // 2..10 vars
    const int m = 1 + static_cast<int>(rng() % 12);      // 1..12 rows
    Eigen::MatrixXd M(n, n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) M(i, j) = gauss(rng);
    }
    Eigen::MatrixXd H = M.transpose() * M + 0.1 * Eigen::MatrixXd::Identity(n, n);
    Eigen::VectorXd g(n);
    for (int i = 0; i < n; ++i) g(i) = gauss(rng);
    Eigen::MatrixXd A(m, n);
    Eigen::VectorXd x0(n);
    for (int i = 0; i < n; ++i) x0(i) = 0.3 * gauss(rng);
    Eigen::VectorXd b(m);
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < n; ++j) A(i, j) = gauss(rng);
      b(i) = A.row(i).dot(x0) + std::abs(gauss(rng));  // x0 is strictly feasible
    }
    const QpResult r = qp_solve(H, g, A, b);
    REQUIRE(r.status == QpStatus::kOptimal);
    const OracleSolution oracle = qp_oracle(H, g, A, b);
    REQUIRE(oracle.feasible);
    CHECK(std::abs(r.objective - oracle.objective) < 1e-6);
    CHECK(r.kkt_residual < 1e-6);
    ++solved;
  }
  CHECK(solved == 200);
}

TEST_CASE("qp_solve: scaling the target preserves the active set on conic feasible sets") {
  // Projection onto a cone is positively homogeneous, so for homogeneous
  // constraints A x <= 0 the active set is invariant to scaling the tracked
  // nominal. (On general polytopes scaling can cross faces, so the property
  // is stated for the unchanged-cone geometry.)
  std::mt19937_64 rng(55);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int trial = 0; trial < 40; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 3);
    const int m = 2 + static_cast<int>(rng() % 4);
    Eigen::MatrixXd A(m, n);
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < n; ++j) A(i, j) = gauss(rng);
    }
    const Eigen::VectorXd b = Eigen::VectorXd::Zero(m);
    Eigen::VectorXd c(n);
    for (int j = 0; j < n; ++j) c(j) = gauss(rng);
    const Eigen::MatrixXd H = Eigen::MatrixXd::Identity(n, n);
    auto active_rows = [&](const QpResult& r) {
      std::vector<int> act;
      for (int i = 0; i < m; ++i) {
        if (std::abs(A.row(i).dot(r.x)) < 1e-7 * std::max(1.0, r.x.norm())) act.push_back(i);
      }
      return act;
    };
    const QpResult r1 = qp_solve(H, Eigen::VectorXd(-c), A, b);
    const QpResult r2 = qp_solve(H, Eigen::VectorXd(-5.0 * c), A, b);
    REQUIRE(r1.status == QpStatus::kOptimal);
    REQUIRE(r2.status == QpStatus::kOptimal);
    CHECK((r2.x - 5.0 * r1.x).norm() < 1e-6 * std::max(1.0, r1.x.norm()));
    CHECK(active_rows(r1) == active_rows(r2));
  }
}
