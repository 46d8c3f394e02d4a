#include "cmpcc/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace cmpcc {

namespace {

double kkt_residual_of(const Eigen::MatrixXd& H, const Eigen::VectorXd& g,
                       const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                       const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
  double r = (H * x + g + A.transpose() * u).lpNorm<Eigen::Infinity>();
  if (A.rows() > 0) {
    const Eigen::VectorXd s = A * x - b;
    r = std::max(r, s.maxCoeff());                              // primal feasibility
    r = std::max(r, (u.array() * s.array()).abs().maxCoeff());  // complementarity
    r = std::max(r, -u.minCoeff());                             // dual feasibility
  }
  return r;
}

}  // namespace

QpResult qp_solve(const Eigen::MatrixXd& H_in, const Eigen::VectorXd& g,
                  const Eigen::MatrixXd& A, const Eigen::VectorXd& b, double tol) {
  const int n = static_cast<int>(g.size());
  const int m = static_cast<int>(A.rows());

  // Positive definiteness: cheap Cholesky probe first, exact minimum
  // eigenvalue shift to 1e-8 only when it fails.
  Eigen::MatrixXd H = 0.5 * (H_in + H_in.transpose());
  Eigen::LLT<Eigen::MatrixXd> llt(H);
  if (llt.info() != Eigen::Success) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H, Eigen::EigenvaluesOnly);
    const double lmin = es.eigenvalues().minCoeff();
    if (lmin < 1e-8) H.diagonal().array() += 1e-8 - lmin;
    llt.compute(H);
  }

  QpResult result;
  result.x = llt.solve(-g);
  result.duals = Eigen::VectorXd::Zero(m);
  if (m == 0) {
    result.status = QpStatus::kOptimal;
    result.objective = 0.5 * result.x.dot(H_in * result.x) + g.dot(result.x);
    result.kkt_residual = (H * result.x + g).lpNorm<Eigen::Infinity>();
    return result;
  }

  // Row scaling keeps violations commensurate.
  Eigen::MatrixXd An = A;
  Eigen::VectorXd bn = b;
  Eigen::VectorXd row_scale(m);
  for (int i = 0; i < m; ++i) {
    const double s = std::max(A.row(i).norm(), 1e-12);
    row_scale(i) = s;
    An.row(i) /= s;
    bn(i) /= s;
  }

  std::vector<int> active;
  Eigen::VectorXd u_active(0);
  // Cached H^{-1} a_i columns for the active rows; the Schur system of the
  // dual walk is assembled from them instead of refactoring the full KKT.
  Eigen::MatrixXd Y(n, 0);
  std::vector<char> in_active(m, 0);
  const int max_iters = 20 * (m + n) + 200;

  auto drop_active = [&](int k) {
    const int q = static_cast<int>(active.size());
    active.erase(active.begin() + k);
    Eigen::VectorXd u2(q - 1);
    Eigen::MatrixXd Y2(n, q - 1);
    int w = 0;
    for (int i = 0; i < q; ++i) {
      if (i == k) continue;
      u2(w) = u_active(i);
      Y2.col(w) = Y.col(i);
      ++w;
    }
    u_active = u2;
    Y = Y2;
  };

  for (int iter = 0; iter < max_iters; ++iter) {
    result.iterations = iter;

    int p = -1;
    double worst = tol;
    const Eigen::VectorXd slack = An * result.x - bn;
    for (int i = 0; i < m; ++i) {
      if (in_active[i]) continue;
      if (slack(i) > worst) {
        worst = slack(i);
        p = i;
      }
    }
    if (p < 0) {
      result.status = QpStatus::kOptimal;
      break;
    }

    const Eigen::VectorXd a_p = An.row(p).transpose();
    const Eigen::VectorXd y_p = llt.solve(a_p);

    double u_p = 0.0;
    bool resolved = false;
    while (!resolved) {
      const int q = static_cast<int>(active.size());
      // Directions from the bordered system via the Schur complement
      //   G r = -Aw y_p,  z = -(y_p + Y r),  G_ij = a_i' H^{-1} a_j.
      Eigen::VectorXd r(q), z;
      if (q > 0) {
        Eigen::MatrixXd Aw(q, n);
        for (int k = 0; k < q; ++k) Aw.row(k) = An.row(active[k]);
        const Eigen::MatrixXd G = Aw * Y;
        const Eigen::VectorXd rhs = -Aw * y_p;
        r = Eigen::LDLT<Eigen::MatrixXd>(0.5 * (G + G.transpose())).solve(rhs);
        if (!((G * r - rhs).lpNorm<Eigen::Infinity>() <
              1e-8 * std::max(1.0, rhs.lpNorm<Eigen::Infinity>()))) {
          // Nearly dependent active normals; fall back to the full KKT.
          Eigen::MatrixXd kkt(n + q, n + q);
          kkt.setZero();
          kkt.topLeftCorner(n, n) = H;
          Eigen::VectorXd full_rhs(n + q);
          full_rhs.head(n) = -a_p;
          full_rhs.tail(q).setZero();
          for (int k = 0; k < q; ++k) {
            kkt.block(n + k, 0, 1, n) = Aw.row(k);
            kkt.block(0, n + k, n, 1) = Aw.row(k).transpose();
          }
          const Eigen::VectorXd sol = Eigen::FullPivLU<Eigen::MatrixXd>(kkt).solve(full_rhs);
          z = sol.head(n);
          r = sol.tail(q);
        } else {
          z = -(y_p + Y * r);
        }
      } else {
        r.resize(0);
        z = -y_p;
      }

      const double descent = a_p.dot(z);
      const double viol = a_p.dot(result.x) - bn(p);

      double t_dual = std::numeric_limits<double>::infinity();
      int blocker = -1;
      for (int k = 0; k < q; ++k) {
        if (r(k) < -1e-12) {
          const double t = -u_active(k) / r(k);
          if (t < t_dual) {
            t_dual = t;
            blocker = k;
          }
        }
      }

      const bool can_tighten = descent < -1e-12;
      const double t_full =
          can_tighten ? -viol / descent : std::numeric_limits<double>::infinity();

      if (!can_tighten && blocker < 0) {
        result.status = QpStatus::kInfeasible;
        result.kkt_residual = kkt_residual_of(H, g, An, bn, result.x, result.duals);
        return result;
      }

      const double t = std::min(t_full, t_dual);
      if (std::isfinite(t) && t > 0.0) {
        result.x += t * z;
        if (q > 0) u_active += t * r;
        u_p += t;
      }
      if (t_full <= t_dual) {
        active.push_back(p);
        in_active[p] = 1;
        Eigen::VectorXd grown(q + 1);
        grown.head(q) = u_active;
        grown(q) = u_p;
        u_active = grown;
        Y.conservativeResize(n, q + 1);
        Y.col(q) = y_p;
        resolved = true;
      } else {
        in_active[active[blocker]] = 0;
        drop_active(blocker);
      }
    }
  }

  for (size_t k = 0; k < active.size(); ++k) {
    result.duals(active[k]) = std::max(0.0, u_active(static_cast<int>(k)));
  }
  result.kkt_residual = kkt_residual_of(H, g, An, bn, result.x, result.duals);
  // Duals reported in the caller's (unscaled) row convention.
  for (int i = 0; i < m; ++i) result.duals(i) /= row_scale(i);
  result.objective = 0.5 * result.x.dot(H_in * result.x) + g.dot(result.x);
  return result;
}

}  // namespace cmpcc
