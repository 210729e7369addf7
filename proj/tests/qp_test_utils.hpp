#pragma once

// Shared test-only QP utilities: a random box-constrained strictly convex QP
// generator and an independent projected-gradient oracle. The oracle never
// touches the interior-point path it is used to check.

#include <random>

#include <Eigen/Dense>

#include "platoon/qp_solver.hpp"

namespace qp_test {

struct BoxQp {
  platoon::QpProblem problem;
  Eigen::MatrixXd dense_h;
  Eigen::VectorXd f, lower, upper;
};

inline BoxQp random_box_qp(std::mt19937_64& rng, int max_vars = 50) {
  std::uniform_int_distribution<int> size_dist(5, max_vars);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const int n = size_dist(rng);

  Eigen::MatrixXd m(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) m(i, j) = gauss(rng);
  }
  BoxQp out;
  out.dense_h = m.transpose() * m + Eigen::MatrixXd::Identity(n, n);
  out.f.resize(n);
  out.lower.resize(n);
  out.upper.resize(n);
  for (int i = 0; i < n; ++i) {
    out.f(i) = 3.0 * gauss(rng);
    out.lower(i) = -1.0 - unif(rng);
    out.upper(i) = out.lower(i) + 0.3 + 2.0 * unif(rng);
  }

  platoon::QpProblem& qp = out.problem;
  qp.hessian = out.dense_h.sparseView();
  qp.linear_cost = out.f;
  qp.eq_matrix.resize(0, n);
  qp.eq_rhs.resize(0);
  std::vector<Eigen::Triplet<double>> trip;
  for (int i = 0; i < n; ++i) {
    trip.emplace_back(i, i, 1.0);       // x <= upper
    trip.emplace_back(n + i, i, -1.0);  // -x <= -lower
  }
  qp.ineq_matrix.resize(2 * n, n);
  qp.ineq_matrix.setFromTriplets(trip.begin(), trip.end());
  qp.ineq_rhs.resize(2 * n);
  qp.ineq_rhs.head(n) = out.upper;
  qp.ineq_rhs.tail(n) = -out.lower;
  qp.soft.assign(static_cast<size_t>(2 * n), 0);
  qp.soft_weight = Eigen::VectorXd::Zero(2 * n);
  return out;
}

/// Projected gradient with a 1/L step; converges linearly on strictly convex
/// box QPs.
inline double projected_gradient_objective(const BoxQp& qp, int max_iter = 400000,
                                           double tol = 1e-12) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(qp.dense_h, Eigen::EigenvaluesOnly);
  const double step = 1.0 / eig.eigenvalues().maxCoeff();
  Eigen::VectorXd x = 0.5 * (qp.lower + qp.upper);
  for (int k = 0; k < max_iter; ++k) {
    const Eigen::VectorXd next =
        (x - step * (qp.dense_h * x + qp.f)).cwiseMax(qp.lower).cwiseMin(qp.upper);
    const double move = (next - x).lpNorm<Eigen::Infinity>();
    x = next;
    if (move < tol) break;
  }
  return 0.5 * x.dot(qp.dense_h * x) + qp.f.dot(x);
}

}  // namespace qp_test
