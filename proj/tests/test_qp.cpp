#include <doctest.h>

#include <random>
#include <sstream>

#include "platoon/qp_solver.hpp"
#include "qp_test_utils.hpp"

using namespace platoon;

namespace {

QpProblem one_var_problem(double g, double h, bool soft, double weight) {
  QpProblem qp;
  qp.hessian.resize(1, 1);
  qp.hessian.insert(0, 0) = 2.0;  // objective x^2
  qp.linear_cost = Eigen::VectorXd::Zero(1);
  qp.eq_matrix.resize(0, 1);
  qp.eq_rhs.resize(0);
  qp.ineq_matrix.resize(1, 1);
  qp.ineq_matrix.insert(0, 0) = g;
  qp.ineq_rhs = Eigen::VectorXd::Constant(1, h);
  qp.soft.assign(1, soft ? 1 : 0);
  qp.soft_weight = Eigen::VectorXd::Constant(1, weight);
  return qp;
}

}  // namespace

TEST_CASE("projection onto an equality constraint") {
  const int n = 5;
  QpProblem qp;
  Eigen::MatrixXd h = 2.0 * Eigen::MatrixXd::Identity(n, n);
  qp.hessian = h.sparseView();
  qp.linear_cost = Eigen::VectorXd::Zero(n);
  qp.eq_matrix.resize(1, n);
  qp.eq_matrix.insert(0, 0) = 1.0;
  qp.eq_rhs = Eigen::VectorXd::Constant(1, 1.0);
  qp.ineq_matrix.resize(0, n);
  qp.ineq_rhs.resize(0);

  const QpSolution sol = solve(qp);
  CHECK(sol.status == QpStatus::Optimal);
  CHECK(sol.primal(0) == doctest::Approx(1.0).epsilon(1e-8));
  for (int i = 1; i < n; ++i) CHECK(sol.primal(i) == doctest::Approx(0.0).epsilon(1e-8));
  CHECK(sol.objective == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("hinge softening of a single bound") {
  // min x^2 s.t. x >= 2. Hard: x = 2. Soft with weight 1: min x^2 + (2 - x)_+
  // has its optimum at x = 0.5 with objective 1.75 and slack 1.5.
  SUBCASE("hard") {
    const QpSolution sol = solve(one_var_problem(-1.0, -2.0, false, 0.0));
    CHECK(sol.status == QpStatus::Optimal);
    CHECK(sol.primal(0) == doctest::Approx(2.0).epsilon(1e-6));
    CHECK(sol.objective == doctest::Approx(4.0).epsilon(1e-6));
  }
  SUBCASE("soft") {
    const QpSolution sol = solve(one_var_problem(-1.0, -2.0, true, 1.0));
    CHECK(sol.status == QpStatus::Optimal);
    CHECK(sol.primal(0) == doctest::Approx(0.5).epsilon(1e-5));
    CHECK(sol.objective == doctest::Approx(1.75).epsilon(1e-5));
    CHECK(sol.slack(0) == doctest::Approx(1.5).epsilon(1e-4));
  }
  SUBCASE("nonpositive weight rejected") {
    CHECK_THROWS_AS(soften(one_var_problem(-1.0, -2.0, true, 0.0)), std::domain_error);
  }
}

TEST_CASE("feasible soft problems match their hard solution with zero slack") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    qp_test::BoxQp box = qp_test::random_box_qp(rng, 20);
    const QpSolution hard = solve(box.problem);
    QpProblem softened = box.problem;
    softened.soft.assign(softened.soft.size(), 1);
    softened.soft_weight = Eigen::VectorXd::Constant(softened.num_ineq(), 1e4);
    const QpSolution soft = solve(softened);
    REQUIRE(hard.status == QpStatus::Optimal);
    REQUIRE(soft.status == QpStatus::Optimal);
    CHECK(soft.objective == doctest::Approx(hard.objective).epsilon(1e-5));
    CHECK(soft.slack.lpNorm<Eigen::Infinity>() < 1e-5);
  }
}

TEST_CASE("contradictory soft constraints stay solvable") {
  QpProblem qp;
  qp.hessian.resize(1, 1);
  qp.hessian.insert(0, 0) = 0.02;
  qp.linear_cost = Eigen::VectorXd::Zero(1);
  qp.eq_matrix.resize(0, 1);
  qp.eq_rhs.resize(0);
  qp.ineq_matrix.resize(2, 1);
  qp.ineq_matrix.insert(0, 0) = -1.0;  // x >= 1
  qp.ineq_matrix.insert(1, 0) = 1.0;   // x <= 0
  qp.ineq_rhs.resize(2);
  qp.ineq_rhs << -1.0, 0.0;
  qp.soft.assign(2, 1);
  qp.soft_weight = Eigen::VectorXd::Constant(2, 1e3);

  const QpSolution sol = solve(qp);
  CHECK(sol.status == QpStatus::Optimal);
  CHECK(sol.slack.maxCoeff() > 0.1);
}

TEST_CASE("hard contradictory constraints report infeasibility") {
  QpProblem qp = one_var_problem(-1.0, -2.0, false, 0.0);  // x >= 2
  // add x <= 0
  QpProblem both = qp;
  both.ineq_matrix.resize(2, 1);
  both.ineq_matrix.insert(0, 0) = -1.0;
  both.ineq_matrix.insert(1, 0) = 1.0;
  both.ineq_rhs.resize(2);
  both.ineq_rhs << -2.0, 0.0;
  both.soft.assign(2, 0);
  both.soft_weight = Eigen::VectorXd::Zero(2);
  const QpSolution sol = solve(both, {1e-6, 200});
  CHECK(sol.status == QpStatus::Infeasible);
}

TEST_CASE("random strictly convex QPs match the projected-gradient oracle") {
  std::mt19937_64 rng(4242);
  for (int trial = 0; trial < 100; ++trial) {
    qp_test::BoxQp box = qp_test::random_box_qp(rng);
    const QpSolution sol = solve(box.problem);
    REQUIRE(sol.status == QpStatus::Optimal);
    const double oracle = qp_test::projected_gradient_objective(box);
    CHECK(std::abs(sol.objective - oracle) <= 1e-5 * std::max(1.0, std::abs(oracle)));
    CHECK(sol.kkt_residual <= 1e-6);
  }
}

TEST_CASE("reported KKT residual is real") {
  std::mt19937_64 rng(77);
  qp_test::BoxQp box = qp_test::random_box_qp(rng, 30);
  const QpSolution sol = solve(box.problem);
  REQUIRE(sol.status == QpStatus::Optimal);

  // Recompute stationarity and feasibility from scratch.
  const Eigen::VectorXd grad = box.dense_h * sol.primal + box.f +
                               Eigen::MatrixXd(box.problem.ineq_matrix).transpose() * sol.ineq_dual;
  CHECK(grad.lpNorm<Eigen::Infinity>() <= 1e-5);
  const Eigen::VectorXd violation =
      (Eigen::MatrixXd(box.problem.ineq_matrix) * sol.primal - box.problem.ineq_rhs).cwiseMax(0.0);
  CHECK(violation.lpNorm<Eigen::Infinity>() <= 1e-6);
  CHECK(sol.ineq_dual.minCoeff() >= -1e-9);

  // Duality gap via complementarity.
  const Eigen::VectorXd slack =
      box.problem.ineq_rhs - Eigen::MatrixXd(box.problem.ineq_matrix) * sol.primal;
  const double gap = std::abs(slack.dot(sol.ineq_dual));
  CHECK(gap <= 1e-6 * std::max(1.0, std::abs(sol.objective)));
}

TEST_CASE("warm-started identical resolve converges immediately") {
  std::mt19937_64 rng(11);
  qp_test::BoxQp box = qp_test::random_box_qp(rng, 40);
  QpWarmStart warm;
  const QpSolution first = solve(box.problem, {}, &warm);
  REQUIRE(first.status == QpStatus::Optimal);
  const QpSolution second = solve(box.problem, {}, &warm);
  CHECK(second.status == QpStatus::Optimal);
  CHECK(second.iterations <= 3);
  CHECK((second.primal - first.primal).lpNorm<Eigen::Infinity>() < 1e-9);
}

TEST_CASE("argmin is invariant to row and cost scaling") {
  std::mt19937_64 rng(13);
  qp_test::BoxQp box = qp_test::random_box_qp(rng, 25);
  const QpSolution base = solve(box.problem);
  REQUIRE(base.status == QpStatus::Optimal);

  SUBCASE("row scaling") {
    QpProblem scaled = box.problem;
    Eigen::SparseMatrix<double> g = scaled.ineq_matrix;
    for (int k = 0; k < g.outerSize(); ++k) {
      for (Eigen::SparseMatrix<double>::InnerIterator it(g, k); it; ++it) {
        if (it.row() % 3 == 0) it.valueRef() *= 10.0;
      }
    }
    scaled.ineq_matrix = g;
    for (int i = 0; i < scaled.num_ineq(); i += 3) scaled.ineq_rhs(i) *= 10.0;
    const QpSolution sol = solve(scaled);
    REQUIRE(sol.status == QpStatus::Optimal);
    CHECK((sol.primal - base.primal).lpNorm<Eigen::Infinity>() < 1e-5);
  }

  SUBCASE("uniform cost scaling") {
    QpProblem scaled = box.problem;
    scaled.hessian = scaled.hessian * 5.0;
    scaled.linear_cost *= 5.0;
    const QpSolution sol = solve(scaled);
    REQUIRE(sol.status == QpStatus::Optimal);
    CHECK((sol.primal - base.primal).lpNorm<Eigen::Infinity>() < 1e-5);
  }
}

TEST_CASE("hessian PSD check") {
  QpProblem qp = one_var_problem(-1.0, -2.0, false, 0.0);
  CHECK(qp.hessian_is_psd());
  qp.hessian.coeffRef(0, 0) = -1.0;
  CHECK_FALSE(qp.hessian_is_psd());
}

TEST_CASE("qp dump is self describing") {
  std::ostringstream out;
  dump_qp(one_var_problem(-1.0, -2.0, true, 5.0), out);
  const std::string text = out.str();
  CHECK(text.find("qp-dump v1") != std::string::npos);
  CHECK(text.find("hessian 1 1 1") != std::string::npos);
  CHECK(text.find("soft 1") != std::string::npos);
}
