#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace platoon {

/// Convex QP  min 1/2 x'Hx + f'x  s.t.  A x = b,  G x <= h.
/// Inequality rows tagged soft are replaced by hinge penalties before solving.
struct QpProblem {
  Eigen::SparseMatrix<double> hessian;      // n x n, symmetric PSD
  Eigen::VectorXd linear_cost;              // n
  Eigen::SparseMatrix<double> eq_matrix;    // m_eq x n
  Eigen::VectorXd eq_rhs;                   // m_eq
  Eigen::SparseMatrix<double> ineq_matrix;  // m_in x n
  Eigen::VectorXd ineq_rhs;                 // m_in
  std::vector<std::uint8_t> soft;           // m_in, 1 = soft row
  Eigen::VectorXd soft_weight;              // m_in, per-row hinge weight

  int num_vars() const { return static_cast<int>(linear_cost.size()); }
  int num_eq() const { return static_cast<int>(eq_rhs.size()); }
  int num_ineq() const { return static_cast<int>(ineq_rhs.size()); }
  bool has_soft_rows() const;

  /// PSD check by eigenvalue bound; used by tests and the validate tooling.
  bool hessian_is_psd(double tol = 1e-8) const;
};

/// Epigraph reformulation of the soft rows: G x <= h + eps, eps >= 0, and
/// lambda * eps added to the cost. Exactly the hinge penalty on violations.
struct SoftenedQp {
  QpProblem qp;                  // all-hard problem with slack variables appended
  int original_vars = 0;
  std::vector<int> slack_of_row;  // per original ineq row: slack var index or -1
};
SoftenedQp soften(const QpProblem& problem);

enum class QpStatus { Optimal, MaxIter, Infeasible };

struct QpSolution {
  QpStatus status = QpStatus::MaxIter;
  Eigen::VectorXd primal;     // original variables only
  Eigen::VectorXd slack;      // hinge slack per original ineq row (0 for hard rows)
  Eigen::VectorXd eq_dual;
  Eigen::VectorXd ineq_dual;  // per original ineq row
  double objective = 0.0;     // objective of the solved (possibly softened) problem
  double kkt_residual = 0.0;
  int iterations = 0;
};

/// Opaque warm-start carrier. Filled by solve(); reuse on the next call with a
/// problem of identical shape.
struct QpWarmStart {
  bool valid = false;
  Eigen::VectorXd x, eq_dual, ineq_dual, ineq_slack;
};

struct QpSolverOptions {
  double tol = 1e-6;
  int max_iter = 100;
  bool verbose = false;
};

/// Mehrotra predictor-corrector primal-dual interior point method. Softens
/// the problem first when soft rows are present, so those instances always
/// come back Optimal; Infeasible is only reported for hard-constrained
/// problems. Deterministic for fixed inputs.
QpSolution solve(const QpProblem& problem, const QpSolverOptions& options = {},
                 QpWarmStart* warm = nullptr);

/// Self-describing text dump for offline debugging.
void dump_qp(const QpProblem& problem, std::ostream& out);

}  // namespace platoon
