#include "platoon/qp_solver.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <stdexcept>

#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

namespace platoon {

bool QpProblem::has_soft_rows() const {
  return std::any_of(soft.begin(), soft.end(), [](std::uint8_t s) { return s != 0; });
}

bool QpProblem::hessian_is_psd(double tol) const {
  if (hessian.rows() == 0) return true;
  Eigen::MatrixXd dense(hessian);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(dense, Eigen::EigenvaluesOnly);
  const double scale = std::max(1.0, dense.cwiseAbs().maxCoeff());
  return eig.eigenvalues().minCoeff() >= -tol * scale;
}

SoftenedQp soften(const QpProblem& problem) {
  const int n = problem.num_vars();
  const int m = problem.num_ineq();
  if (static_cast<int>(problem.soft.size()) != m || problem.soft_weight.size() != m) {
    throw std::invalid_argument("soften: soft tags/weights must match inequality rows");
  }

  SoftenedQp result;
  result.original_vars = n;
  result.slack_of_row.assign(m, -1);
  int n_slack = 0;
  for (int i = 0; i < m; ++i) {
    if (!problem.soft[i]) continue;
    if (!(problem.soft_weight(i) > 0.0)) {
      throw std::domain_error("soften: soft rows need a positive weight");
    }
    result.slack_of_row[i] = n + n_slack++;
  }

  const int n_aug = n + n_slack;
  QpProblem& qp = result.qp;

  qp.hessian.resize(n_aug, n_aug);
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(problem.hessian.nonZeros());
  for (int k = 0; k < problem.hessian.outerSize(); ++k) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(problem.hessian, k); it; ++it) {
      trip.emplace_back(it.row(), it.col(), it.value());
    }
  }
  qp.hessian.setFromTriplets(trip.begin(), trip.end());

  qp.linear_cost = Eigen::VectorXd::Zero(n_aug);
  qp.linear_cost.head(n) = problem.linear_cost;
  for (int i = 0; i < m; ++i) {
    if (result.slack_of_row[i] >= 0) qp.linear_cost(result.slack_of_row[i]) = problem.soft_weight(i);
  }

  qp.eq_matrix = problem.eq_matrix;
  qp.eq_matrix.conservativeResize(problem.num_eq(), n_aug);
  qp.eq_rhs = problem.eq_rhs;

  // Original rows keep their index: soft row i becomes G_i x - eps_i <= h_i.
  // The eps >= 0 rows follow.
  qp.ineq_matrix.resize(m + n_slack, n_aug);
  trip.clear();
  for (int k = 0; k < problem.ineq_matrix.outerSize(); ++k) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(problem.ineq_matrix, k); it; ++it) {
      trip.emplace_back(it.row(), it.col(), it.value());
    }
  }
  for (int i = 0; i < m; ++i) {
    if (result.slack_of_row[i] >= 0) trip.emplace_back(i, result.slack_of_row[i], -1.0);
  }
  int row = m;
  for (int i = 0; i < m; ++i) {
    if (result.slack_of_row[i] >= 0) trip.emplace_back(row++, result.slack_of_row[i], -1.0);
  }
  qp.ineq_matrix.setFromTriplets(trip.begin(), trip.end());

  qp.ineq_rhs = Eigen::VectorXd::Zero(m + n_slack);
  qp.ineq_rhs.head(m) = problem.ineq_rhs;
  qp.soft.assign(m + n_slack, 0);
  qp.soft_weight = Eigen::VectorXd::Zero(m + n_slack);
  return result;
}

namespace {

struct KktSolver {
  // K = [H + delta I + G'WG, A'; A, -delta I], solved by LDL' without pivoting
  // (quasi-definite after regularization), LU as fallback.
  int n = 0, p = 0;
  double delta = 1e-9;
  Eigen::SparseMatrix<double> kkt;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  bool use_lu = false;
  bool analyzed = false;

  void assemble(const Eigen::SparseMatrix<double>& hess,
                const Eigen::SparseMatrix<double>& eq,
                const Eigen::SparseMatrix<double>& gtwg, double reg) {
    n = static_cast<int>(hess.rows());
    p = static_cast<int>(eq.rows());
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(hess.nonZeros() + gtwg.nonZeros() + 2 * eq.nonZeros() + n + p);
    for (int k = 0; k < hess.outerSize(); ++k) {
      for (Eigen::SparseMatrix<double>::InnerIterator it(hess, k); it; ++it) {
        trip.emplace_back(it.row(), it.col(), it.value());
      }
    }
    for (int k = 0; k < gtwg.outerSize(); ++k) {
      for (Eigen::SparseMatrix<double>::InnerIterator it(gtwg, k); it; ++it) {
        trip.emplace_back(it.row(), it.col(), it.value());
      }
    }
    for (int i = 0; i < n; ++i) trip.emplace_back(i, i, reg);
    for (int k = 0; k < eq.outerSize(); ++k) {
      for (Eigen::SparseMatrix<double>::InnerIterator it(eq, k); it; ++it) {
        trip.emplace_back(n + it.row(), it.col(), it.value());
        trip.emplace_back(it.col(), n + it.row(), it.value());
      }
    }
    for (int i = 0; i < p; ++i) trip.emplace_back(n + i, n + i, -reg);
    kkt.resize(n + p, n + p);
    kkt.setFromTriplets(trip.begin(), trip.end());
  }

  bool factorize() {
    if (!analyzed) {
      ldlt.analyzePattern(kkt);
      analyzed = true;
    }
    ldlt.factorize(kkt);
    use_lu = false;
    if (ldlt.info() != Eigen::Success) {
      lu.compute(kkt);
      if (lu.info() != Eigen::Success) return false;
      use_lu = true;
    }
    return true;
  }

  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const {
    return use_lu ? Eigen::VectorXd(lu.solve(rhs)) : Eigen::VectorXd(ldlt.solve(rhs));
  }

  // One step of iterative refinement against the unregularized system.
  Eigen::VectorXd solve_refined(const Eigen::SparseMatrix<double>& kkt_exact,
                                const Eigen::VectorXd& rhs, int rounds = 2) const {
    Eigen::VectorXd u = solve(rhs);
    for (int r = 0; r < rounds; ++r) {
      const Eigen::VectorXd res = rhs - kkt_exact * u;
      u += solve(res);
    }
    return u;
  }
};

double max_step(const Eigen::VectorXd& v, const Eigen::VectorXd& dv) {
  double alpha = std::numeric_limits<double>::infinity();
  for (int i = 0; i < v.size(); ++i) {
    if (dv(i) < 0.0) alpha = std::min(alpha, -v(i) / dv(i));
  }
  return alpha;
}

struct HardSolve {
  QpStatus status = QpStatus::MaxIter;
  Eigen::VectorXd x, y, z, s;
  double objective = 0.0;
  double kkt_residual = 0.0;
  int iterations = 0;
};

HardSolve solve_hard(const QpProblem& qp, const QpSolverOptions& opt, QpWarmStart* warm) {
  const int n = qp.num_vars();
  const int p = qp.num_eq();
  const int m = qp.num_ineq();
  const Eigen::SparseMatrix<double>& H = qp.hessian;
  const Eigen::SparseMatrix<double>& A = qp.eq_matrix;
  const Eigen::SparseMatrix<double>& G = qp.ineq_matrix;
  const Eigen::SparseMatrix<double> Gt = G.transpose();

  HardSolve out;
  const double reg = 1e-9;

  const auto objective = [&](const Eigen::VectorXd& x) {
    return 0.5 * x.dot(H * x) + qp.linear_cost.dot(x);
  };

  // Pure equality-constrained problem: one KKT solve.
  if (m == 0) {
    KktSolver kkt;
    Eigen::SparseMatrix<double> empty(n, n);
    kkt.assemble(H, A, empty, reg);
    Eigen::SparseMatrix<double> exact = kkt.kkt;
    for (int i = 0; i < n + p; ++i) exact.coeffRef(i, i) -= (i < n ? reg : -reg);
    if (!kkt.factorize()) throw std::runtime_error("qp solve: singular KKT system");
    Eigen::VectorXd rhs(n + p);
    rhs.head(n) = -qp.linear_cost;
    rhs.tail(p) = qp.eq_rhs;
    const Eigen::VectorXd u = kkt.solve_refined(exact, rhs, 3);
    out.x = u.head(n);
    out.y = u.tail(p);
    out.z.resize(0);
    out.s.resize(0);
    const Eigen::VectorXd rd = H * out.x + qp.linear_cost + A.transpose() * out.y;
    const Eigen::VectorXd rp = A * out.x - qp.eq_rhs;
    out.kkt_residual = std::max(rd.lpNorm<Eigen::Infinity>(),
                                p > 0 ? rp.lpNorm<Eigen::Infinity>() : 0.0);
    out.status = out.kkt_residual <= opt.tol ? QpStatus::Optimal : QpStatus::MaxIter;
    out.objective = objective(out.x);
    out.iterations = 1;
    return out;
  }

  Eigen::VectorXd x, y, z, s;
  const bool have_warm = warm != nullptr && warm->valid && warm->x.size() == n &&
                         warm->eq_dual.size() == p && warm->ineq_dual.size() == m &&
                         warm->ineq_slack.size() == m;
  KktSolver kkt;
  if (have_warm) {
    x = warm->x;
    y = warm->eq_dual;
    z = warm->ineq_dual.cwiseMax(1e-10);
    s = warm->ineq_slack.cwiseMax(1e-10);
  } else {
    // Cold start from the equality-regularized least-penalty point.
    Eigen::SparseMatrix<double> eye(n, n);
    eye.setIdentity();
    KktSolver init;
    init.assemble(H + eye, A, Eigen::SparseMatrix<double>(n, n), reg);
    if (!init.factorize()) throw std::runtime_error("qp solve: singular init system");
    Eigen::VectorXd rhs(n + p);
    rhs.head(n) = -qp.linear_cost;
    rhs.tail(p) = qp.eq_rhs;
    const Eigen::VectorXd u = init.solve(rhs);
    x = u.head(n);
    y = p > 0 ? Eigen::VectorXd(u.tail(p)) : Eigen::VectorXd::Zero(0);
    const Eigen::VectorXd slack0 = qp.ineq_rhs - G * x;
    s = slack0.cwiseMax(1.0);
    z = Eigen::VectorXd::Ones(m);
  }

  Eigen::VectorXd best_x = x;
  double best_kkt = std::numeric_limits<double>::infinity();
  int iter = 0;
  for (; iter <= opt.max_iter; ++iter) {
    const Eigen::VectorXd rd = H * x + qp.linear_cost + A.transpose() * y + Gt * z;
    const Eigen::VectorXd rp = A * x - qp.eq_rhs;
    const Eigen::VectorXd rg = G * x + s - qp.ineq_rhs;
    const double obj = objective(x);
    const double gap = s.dot(z) / std::max(1.0, std::abs(obj));
    const double kkt_res = std::max({rd.lpNorm<Eigen::Infinity>(),
                                     p > 0 ? rp.lpNorm<Eigen::Infinity>() : 0.0,
                                     rg.lpNorm<Eigen::Infinity>(), gap});
    if (opt.verbose) {
      // residual trace for debugging only
    }
    if (kkt_res < best_kkt) {
      best_kkt = kkt_res;
      best_x = x;
    }
    if (kkt_res <= opt.tol) {
      out.status = QpStatus::Optimal;
      out.kkt_residual = kkt_res;
      out.iterations = iter;
      out.x = x;
      out.y = y;
      out.z = z;
      out.s = s;
      out.objective = obj;
      return out;
    }

    // Farkas-style infeasibility certificate: A'y + G'z ~ 0, z >= 0, and the
    // certificate objective strictly negative.
    const double dual_scale = y.lpNorm<1>() + z.lpNorm<1>();
    if (dual_scale > 1e6) {
      const double cert_res = (A.transpose() * y + Gt * z).lpNorm<Eigen::Infinity>();
      const double cert_obj = qp.eq_rhs.dot(y) + qp.ineq_rhs.dot(z);
      if (cert_res <= 1e-8 * dual_scale && cert_obj <= -1e-8 * dual_scale) {
        out.status = QpStatus::Infeasible;
        out.kkt_residual = best_kkt;
        out.iterations = iter;
        out.x = best_x;
        out.y = y;
        out.z = z;
        out.s = s;
        out.objective = objective(best_x);
        return out;
      }
    }
    if (iter == opt.max_iter) break;

    const double mu = s.dot(z) / m;
    Eigen::VectorXd w = z.cwiseQuotient(s);
    for (int i = 0; i < m; ++i) w(i) = std::clamp(w(i), 1e-12, 1e14);

    const Eigen::SparseMatrix<double> gtwg = Gt * w.asDiagonal() * G;
    kkt.assemble(H, A, gtwg, reg);
    Eigen::SparseMatrix<double> exact = kkt.kkt;
    for (int i = 0; i < n + p; ++i) exact.coeffRef(i, i) -= (i < n ? reg : -reg);
    if (!kkt.factorize()) {
      kkt.assemble(H, A, gtwg, 1e-6);
      if (!kkt.factorize()) throw std::runtime_error("qp solve: KKT factorization failed");
    }

    const auto direction = [&](const Eigen::VectorXd& rc, Eigen::VectorXd& dx,
                               Eigen::VectorXd& dy, Eigen::VectorXd& dz, Eigen::VectorXd& ds) {
      const Eigen::VectorXd t = rg - rc.cwiseQuotient(z);
      Eigen::VectorXd rhs(n + p);
      rhs.head(n) = -rd - Gt * w.cwiseProduct(t);
      rhs.tail(p) = -rp;
      const Eigen::VectorXd u = kkt.solve_refined(exact, rhs, 1);
      dx = u.head(n);
      dy = p > 0 ? Eigen::VectorXd(u.tail(p)) : Eigen::VectorXd::Zero(0);
      dz = w.cwiseProduct(G * dx + t);
      ds = -(rc + s.cwiseProduct(dz)).cwiseQuotient(z);
    };

    // Predictor.
    Eigen::VectorXd dx_a, dy_a, dz_a, ds_a;
    direction(s.cwiseProduct(z), dx_a, dy_a, dz_a, ds_a);
    if (!dx_a.allFinite() || !ds_a.allFinite()) {
      kkt.assemble(H, A, gtwg, 1e-6);
      if (!kkt.factorize()) throw std::runtime_error("qp solve: KKT factorization failed");
      direction(s.cwiseProduct(z), dx_a, dy_a, dz_a, ds_a);
      if (!dx_a.allFinite()) throw std::runtime_error("qp solve: non-finite search direction");
    }
    const double ap_a = std::min(1.0, max_step(s, ds_a));
    const double ad_a = std::min(1.0, max_step(z, dz_a));
    const double mu_aff = (s + ap_a * ds_a).dot(z + ad_a * dz_a) / m;
    double sigma = std::pow(mu_aff / mu, 3);
    sigma = std::clamp(sigma, 0.0, 1.0);

    // Corrector with the centering term and Mehrotra correction.
    Eigen::VectorXd rc = s.cwiseProduct(z) + ds_a.cwiseProduct(dz_a);
    rc.array() -= sigma * mu;
    Eigen::VectorXd dx, dy, dz, ds;
    direction(rc, dx, dy, dz, ds);

    const double tau = 0.995;
    const double ap = std::min(1.0, tau * max_step(s, ds));
    const double ad = std::min(1.0, tau * max_step(z, dz));
    x += ap * dx;
    s += ap * ds;
    y += ad * dy;
    z += ad * dz;
  }

  out.status = QpStatus::MaxIter;
  out.kkt_residual = best_kkt;
  out.iterations = iter;
  out.x = best_x;
  out.y = y;
  out.z = z;
  out.s = s;
  out.objective = objective(best_x);
  return out;
}

}  // namespace

QpSolution solve(const QpProblem& problem, const QpSolverOptions& options, QpWarmStart* warm) {
  const bool softened = problem.has_soft_rows();
  SoftenedQp soft_form;
  const QpProblem* target = &problem;
  if (softened) {
    soft_form = soften(problem);
    target = &soft_form.qp;
  }

  HardSolve hard = solve_hard(*target, options, warm);

  if (warm != nullptr) {
    warm->valid = true;
    warm->x = hard.x;
    warm->eq_dual = hard.y;
    warm->ineq_dual = hard.z;
    warm->ineq_slack = hard.s;
  }

  QpSolution sol;
  sol.status = hard.status;
  sol.kkt_residual = hard.kkt_residual;
  sol.iterations = hard.iterations;
  sol.objective = hard.objective;
  sol.eq_dual = hard.y;
  const int n = problem.num_vars();
  const int m = problem.num_ineq();
  sol.primal = hard.x.head(n);
  sol.ineq_dual = m > 0 && hard.z.size() >= m ? Eigen::VectorXd(hard.z.head(m))
                                              : Eigen::VectorXd::Zero(m);
  sol.slack = Eigen::VectorXd::Zero(m);
  if (softened) {
    for (int i = 0; i < m; ++i) {
      const int si = soft_form.slack_of_row[i];
      if (si >= 0) sol.slack(i) = hard.x(si);
    }
  }
  return sol;
}

void dump_qp(const QpProblem& problem, std::ostream& out) {
  const auto write_sparse = [&out](const char* name, const Eigen::SparseMatrix<double>& mat) {
    out << name << " " << mat.rows() << " " << mat.cols() << " " << mat.nonZeros() << "\n";
    for (int k = 0; k < mat.outerSize(); ++k) {
      for (Eigen::SparseMatrix<double>::InnerIterator it(mat, k); it; ++it) {
        out << it.row() << " " << it.col() << " " << it.value() << "\n";
      }
    }
  };
  const auto write_vec = [&out](const char* name, const Eigen::VectorXd& v) {
    out << name << " " << v.size() << "\n";
    for (int i = 0; i < v.size(); ++i) out << v(i) << "\n";
  };
  out << std::setprecision(17);
  out << "# qp-dump v1: triplets are row col value; vectors one value per line\n";
  out << "vars " << problem.num_vars() << "\n";
  write_sparse("hessian", problem.hessian);
  write_vec("linear_cost", problem.linear_cost);
  write_sparse("eq_matrix", problem.eq_matrix);
  write_vec("eq_rhs", problem.eq_rhs);
  write_sparse("ineq_matrix", problem.ineq_matrix);
  write_vec("ineq_rhs", problem.ineq_rhs);
  out << "soft " << problem.soft.size() << "\n";
  for (size_t i = 0; i < problem.soft.size(); ++i) {
    out << int(problem.soft[i]) << " " << problem.soft_weight(static_cast<int>(i)) << "\n";
  }
}

}  // namespace platoon
