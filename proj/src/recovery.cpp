#include "polyest/recovery.hpp"

#include <cmath>
#include <vector>

#include "polyest/conic_program.hpp"
#include "polyest/ellitope_conic.hpp"
#include "polyest/errors.hpp"
#include "polyest/solve.hpp"
#include "polyest/svec.hpp"

namespace polyest {

namespace {

using conic::ConicProgram;
using conic::LinExpr;

std::vector<LinExpr> identity_exprs(int var, int dim) {
  std::vector<LinExpr> out(dim);
  for (int j = 0; j < dim; ++j) out[j].add(var, j, 1.0);
  return out;
}

RecoveryOutput zero_output(const ProblemInstance& inst, bool feasible) {
  RecoveryOutput out;
  out.x_hat = Eigen::VectorXd::Zero(inst.p());
  out.nu_hat = Eigen::VectorXd::Zero(inst.n());
  out.w_hat = Eigen::VectorXd::Zero(inst.q());
  out.feasible = feasible;
  out.objective = 0.0;
  return out;
}

// Pull x back into X exactly; the perturbation is at solver-tolerance scale.
void rescale_into(const BasicEllitope& E, Eigen::VectorXd& x) {
  const double g = gauge(E, x);
  if (g > 1.0) x /= g;
}

/* Membership of eta in the polar of nstar = {w: exists r in R, w^T R_j w <= r_j}:
 *   exists mu >= 0, t:  [ sum_j mu_j R_j   eta/2 ]
 *                       [ eta^T/2          t     ]  psd,   t + phi_R(mu) <= 1.
 * Exact by conic duality (the support of nstar at eta is min 2*sqrt(t*phi)
 * over such representations, and the scaling orbit turns that into t + phi). */
void add_polar_membership(ConicProgram& prog, const BasicEllitope& nstar,
                          int eta_var) {
  const int m = nstar.ambient();
  const int J = nstar.num_forms();
  const int mu = prog.add_vector("polar_mu", J);
  const int t = prog.add_scalar("polar_t");
  for (int j = 0; j < J; ++j) {
    LinExpr nn;
    nn.add(mu, j, 1.0);
    prog.add_nonneg(nn);
  }
  std::vector<LinExpr> rows(svec_dim(m + 1));
  const double rt2 = std::sqrt(2.0);
  for (int j = 0; j <= m; ++j) {
    for (int i = 0; i <= j; ++i) {
      LinExpr& e = rows[svec_index(i, j)];
      const double scale = (i == j) ? 1.0 : rt2;
      if (j < m) {
        for (int l = 0; l < J; ++l) {
          const double c = nstar.form(l)(i, j);
          if (c != 0.0) e.add(mu, l, scale * c);
        }
      } else if (i < m) {
        e.add(eta_var, i, scale * 0.5);
      } else {
        e.add(t, 0, 1.0);
      }
    }
  }
  prog.add_psd(m + 1, std::move(rows));
  LinExpr phi = add_support_epigraph(prog, nstar.tset(), identity_exprs(mu, J));
  LinExpr cap(1.0);
  cap.add(t, 0, -1.0);
  cap.add(phi, -1.0);
  prog.add_nonneg(cap);
}

RecoveryOutput sparse_core(const ProblemInstance& inst, const Eigen::MatrixXd& D,
                           const Eigen::VectorXd& omega, double kbar) {
  inst.validate();
  require(inst.nuisance.kind() == NuisanceSpec::Kind::Sparse,
          "sparse recovery requires a sparse nuisance model");
  require(omega.size() == inst.m(), "sparse recovery: omega dimension mismatch");
  require(D.rows() == inst.m(), "sparse recovery: contrast row dimension mismatch");
  const int total = static_cast<int>(D.cols());
  require(total >= 1, "sparse recovery: at least one contrast column required");
  if (kbar < 0.0) kbar = varkappa(inst.sigma, inst.epsilon, total);

  const int p = inst.p(), n = inst.n();
  ConicProgram prog;
  const int x = prog.add_vector("x", p);
  const int nu = prog.add_vector("nu", n);
  const int a = prog.add_vector("abs_nu", n);
  add_ellitope_membership(prog, inst.X, identity_exprs(x, p), 1.0);
  for (int j = 0; j < n; ++j) {
    LinExpr lo, hi;
    lo.add(a, j, 1.0).add(nu, j, -1.0);
    hi.add(a, j, 1.0).add(nu, j, 1.0);
    prog.add_nonneg(lo);
    prog.add_nonneg(hi);
  }

  const Eigen::MatrixXd DtA = D.transpose() * inst.A;
  const Eigen::MatrixXd DtN = D.transpose() * inst.N;
  const Eigen::VectorXd Dtw = D.transpose() * omega;
  for (int i = 0; i < total; ++i) {
    const double cn = D.col(i).norm();
    if (cn == 0.0) continue;
    for (double sign : {1.0, -1.0}) {
      LinExpr row(kbar * cn + sign * Dtw[i]);
      for (int j = 0; j < p; ++j) row.add(x, j, -sign * DtA(i, j));
      for (int j = 0; j < n; ++j) row.add(nu, j, -sign * DtN(i, j));
      prog.add_nonneg(row);
    }
  }

  LinExpr obj;
  for (int j = 0; j < n; ++j) obj.add(a, j, 1.0);
  prog.set_objective(conic::Sense::Minimize, obj);

  conic::SolveResult res = conic::solve(prog);
  if (res.status == conic::SolveStatus::Infeasible) return zero_output(inst, false);
  if (res.status != conic::SolveStatus::Optimal)
    throw conic::SolveError(res.status, "sparse recovery: solver failed");

  RecoveryOutput out;
  out.x_hat = res.vector_value(prog, x);
  rescale_into(inst.X, out.x_hat);
  out.nu_hat = res.vector_value(prog, nu);
  out.w_hat = inst.B * out.x_hat;
  out.feasible = true;
  out.objective = out.nu_hat.lpNorm<1>();

  // Re-verify the contrast constraints at a slack one order above solver
  // tolerance; a breach means the reported point cannot be trusted.
  const Eigen::VectorXd fit =
      D.transpose() * (inst.A * out.x_hat + inst.N * out.nu_hat - omega);
  const double scale =
      1.0 + omega.cwiseAbs().maxCoeff() + kbar * D.colwise().norm().maxCoeff();
  for (int i = 0; i < total; ++i) {
    if (std::abs(fit[i]) > kbar * D.col(i).norm() + 1e-6 * scale)
      throw conic::SolveError(conic::SolveStatus::NumericalFailure,
                              "sparse recovery: returned point fails verification");
  }
  return out;
}

}  // namespace

RecoveryOutput estimate_bounded(const ProblemInstance& inst, const ContrastMatrix& G,
                                const Eigen::VectorXd& omega) {
  inst.validate();
  require(inst.nuisance.bounded(),
          "estimate_bounded: sparse nuisance requires the l1 estimators");
  require(omega.size() == inst.m(), "estimate_bounded: omega dimension mismatch");
  if (G.count() == 0) return zero_output(inst, true);
  require(G.rows() == inst.m(), "estimate_bounded: contrast row dimension mismatch");

  const int p = inst.p(), n = inst.n(), m = inst.m();
  ConicProgram prog;
  const int x = prog.add_vector("x", p);
  const int tau = prog.add_scalar("tau");
  add_ellitope_membership(prog, inst.X, identity_exprs(x, p), 1.0);

  int nu = -1, eta = -1;
  switch (inst.nuisance.kind()) {
    case NuisanceSpec::Kind::None:
      break;
    case NuisanceSpec::Kind::Ellitopic:
      nu = prog.add_vector("nu", n);
      add_ellitope_membership(prog, inst.nuisance.set(), identity_exprs(nu, n), 1.0);
      break;
    case NuisanceSpec::Kind::CoEllitopic:
      eta = prog.add_vector("eta", m);
      add_polar_membership(prog, inst.nuisance.nstar(), eta);
      break;
    case NuisanceSpec::Kind::Sparse:
      break;  // unreachable
  }

  const Eigen::MatrixXd GtA = G.matrix().transpose() * inst.A;
  const Eigen::MatrixXd GtN =
      nu >= 0 ? Eigen::MatrixXd(G.matrix().transpose() * inst.N) : Eigen::MatrixXd();
  const Eigen::VectorXd Gtw = G.matrix().transpose() * omega;
  for (int i = 0; i < G.count(); ++i) {
    const Eigen::VectorXd g = G.column(i);
    for (double sign : {1.0, -1.0}) {
      LinExpr row(sign * Gtw[i]);
      row.add(tau, 0, 1.0);
      for (int j = 0; j < p; ++j) row.add(x, j, -sign * GtA(i, j));
      if (nu >= 0)
        for (int j = 0; j < n; ++j) row.add(nu, j, -sign * GtN(i, j));
      if (eta >= 0)
        for (int k = 0; k < m; ++k) row.add(eta, k, -sign * g[k]);
      prog.add_nonneg(row);
    }
  }

  LinExpr obj;
  obj.add(tau, 0, 1.0);
  prog.set_objective(conic::Sense::Minimize, obj);

  conic::SolveResult res = conic::solve_optimal(prog);
  RecoveryOutput out;
  out.x_hat = res.vector_value(prog, x);
  rescale_into(inst.X, out.x_hat);
  out.nu_hat = Eigen::VectorXd::Zero(n);
  out.w_hat = inst.B * out.x_hat;
  out.feasible = true;

  Eigen::VectorXd resid = inst.A * out.x_hat - omega;
  if (nu >= 0) {
    Eigen::VectorXd nu_fit = res.vector_value(prog, nu);
    rescale_into(inst.nuisance.set(), nu_fit);
    resid += inst.N * nu_fit;
  }
  if (eta >= 0) resid += res.vector_value(prog, eta);
  out.objective = (G.matrix().transpose() * resid).cwiseAbs().maxCoeff();
  return out;
}

RecoveryOutput estimate_sparse(const ProblemInstance& inst, const ContrastMatrix& G,
                               const ContrastMatrix& H, const Eigen::VectorXd& omega,
                               double kbar) {
  require(G.count() == 0 || G.rows() == inst.m(),
          "estimate_sparse: G row dimension mismatch");
  require(H.count() == 0 || H.rows() == inst.m(),
          "estimate_sparse: H row dimension mismatch");
  Eigen::MatrixXd D(inst.m(), G.count() + H.count());
  if (G.count() > 0) D.leftCols(G.count()) = G.matrix();
  if (H.count() > 0) D.rightCols(H.count()) = H.matrix();
  return sparse_core(inst, D, omega, kbar);
}

RecoveryOutput estimate_alternative(const ProblemInstance& inst, const ContrastMatrix& G,
                                    const ContrastMatrix& H, const Eigen::VectorXd& omega,
                                    double kbar) {
  return estimate_sparse(inst, G, H, omega, kbar);
}

RecoveryOutput estimate_aggregated(const ProblemInstance& inst,
                                   const ContrastMatrix& combined,
                                   const Eigen::VectorXd& omega, double kbar) {
  require(combined.rows() == inst.m(),
          "estimate_aggregated: contrast row dimension mismatch");
  return sparse_core(inst, combined.matrix(), omega, kbar);
}

}  // namespace polyest
