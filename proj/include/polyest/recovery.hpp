#pragma once

#include <Eigen/Dense>

#include "polyest/model.hpp"

namespace polyest {

/* Output of a recovery program.  w_hat = B x_hat always.  nu_hat is zero for
 * the bounded-nuisance estimator (the nuisance is fitted internally but never
 * reported) and the l1-minimal surrogate for the sparse ones.  feasible is
 * false only when the sparse program is provably infeasible; the fallback
 * (x, nu) = (0, 0) is returned in that case. */
struct RecoveryOutput {
  Eigen::VectorXd x_hat;
  Eigen::VectorXd nu_hat;
  Eigen::VectorXd w_hat;
  bool feasible = true;
  double objective = 0.0;
};

/* Uniform-fit estimator for absent/ellitopic/co-ellitopic nuisance:
 *   minimize  max_i |g_i^T (A x + eta - omega)|
 * over x in X and eta ranging over the nuisance image (nothing, N*(nuisance
 * set), or the polar of nstar).  Always feasible; objective is the achieved
 * maximum residual.  An empty G returns x = 0. */
RecoveryOutput estimate_bounded(const ProblemInstance& inst, const ContrastMatrix& G,
                                const Eigen::VectorXd& omega);

/* l1-minimal nuisance fit for sparse nuisance:
 *   minimize  ||nu||_1
 *   s.t.      x in X,
 *             |d_j^T (A x + N nu - omega)| <= kbar * ||d_j||_2  per column
 * over the stacked columns d_j of [G, H] (resp. an aggregated stack).
 * kbar < 0 means the threshold is computed from the actual column count.
 * A certified-infeasible program yields the (0, 0) fallback. */
RecoveryOutput estimate_sparse(const ProblemInstance& inst, const ContrastMatrix& G,
                               const ContrastMatrix& H, const Eigen::VectorXd& omega,
                               double kbar = -1.0);

// Same program; the name records that the columns come from the
// arbitrary-H (alternative) synthesis route rather than the per-coordinate one.
RecoveryOutput estimate_alternative(const ProblemInstance& inst, const ContrastMatrix& G,
                                    const ContrastMatrix& H, const Eigen::VectorXd& omega,
                                    double kbar = -1.0);

// Sparse recovery over an already-stacked contrast (all four blocks).
RecoveryOutput estimate_aggregated(const ProblemInstance& inst,
                                   const ContrastMatrix& combined,
                                   const Eigen::VectorXd& omega, double kbar = -1.0);

}  // namespace polyest
