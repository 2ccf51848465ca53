#pragma once

#include <cstdint>
#include <string>

#include <Eigen/Dense>

#include "polyest/model.hpp"

namespace polyest {

// Which risk-bound program a certificate is a feasible point of.
enum class BoundKind { Bounded, Sparse, SparseAlt, Aggregated };

const char* bound_kind_name(BoundKind k);

/* A verified feasible point of one of the risk-bound programs.  lambda and
 * mu multiply the error-norm polar forms and the signal-set forms.  The
 * column route stores per-column weights gamma; the design route stores the
 * (theta1, theta2, rho) payload instead, and for the alternative design the
 * gamma slot holds the H-column multipliers.  value is recomputed from the
 * stored multipliers through the closed-form support functions after the
 * positivity clamp and LMI polish, so a certificate stands on its own:
 * re-assembling its LMI from the stored data reproduces lmi_residual. */
struct RiskCertificate {
  BoundKind kind = BoundKind::Bounded;
  Eigen::VectorXd lambda;
  Eigen::VectorXd mu;
  Eigen::VectorXd gamma;
  Eigen::MatrixXd theta1;  // 0x0 when unused
  Eigen::MatrixXd theta2;  // 0x0 when unused
  double rho = 0.0;
  double value = 0.0;
  double lmi_residual = 0.0;  // smallest eigenvalue of the verified block
  std::uint64_t instance_hash = 0;
  BoundKind winner = BoundKind::Bounded;  // aggregated only: winning branch
};

// Deterministic text rendering (CLI output, file round trips).
std::string certificate_record(const RiskCertificate& cert);

/* Norm-bounding scalars of the alternative (arbitrary-H) route, evaluated at
 * a fixed confidence threshold kbar. */
struct SparseAux {
  double rho_H = 0.0;    // per-coordinate route scalar, 0 when not applicable
  double opt2 = 0.0;     // bound on ||nu_hat - nu_star||_2
  double opt_inf = 0.0;  // bound on ||nu_hat - nu_star||_inf
  double varrho2 = 0.0;  // min(opt2, sqrt(2s)*opt_inf)
  double kbar = 0.0;     // threshold the programs were evaluated at
  int s = 0;
};

/* Certified upper bound on max{c^T x : x in E} via the dual LMI
 *   min t + phi_T(mu)  s.t.  mu >= 0, [[sum mu_k T_k, c/2],[c^T/2, t]] psd;
 * t is recomputed exactly from the returned mu, so the value upper-bounds
 * the support function regardless of solver tolerance. */
double support_upper(const BasicEllitope& E, const Eigen::VectorXd& c);

/* Feasible-point certification of the column-weighted risk program
 *   min  phi_S(lambda) + 4 phi_T(mu) + sum_i c_i gamma_i
 *   s.t. lambda, mu, gamma >= 0,
 *        [[sum lambda_l S_l, B/2], [B^T/2, sum mu_k T_k +
 *          sum_i gamma_i (A^T g_i)(A^T g_i)^T]]  psd.
 * All certify_* front ends reduce to this with their own column weights. */
RiskCertificate certify_columns(const ProblemInstance& inst, const ContrastMatrix& G,
                                const Eigen::VectorXd& column_weights, BoundKind kind);

/* Builds a certificate from externally supplied multipliers (no solve):
 * clamp to nonnegativity, polish the LMI, recompute the value.  Used by the
 * synthesis routines, whose multipliers come out of the design programs. */
RiskCertificate finalize_column_certificate(const ProblemInstance& inst,
                                            const ContrastMatrix& G,
                                            const Eigen::VectorXd& column_weights,
                                            Eigen::VectorXd lambda, Eigen::VectorXd mu,
                                            Eigen::VectorXd gamma, BoundKind kind);

/* Clamps lambda/mu to the nonnegative orthant, assembles
 * [[sum lambda S, B/2],[B^T/2, sum mu T + bottom_extra]], and if its smallest
 * eigenvalue falls below 1e-9 inflates lambda and mu uniformly along the
 * strictly positive directions sum_l S_l, sum_k T_k.  Returns the final
 * smallest eigenvalue (must come out >= -1e-7). */
double polish_lmi(const ProblemInstance& inst, Eigen::VectorXd& lambda,
                  Eigen::VectorXd& mu, const Eigen::MatrixXd& bottom_extra);

/* epsilon-risk certificate for the uniform-fit estimator with contrast G:
 * column weights 4*psi^2 with psi = max_i pi(g_i) + varkappa * max_i ||g_i||.
 * The confidence threshold is taken at count = G.count() by default; a design
 * that budgeted for more columns than it emitted passes its planned count as
 * design_columns (must be >= G.count()). */
RiskCertificate certify_bounded(const ProblemInstance& inst, const ContrastMatrix& G,
                                int design_columns = -1);

/* Sensitivity scalar of the per-coordinate H design:
 *   rho_H = max_k [ kbar ||h_k||_2 + 2 max_{x in X} |h_k^T A x| ] / (1 - 2 kappa),
 * the inner maxima certified through the dual LMI route.  kappa in [0, 1/2);
 * H must have one column per nuisance coordinate and pass the witness test
 * (at kappa = 0 the test degenerates to N^T H = I exactly).  kbar < 0 selects
 * the default threshold at count n + 2m. */
double rho_h(const ProblemInstance& inst, const ContrastMatrix& H, double kappa,
             double kbar = -1.0);

/* epsilon-risk certificate for the l1 estimator with stacked contrast [G, H],
 * H from the per-coordinate design: uniform column weights psi^2 with
 *   psi = max_i [ 2 kbar ||g_i||_2 + rho_H ||N^T g_i||_{2s,1} ].
 * kbar < 0 selects the threshold at count H.count() + G.count().  An exactly
 * zero N short-circuits the witness gate (the nuisance channel vanishes and
 * rho_H plays no role). */
RiskCertificate certify_sparse(const ProblemInstance& inst, const ContrastMatrix& G,
                               const ContrastMatrix& H, double kappa,
                               double kbar = -1.0);

/* Solves the 2n norm-bounding maximization programs of the alternative route
 * for an arbitrary contrast H and packs their optima (with a conservative
 * inflation, since the downstream uses are monotone increasing).  kbar < 0
 * selects the threshold at count H.count() + 2m.  An unbounded program is
 * reported as a typed solver error: the contrast fails to localize the
 * nuisance error. */
SparseAux opt_programs(const ProblemInstance& inst, const ContrastMatrix& H,
                       double kbar = -1.0);

/* Upper bound on sup{ d^T N z } over the nuisance-error set localized by the
 * aux scalars, via the three-way split
 *   min_{u+v+w = N^T d} opt_inf ||u||_1 + opt2 ||v||_2 + 2s opt_inf ||w||_inf;
 * the solver split is re-projected onto exact feasibility before evaluation,
 * so the result is a true upper bound. */
double pi_bar(const Eigen::VectorXd& d, const Eigen::MatrixXd& N,
              const SparseAux& aux, int s);

// Per-column weights psi(d_i) = pi_bar(N^T d_i) + 2 kbar ||d_i||_2.
Eigen::VectorXd psi_h_values(const ProblemInstance& inst, const ContrastMatrix& D,
                             const SparseAux& aux);

/* epsilon-risk certificate for the l1 estimator on the stack D = [G, H] with
 * arbitrary H, with per-column weights psi_h_values(D)^2 (zero columns are
 * dropped).  aux must carry the threshold the estimate runs at. */
RiskCertificate certify_sparse_alt(const ProblemInstance& inst, const ContrastMatrix& D,
                                   const SparseAux& aux);

/* min of two certificates for the same instance; records the winning branch.
 * Certificates from different instances are rejected. */
RiskCertificate certify_aggregated(const RiskCertificate& a, const RiskCertificate& b);

}  // namespace polyest
