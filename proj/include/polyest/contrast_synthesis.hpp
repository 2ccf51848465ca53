#pragma once

#include <cstdint>
#include <optional>

#include <Eigen/Core>

#include "polyest/ellitope.hpp"
#include "polyest/model.hpp"
#include "polyest/risk_certification.hpp"

namespace polyest {

/* Contrast synthesis: solve the design-side semidefinite programs, then turn
 * their matrix solutions into explicit contrast columns plus a certificate
 * that is verified independently of the solver (finalize_column_certificate
 * re-checks the LMI and recomputes the value from the multipliers). */

// Outcome of factoring a PSD matrix Theta into sum_i gamma_i w_i w_i^T with
// every w_i inside a prescribed ellitope W and sum_i gamma_i within budget.
struct DecompositionResult {
  Eigen::VectorXd gamma;         // nonnegative column masses
  Eigen::MatrixXd vectors;       // one kept column per mass
  double claimed_budget = 0.0;   // mixing bound alpha * rho on sum(gamma)
  double reconstruction_error = 0.0;  // Frobenius gap to the input matrix
  int attempts = 0;              // mixing draws consumed (1 = deterministic)
};

struct SynthesisOptions {
  double kbar = -1.0;            // override the column-count threshold
  bool force_theta1_zero = false;  // drop the localized block entirely
  bool force_tau_zero = false;     // alternative program: no direct H weights
  std::uint64_t seed = 1;          // randomized mixing stream
};

struct SynthesisReport {
  ContrastMatrix contrast{Eigen::MatrixXd(0, 0)};  // estimation columns
  ContrastMatrix h_block{Eigen::MatrixXd(0, 0)};   // channel-recovery columns
  RiskCertificate certificate;
  double opt_value = 0.0;        // optimum of the synthesis program
  int iterations = 0;
  double solver_residual = 0.0;
  std::optional<DecompositionResult> decomposition;  // randomized step, if any
};

// Mixing budget factor alpha = 2*sqrt(2)*ln(4*ambient^2*forms) controlling
// sum(gamma) <= alpha*rho in the randomized decomposition.
double mixing_budget_factor(int ambient, int forms);

/* Given Theta PSD and rho with Tr(Theta R_j) <= rho r_j for some r in W's
 * parameter set, produce columns of W and masses gamma with
 * sum gamma_i w_i w_i^T = Theta (to rounding) and sum gamma_i <= alpha*rho.
 * The first attempt uses the plain eigendecomposition; later attempts mix the
 * square-root factor by random signs times a row-orthonormal matrix with
 * `columns` columns (columns >= ambient).  Zero directions are dropped.
 * Theta = 0 returns an empty result. */
DecompositionResult decompose_over_ellitope(const Eigen::MatrixXd& Theta,
                                            double rho, const BasicEllitope& W,
                                            int columns, std::uint64_t seed);

/* Design for observations with no nuisance term: minimize
 * phi_S(lambda) + 4 phi_T(mu) + 4 rho over the LMI coupling (lambda, mu) with
 * A^T Theta A, subject to rho >= varkappa(sigma, eps, columns)^2 * Tr(Theta).
 * Theta is restricted to the range of A (exact, it enters only through
 * A^T Theta A and its trace).  Columns come from the eigendecomposition of
 * Theta scaled to confidence band one; eigenvalues below 1e-9 of the largest
 * are dropped.  columns < 0 defaults to m. */
SynthesisReport synth_no_nuisance(const ProblemInstance& inst, int columns = -1);

// Fold an ellitopic nuisance into the signal: senses [A N], targets [B 0],
// signal set X x V, no nuisance.  The certificate of any design on the
// augmented instance bounds the original estimator's error.
ProblemInstance augment_ellitopic(const ProblemInstance& inst);

SynthesisReport synth_ellitopic_nuisance(const ProblemInstance& inst,
                                         int columns = -1);

/* Co-ellitopic design: minimize phi_S + 4 phi_T + 4*alpha*rho over the same
 * LMI with (Theta, rho) ranging over the trace caps of the unit ball W of
 * 2*max[gauge_nstar(.), varkappa*||.||_2], then factor Theta over W.  The
 * certificate weights every kept column by 4*max_i theta(w_i)^2 <= 4. */
SynthesisReport synth_coellitopic(const ProblemInstance& inst, int columns = -1,
                                  std::uint64_t seed = 1);

/* Channel-recovery design for an s-sparse nuisance: one column per nuisance
 * coordinate, each minimizing kbar*||h||_2 + 2*max_{x in X} |h^T A x| subject
 * to ||e_k - N^T h||_inf <= kappa/s (with a small interior margin so the
 * witness gate accepts the result).  kbar < 0 defaults to the n + 2m count.
 * An infeasible coordinate throws a solver error naming it. */
ContrastMatrix synth_h_sparse(const ProblemInstance& inst, double kappa,
                              double kbar = -1.0);

/* Estimation design on top of a channel-recovery block H: minimize
 * phi_S + 4 phi_T + Tr(Theta2) + alpha*rho with Theta1 capped by the forms
 * M_j = 8 kbar^2 I + 8 s^2 rho_H^2 n_j n_j^T and Theta2 whitened by
 * Q = (8 kbar^2 I + 4 s rho_H^2 N N^T)^{-1/2}.  The contrast stacks the
 * randomized factor of Theta1 over the M_j ellitope with Q times the full
 * eigenbasis of Theta2; every column enters the certificate with weight 1. */
SynthesisReport synth_g_sparse(const ProblemInstance& inst,
                               const ContrastMatrix& H, double kappa,
                               const SynthesisOptions& options = {});

/* Variant that accepts an arbitrary contrast block Hbar (no witness gate):
 * the localization radii come from the per-coordinate programs behind
 * opt_programs, Hbar's own columns join the design weighted by their
 * psi values, and the whitening uses (8 kbar^2 I + 2 varrho_2^2 N N^T)^{-1/2}.
 * The certificate covers [Hbar, G1, G2] with weights [psi^2, 1, 1]. */
SynthesisReport synth_alternative(const ProblemInstance& inst,
                                  const ContrastMatrix& Hbar,
                                  const SynthesisOptions& options = {});

/* Stack the two sparse designs into the contrast of the aggregated estimator,
 * ordered [H from the gated design, Hbar, G from the gated design, G from the
 * alternative design].  Both reports must certify the same instance. */
ContrastMatrix build_aggregated_contrast(const SynthesisReport& gated,
                                         const SynthesisReport& alternative);

}  // namespace polyest
