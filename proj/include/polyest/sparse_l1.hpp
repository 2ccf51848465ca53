#pragma once

#include <optional>

#include <Eigen/Dense>

#include "polyest/model.hpp"

namespace polyest {

// Sum of the min(s, n) largest magnitudes of entries of z.
double norm_s1(const Eigen::VectorXd& z, int s);

// Copy of y with all but the s largest-magnitude entries zeroed; ties are
// broken toward the lowest index so the result is deterministic.
Eigen::VectorXd sparse_truncate(const Eigen::VectorXd& y, int s);

/* Witness that (H, kappa) lies in the tractable set
 * {|[I_n - N^T H]_{ij}| <= kappa/s}, which is sufficient for the condition
 *   ||w||_inf <= ||H^T N w||_inf + (kappa/s) ||w||_1   for all w. */
struct QInftyWitness {
  ContrastMatrix H;
  double kappa;
  int s;
  double max_entry;
};

// Accepts iff the entrywise bound holds; kappa outside (0, 1/2) is rejected
// as outside the regime every downstream bound requires.
std::optional<QInftyWitness> h_set_check(const ContrastMatrix& H,
                                         const Eigen::MatrixXd& N, int s,
                                         double kappa);

/* Right-hand side of the l1 recovery bound: for ||nu_hat||_1 <= ||nu||_1 and
 * H satisfying the condition above,
 *   ||nu_hat - nu||_q <= (2s)^{1/q}/(1-2kappa) *
 *                        [ ||H^T N (nu_hat - nu)||_inf + ||nu - nu^s||_1 / s ].
 * q = infinity is the limit (2s)^{1/q} -> 1. */
double l1_bound_rhs(const ContrastMatrix& H, const Eigen::MatrixXd& N,
                    const Eigen::VectorXd& nu, const Eigen::VectorXd& nu_hat,
                    int s, double kappa, double q);

// Checks the bound for q in {1, 2, inf} simultaneously at 1e-9 relative slack.
bool l1_bound_holds(const ContrastMatrix& H, const Eigen::MatrixXd& N,
                    const Eigen::VectorXd& nu, const Eigen::VectorXd& nu_hat,
                    int s, double kappa);

}  // namespace polyest
