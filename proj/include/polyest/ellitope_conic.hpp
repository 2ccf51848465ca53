#pragma once

#include <vector>

#include <Eigen/Dense>

#include "polyest/conic_program.hpp"
#include "polyest/ellitope.hpp"

namespace polyest {

/* Helpers that translate ellitope geometry into conic-program rows.
 * Conic representability of the parameter sets limits PBall factors to
 * p in {2, 4, inf is not a TSet variant}; concretely p = 2 and p = 4 are
 * linear/SOC representable and any other p is rejected at assembly time. */

// Factor of a PSD form: C with C^T C = T, rows = rank (small tolerance cut).
Eigen::MatrixXd psd_factor(const Eigen::MatrixXd& T);

// Adds rows enforcing q_j <= r_j for some r in rho * tset, for expressions
// q known to be nonnegative at any feasible point (quadratic-form epigraphs,
// traces against PSD matrices).  rho may be a constant or a variable
// expression; it is the caller's job to keep rho >= 0 when it is variable.
void add_tset_domination(conic::ConicProgram& prog, const TSet& tset,
                         const std::vector<conic::LinExpr>& q,
                         const conic::LinExpr& rho);

// Adds rows enforcing point in scale * E (fresh parameter vector t in the
// ellitope's tset, one rotated-cone row block per form).
void add_ellitope_membership(conic::ConicProgram& prog, const BasicEllitope& E,
                             const std::vector<conic::LinExpr>& point,
                             double scale);

// Returns an expression phi with phi >= support_value(tset, chi) enforced
// (exact at optimality when phi is minimized); chi must be constrained
// nonnegative by the caller.
conic::LinExpr add_support_epigraph(conic::ConicProgram& prog, const TSet& tset,
                                    const std::vector<conic::LinExpr>& chi);

// Maximum of a linear form over a basic ellitope, solved as a conic program.
double max_linear_over_ellitope(const BasicEllitope& E, const Eigen::VectorXd& c);

}  // namespace polyest
