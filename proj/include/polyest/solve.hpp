#pragma once

#include <limits>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

#include "polyest/conic_program.hpp"

namespace polyest::conic {

enum class SolveStatus { Optimal, Infeasible, Unbounded, NumericalFailure };

const char* to_string(SolveStatus s);

struct SolveOptions {
  double tol = 1e-8;         // feasibility and gap tolerance for optimality
  double infeas_tol = 1e-9;  // certificate quality for infeasible/unbounded
  int max_iters = 150000;
  int check_every = 25;
  double alpha = 1.5;   // over-relaxation
  int aa_memory = 12;   // Anderson acceleration window, 0 disables
  // Fallback accuracy when the iteration plateaus above tol. A plateau first
  // switches the KKT solves to iterative refinement; if the residuals still
  // do not move, the best iterate is accepted provided it meets this bound
  // (0 disables the fallback and such solves fail instead).
  double tol_stalled = 5e-7;
  bool verbose = false;
};

struct SolveResult {
  SolveStatus status = SolveStatus::NumericalFailure;
  double objective = std::numeric_limits<double>::quiet_NaN();
  Eigen::VectorXd primal;  // flat variables, svec coordinates for symmetric blocks
  Eigen::VectorXd dual;    // one multiplier per constraint row
  Eigen::VectorXd slack;   // cone slack per constraint row

  // Residuals of the returned primal/dual pair against the original data.
  double max_eq_violation = std::numeric_limits<double>::quiet_NaN();
  double min_cone_margin = std::numeric_limits<double>::quiet_NaN();
  double duality_gap = std::numeric_limits<double>::quiet_NaN();

  int iterations = 0;
  double seconds = 0.0;

  bool optimal() const { return status == SolveStatus::Optimal; }

  double scalar_value(const ConicProgram& prog, int var) const;
  Eigen::VectorXd vector_value(const ConicProgram& prog, int var) const;
  Eigen::MatrixXd matrix_value(const ConicProgram& prog, int var) const;
};

class SolveError : public std::runtime_error {
 public:
  SolveError(SolveStatus st, const std::string& what)
      : std::runtime_error(what), status(st) {}
  SolveStatus status;
};

SolveResult solve(const ConicProgram& prog, const SolveOptions& opts = {});

// Returns only when status is Optimal, otherwise throws SolveError.
SolveResult solve_optimal(const ConicProgram& prog, const SolveOptions& opts = {});

}  // namespace polyest::conic
