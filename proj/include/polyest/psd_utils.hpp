#pragma once

#include <Eigen/Core>

namespace polyest {

// True iff the smallest eigenvalue of M is >= -tol*(1 + ||M||_2).
// M must be square and symmetric within tol.
bool psd_check(const Eigen::MatrixXd& M, double tol);

// (M clamped to eigenvalues >= floor)^{-1/2}. Rejects matrices with an
// eigenvalue below -floor.
Eigen::MatrixXd inv_sqrt(const Eigen::MatrixXd& M, double floor);

}  // namespace polyest
