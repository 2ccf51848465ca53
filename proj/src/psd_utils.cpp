#include "polyest/psd_utils.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>

#include "polyest/errors.hpp"

namespace polyest {

bool psd_check(const Eigen::MatrixXd& M, double tol) {
  require(M.rows() == M.cols(), "psd_check: matrix must be square");
  if (M.size() == 0) return true;
  const double scale = std::max(1.0, M.cwiseAbs().maxCoeff());
  require((M - M.transpose()).cwiseAbs().maxCoeff() <= std::abs(tol) * scale + 1e-300,
          "psd_check: matrix not symmetric within tol");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (M + M.transpose()),
                                                    Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().cwiseAbs().maxCoeff();
  return lo >= -std::abs(tol) * (1.0 + hi);
}

Eigen::MatrixXd inv_sqrt(const Eigen::MatrixXd& M, double floor) {
  require(M.rows() == M.cols(), "inv_sqrt: matrix must be square");
  require(floor > 0.0, "inv_sqrt: floor must be positive");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (M + M.transpose()));
  require(es.eigenvalues().minCoeff() >= -floor,
          "inv_sqrt: matrix has an eigenvalue below -floor, not PSD");
  Eigen::VectorXd d = es.eigenvalues().cwiseMax(floor).cwiseSqrt().cwiseInverse();
  return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace polyest
