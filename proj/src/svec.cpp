#include "polyest/svec.hpp"

#include <cmath>

#include "polyest/errors.hpp"

namespace polyest {

namespace {
constexpr double kSqrt2 = 1.4142135623730951;
}

int svec_order(int packed_dim) {
  int order = static_cast<int>(std::floor(std::sqrt(2.0 * packed_dim)));
  while (svec_dim(order) > packed_dim) --order;
  while (svec_dim(order) < packed_dim) ++order;
  require(svec_dim(order) == packed_dim, "svec_order: length is not k*(k+1)/2");
  return order;
}

Eigen::VectorXd svec(const Eigen::MatrixXd& S) {
  require(S.rows() == S.cols(), "svec: matrix must be square");
  const int k = static_cast<int>(S.rows());
  Eigen::VectorXd v(svec_dim(k));
  for (int j = 0; j < k; ++j) {
    for (int i = 0; i <= j; ++i) {
      const double avg = 0.5 * (S(i, j) + S(j, i));
      v[svec_index(i, j)] = (i == j) ? avg : kSqrt2 * avg;
    }
  }
  return v;
}

Eigen::MatrixXd smat(const Eigen::VectorXd& v) {
  const int k = svec_order(static_cast<int>(v.size()));
  Eigen::MatrixXd S(k, k);
  for (int j = 0; j < k; ++j) {
    for (int i = 0; i <= j; ++i) {
      const double x = v[svec_index(i, j)];
      S(i, j) = S(j, i) = (i == j) ? x : x / kSqrt2;
    }
  }
  return S;
}

}  // namespace polyest
