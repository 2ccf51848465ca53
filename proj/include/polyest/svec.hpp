#pragma once

#include <Eigen/Core>

namespace polyest {

// Packed upper-triangular vectorization of symmetric matrices, column-major,
// with sqrt(2) scaling on off-diagonal entries so that
// svec(A).dot(svec(B)) == Tr(A*B).

inline int svec_dim(int order) { return order * (order + 1) / 2; }

// Order of the matrix a packed vector of length d corresponds to.
int svec_order(int packed_dim);

// Position of entry (i,j), i <= j, in the packed vector.
inline int svec_index(int i, int j) { return j * (j + 1) / 2 + i; }

Eigen::VectorXd svec(const Eigen::MatrixXd& S);
Eigen::MatrixXd smat(const Eigen::VectorXd& v);

}  // namespace polyest
