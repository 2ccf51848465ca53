#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "polyest/ellitope.hpp"

namespace polyest {

/* Nuisance specification: absent (nu is pinned to zero), bounded-ellitopic
 * (the nuisance set itself is a basic ellitope in nu-space), co-ellitopic
 * (the image N*Nuisance is the polar of a given ellitope nstar, which is
 * then the unit ball of the seminorm pi), or s-sparse. */
class NuisanceSpec {
 public:
  enum class Kind { None, Ellitopic, CoEllitopic, Sparse };

  static NuisanceSpec none();
  static NuisanceSpec ellitopic(BasicEllitope set);
  static NuisanceSpec co_ellitopic(BasicEllitope nstar);
  static NuisanceSpec sparse(int s);

  Kind kind() const { return kind_; }
  bool bounded() const { return kind_ != Kind::Sparse; }
  const BasicEllitope& set() const;    // Ellitopic
  const BasicEllitope& nstar() const;  // CoEllitopic
  int s() const;                       // Sparse

 private:
  explicit NuisanceSpec(Kind k) : kind_(k) {}
  Kind kind_;
  std::optional<BasicEllitope> ell_;
  int s_ = 0;
};

/* Observation model omega = A x + N nu + xi, xi ~ Gaussian(0, sigma^2 I_m);
 * the goal is to recover B x for signals x in the ellitope X, with recovery
 * error measured in the norm whose unit-ball polar is the ellitope bstar. */
struct ProblemInstance {
  Eigen::MatrixXd A;  // m x p
  Eigen::MatrixXd B;  // q x p
  Eigen::MatrixXd N;  // m x n
  BasicEllitope X;      // signal set, in R^p
  BasicEllitope bstar;  // polar of the error-norm unit ball, in R^q
  NuisanceSpec nuisance;
  double sigma;
  double epsilon;

  int m() const { return static_cast<int>(A.rows()); }
  int p() const { return static_cast<int>(A.cols()); }
  int q() const { return static_cast<int>(B.rows()); }
  int n() const { return static_cast<int>(N.cols()); }

  // Throws on dimension or parameter violations.
  void validate() const;
};

// Which synthesis block a contrast column came from: the per-coordinate
// H design, its companion G block, or the two blocks of the alternative
// (arbitrary-H) route.
enum class ColumnRole { HBlock, GBlock, AltHBlock, AltGBlock };

/* Contrast matrix G = [g_1, ..., g_I]; optionally carries a per-column role
 * tag recording which synthesis block produced the column. */
class ContrastMatrix {
 public:
  explicit ContrastMatrix(Eigen::MatrixXd columns);
  ContrastMatrix(Eigen::MatrixXd columns, std::vector<ColumnRole> roles);

  int rows() const { return static_cast<int>(cols_.rows()); }
  int count() const { return static_cast<int>(cols_.cols()); }
  const Eigen::MatrixXd& matrix() const { return cols_; }
  Eigen::VectorXd column(int i) const { return cols_.col(i); }
  bool has_roles() const { return !roles_.empty(); }
  ColumnRole role(int i) const;
  const std::vector<ColumnRole>& roles() const { return roles_; }

  // Maximum Euclidean column norm.
  double max_column_norm() const;

  // Copy with zero columns removed (roles kept aligned).
  ContrastMatrix without_zero_columns(double tol = 0.0) const;

  // Horizontal concatenation, roles preserved when both sides carry them.
  static ContrastMatrix concat(const ContrastMatrix& a, const ContrastMatrix& b);

 private:
  Eigen::MatrixXd cols_;
  std::vector<ColumnRole> roles_;
};

/* Confidence threshold sigma*sqrt(2*ln(2*count/epsilon)); count is the
 * number of confidence inequalities the union bound runs over.  Requires
 * 2*count/epsilon >= 1 so the root is real (the model-level epsilon is
 * always in (0,1), where this holds for any count >= 1). */
double varkappa(double sigma, double epsilon, int count);

// omega = A x_star + N nu_star + sigma * standard Gaussian, deterministic in
// the seed.  With checked = true, x_star and nu_star must satisfy the
// instance's membership/sparsity contracts.
Eigen::VectorXd sample_observation(const ProblemInstance& inst,
                                   const Eigen::VectorXd& x_star,
                                   const Eigen::VectorXd& nu_star,
                                   std::uint64_t seed, bool checked = true);

// Whether |g_i^T xi| <= vk * ||g_i||_2 for every column.
bool in_confidence_set(const ContrastMatrix& G, const Eigen::VectorXd& xi,
                       double vk);

// pi(h) = sup{(N u)^T h: u in the nuisance set}.  Closed form (the nstar
// gauge) in the co-ellitopic case, a conic solve in the ellitopic case;
// undefined (rejected) for sparse nuisance.
double nuisance_seminorm(const NuisanceSpec& spec, const Eigen::MatrixXd& N,
                         const Eigen::VectorXd& h);

// Error norm ||v|| whose unit ball has polar bstar: max_{u in bstar} u^T v.
double error_norm(const BasicEllitope& bstar, const Eigen::VectorXd& v);

// Structural fingerprint of an instance (dimensions, matrix entries, noise
// level, risk level, nuisance family).  Certificates carry it so that
// cross-instance aggregation is rejected.
std::uint64_t instance_hash(const ProblemInstance& inst);

}  // namespace polyest
