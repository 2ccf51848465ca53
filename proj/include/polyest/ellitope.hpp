#pragma once

#include <vector>

#include <Eigen/Dense>

namespace polyest {

/* Parameter set T of a basic ellitope: a monotone convex compact subset of
 * the nonnegative orthant.  Supported variants: a box {0 <= t <= upper},
 * a scaled p/2-norm ball {t >= 0: ||t||_{p/2} <= radius}, and finite
 * products of these. */
class TSet {
 public:
  enum class Kind { Box, PBall, Product };

  static TSet box(Eigen::VectorXd upper);
  static TSet pball(double p, double radius, int dim);
  static TSet product(std::vector<TSet> factors);

  Kind kind() const { return kind_; }
  int dim() const { return dim_; }

  const Eigen::VectorXd& upper() const;    // Box only
  double p() const;                        // PBall only
  double radius() const;                   // PBall only
  const std::vector<TSet>& factors() const;  // Product only

 private:
  TSet() = default;
  Kind kind_ = Kind::Box;
  int dim_ = 0;
  Eigen::VectorXd upper_;
  double p_ = 0.0;
  double radius_ = 0.0;
  std::vector<TSet> factors_;
};

// Support function max{dual^T t: t in tset}; dual must be >= 0 componentwise.
double support_value(const TSet& tset, const Eigen::VectorXd& dual);

// Whether a componentwise-nonnegative vector is dominated by some member of
// tset within tol (per-component for Box, norm slack for PBall).
bool tset_contains(const TSet& tset, const Eigen::VectorXd& t, double tol);

// Smallest c >= 0 with t in c*tset, for t >= 0 (positively 1-homogeneous).
double tset_gauge(const TSet& tset, const Eigen::VectorXd& t);

/* Basic ellitope {x: exists t in tset, x^T T_l x <= t_l} with each T_l PSD
 * and sum_l T_l positive definite. */
class BasicEllitope {
 public:
  BasicEllitope(int ambient, std::vector<Eigen::MatrixXd> forms, TSet tset);

  int ambient() const { return ambient_; }
  int num_forms() const { return static_cast<int>(forms_.size()); }
  const Eigen::MatrixXd& form(int l) const { return forms_[l]; }
  const std::vector<Eigen::MatrixXd>& forms() const { return forms_; }
  const TSet& tset() const { return tset_; }

  // The vector (x^T T_1 x, ..., x^T T_L x).
  Eigen::VectorXd form_values(const Eigen::VectorXd& x) const;

 private:
  int ambient_;
  std::vector<Eigen::MatrixXd> forms_;
  TSet tset_;
};

bool contains(const BasicEllitope& E, const Eigen::VectorXd& x, double tol);

// Minkowski gauge inf{c > 0: x in c*E}; zero only at x = 0.
double gauge(const BasicEllitope& E, const Eigen::VectorXd& x);

// Direct product: block-embedded forms, product parameter set.
BasicEllitope direct_product(const BasicEllitope& E1, const BasicEllitope& E2);

/* Unit ball of the norm 2*max[pi(.), varkappa*||.||_2], where pi is the
 * gauge of nstar.  Forms are 4*R_j for each form R_j of nstar plus
 * 4*varkappa^2*I, with parameter set tset(nstar) x [0,1]. */
BasicEllitope cw_ellitope(const BasicEllitope& nstar, double varkappa);

// {x: ||x||_inf <= 1} with forms e_l e_l^T and box parameter set.
BasicEllitope unit_box_ellitope(int n);

// {x: ||x||_p <= 1}, p >= 2, with forms e_l e_l^T and p/2-ball parameter set.
BasicEllitope pball_ellitope(int n, double p);

// {x: ||x||_2 <= radius} as a single-form ellitope.
BasicEllitope euclidean_ball_ellitope(int n, double radius);

/* Image of a basic ellitope under a linear map; used for signal generation,
 * not for membership testing. */
class LinearImageEllitope {
 public:
  LinearImageEllitope(BasicEllitope base, Eigen::MatrixXd map);
  const BasicEllitope& base() const { return base_; }
  const Eigen::MatrixXd& map() const { return map_; }
  int ambient() const { return static_cast<int>(map_.rows()); }

 private:
  BasicEllitope base_;
  Eigen::MatrixXd map_;
};

}  // namespace polyest
