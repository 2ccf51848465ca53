#include "polyest/ellitope.hpp"

#include <cmath>

#include "polyest/errors.hpp"
#include "polyest/psd_utils.hpp"

namespace polyest {

TSet TSet::box(Eigen::VectorXd upper) {
  require(upper.size() > 0, "TSet::box: empty bound vector");
  require(upper.minCoeff() > 0.0, "TSet::box: bounds must be positive");
  TSet t;
  t.kind_ = Kind::Box;
  t.dim_ = static_cast<int>(upper.size());
  t.upper_ = std::move(upper);
  return t;
}

TSet TSet::pball(double p, double radius, int dim) {
  require(p >= 2.0, "TSet::pball: requires p >= 2");
  require(radius > 0.0, "TSet::pball: radius must be positive");
  require(dim >= 1, "TSet::pball: dimension must be positive");
  TSet t;
  t.kind_ = Kind::PBall;
  t.dim_ = dim;
  t.p_ = p;
  t.radius_ = radius;
  return t;
}

TSet TSet::product(std::vector<TSet> factors) {
  require(!factors.empty(), "TSet::product: needs at least one factor");
  TSet t;
  t.kind_ = Kind::Product;
  t.dim_ = 0;
  for (const TSet& f : factors) t.dim_ += f.dim();
  t.factors_ = std::move(factors);
  return t;
}

const Eigen::VectorXd& TSet::upper() const {
  require(kind_ == Kind::Box, "TSet::upper: not a box");
  return upper_;
}

double TSet::p() const {
  require(kind_ == Kind::PBall, "TSet::p: not a p-ball");
  return p_;
}

double TSet::radius() const {
  require(kind_ == Kind::PBall, "TSet::radius: not a p-ball");
  return radius_;
}

const std::vector<TSet>& TSet::factors() const {
  require(kind_ == Kind::Product, "TSet::factors: not a product");
  return factors_;
}

namespace {

// ||v||_q for q >= 1 on a nonnegative vector (q may be large but finite).
double qnorm(const Eigen::VectorXd& v, double q) {
  if (v.size() == 0) return 0.0;
  const double mx = v.cwiseAbs().maxCoeff();
  if (mx == 0.0) return 0.0;
  double acc = 0.0;
  for (int i = 0; i < v.size(); ++i) acc += std::pow(std::abs(v[i]) / mx, q);
  return mx * std::pow(acc, 1.0 / q);
}

}  // namespace

double support_value(const TSet& tset, const Eigen::VectorXd& dual) {
  require(dual.size() == tset.dim(), "support_value: dual length mismatch");
  require(dual.size() == 0 || dual.minCoeff() >= 0.0,
          "support_value: dual must be componentwise nonnegative");
  switch (tset.kind()) {
    case TSet::Kind::Box:
      return dual.dot(tset.upper());
    case TSet::Kind::PBall: {
      const double q = tset.p() / 2.0;
      // radius * conjugate norm of the dual.
      if (q == 1.0) return tset.radius() * dual.maxCoeff();
      const double qc = q / (q - 1.0);
      return tset.radius() * qnorm(dual, qc);
    }
    case TSet::Kind::Product: {
      double acc = 0.0;
      int off = 0;
      for (const TSet& f : tset.factors()) {
        acc += support_value(f, dual.segment(off, f.dim()));
        off += f.dim();
      }
      return acc;
    }
  }
  return 0.0;
}

bool tset_contains(const TSet& tset, const Eigen::VectorXd& t, double tol) {
  require(t.size() == tset.dim(), "tset_contains: length mismatch");
  switch (tset.kind()) {
    case TSet::Kind::Box:
      return (t.array() <= tset.upper().array() + tol).all();
    case TSet::Kind::PBall:
      return qnorm(t, tset.p() / 2.0) <= tset.radius() + tol;
    case TSet::Kind::Product: {
      int off = 0;
      for (const TSet& f : tset.factors()) {
        if (!tset_contains(f, t.segment(off, f.dim()), tol)) return false;
        off += f.dim();
      }
      return true;
    }
  }
  return false;
}

double tset_gauge(const TSet& tset, const Eigen::VectorXd& t) {
  require(t.size() == tset.dim(), "tset_gauge: length mismatch");
  switch (tset.kind()) {
    case TSet::Kind::Box:
      return (t.array() / tset.upper().array()).maxCoeff();
    case TSet::Kind::PBall:
      return qnorm(t, tset.p() / 2.0) / tset.radius();
    case TSet::Kind::Product: {
      double g = 0.0;
      int off = 0;
      for (const TSet& f : tset.factors()) {
        g = std::max(g, tset_gauge(f, t.segment(off, f.dim())));
        off += f.dim();
      }
      return g;
    }
  }
  return 0.0;
}

BasicEllitope::BasicEllitope(int ambient, std::vector<Eigen::MatrixXd> forms,
                             TSet tset)
    : ambient_(ambient), forms_(std::move(forms)), tset_(std::move(tset)) {
  require(ambient_ >= 1, "BasicEllitope: ambient dimension must be positive");
  require(!forms_.empty(), "BasicEllitope: needs at least one form");
  require(static_cast<int>(forms_.size()) == tset_.dim(),
          "BasicEllitope: form count must match parameter-set dimension");
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(ambient_, ambient_);
  for (const Eigen::MatrixXd& T : forms_) {
    require(T.rows() == ambient_ && T.cols() == ambient_,
            "BasicEllitope: form dimension mismatch");
    require(psd_check(T, 1e-9), "BasicEllitope: form is not PSD");
    sum += T;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sum, Eigen::EigenvaluesOnly);
  require(es.eigenvalues().minCoeff() > 0.0,
          "BasicEllitope: sum of forms must be positive definite");
}

Eigen::VectorXd BasicEllitope::form_values(const Eigen::VectorXd& x) const {
  require(x.size() == ambient_, "form_values: dimension mismatch");
  Eigen::VectorXd v(num_forms());
  for (int l = 0; l < num_forms(); ++l) v[l] = x.dot(forms_[l] * x);
  return v;
}

bool contains(const BasicEllitope& E, const Eigen::VectorXd& x, double tol) {
  return tset_contains(E.tset(), E.form_values(x), tol);
}

double gauge(const BasicEllitope& E, const Eigen::VectorXd& x) {
  // Form values scale as c^2, so the gauge is the square root of the
  // parameter-set gauge of the form-value vector.
  return std::sqrt(tset_gauge(E.tset(), E.form_values(x)));
}

BasicEllitope direct_product(const BasicEllitope& E1, const BasicEllitope& E2) {
  const int k1 = E1.ambient(), k2 = E2.ambient();
  std::vector<Eigen::MatrixXd> forms;
  forms.reserve(E1.num_forms() + E2.num_forms());
  for (const Eigen::MatrixXd& T : E1.forms()) {
    Eigen::MatrixXd F = Eigen::MatrixXd::Zero(k1 + k2, k1 + k2);
    F.topLeftCorner(k1, k1) = T;
    forms.push_back(std::move(F));
  }
  for (const Eigen::MatrixXd& T : E2.forms()) {
    Eigen::MatrixXd F = Eigen::MatrixXd::Zero(k1 + k2, k1 + k2);
    F.bottomRightCorner(k2, k2) = T;
    forms.push_back(std::move(F));
  }
  return BasicEllitope(k1 + k2, std::move(forms),
                       TSet::product({E1.tset(), E2.tset()}));
}

BasicEllitope cw_ellitope(const BasicEllitope& nstar, double varkappa) {
  require(varkappa > 0.0, "cw_ellitope: varkappa must be positive");
  const int m = nstar.ambient();
  std::vector<Eigen::MatrixXd> forms;
  forms.reserve(nstar.num_forms() + 1);
  for (const Eigen::MatrixXd& R : nstar.forms()) forms.push_back(4.0 * R);
  forms.push_back(4.0 * varkappa * varkappa *
                  Eigen::MatrixXd::Identity(m, m));
  return BasicEllitope(
      m, std::move(forms),
      TSet::product({nstar.tset(), TSet::box(Eigen::VectorXd::Ones(1))}));
}

BasicEllitope unit_box_ellitope(int n) {
  std::vector<Eigen::MatrixXd> forms;
  forms.reserve(n);
  for (int l = 0; l < n; ++l) {
    Eigen::MatrixXd T = Eigen::MatrixXd::Zero(n, n);
    T(l, l) = 1.0;
    forms.push_back(std::move(T));
  }
  return BasicEllitope(n, std::move(forms), TSet::box(Eigen::VectorXd::Ones(n)));
}

BasicEllitope pball_ellitope(int n, double p) {
  std::vector<Eigen::MatrixXd> forms;
  forms.reserve(n);
  for (int l = 0; l < n; ++l) {
    Eigen::MatrixXd T = Eigen::MatrixXd::Zero(n, n);
    T(l, l) = 1.0;
    forms.push_back(std::move(T));
  }
  return BasicEllitope(n, std::move(forms), TSet::pball(p, 1.0, n));
}

BasicEllitope euclidean_ball_ellitope(int n, double radius) {
  require(radius > 0.0, "euclidean_ball_ellitope: radius must be positive");
  std::vector<Eigen::MatrixXd> forms;
  forms.push_back(Eigen::MatrixXd::Identity(n, n) / (radius * radius));
  return BasicEllitope(n, std::move(forms), TSet::box(Eigen::VectorXd::Ones(1)));
}

LinearImageEllitope::LinearImageEllitope(BasicEllitope base, Eigen::MatrixXd map)
    : base_(std::move(base)), map_(std::move(map)) {
  require(map_.cols() == base_.ambient(),
          "LinearImageEllitope: map column count must match base dimension");
}

}  // namespace polyest
