#include "polyest/model.hpp"

#include <cmath>

#include "polyest/ellitope_conic.hpp"
#include "polyest/errors.hpp"
#include "polyest/rng.hpp"

namespace polyest {

NuisanceSpec NuisanceSpec::none() { return NuisanceSpec(Kind::None); }

NuisanceSpec NuisanceSpec::ellitopic(BasicEllitope set) {
  NuisanceSpec n(Kind::Ellitopic);
  n.ell_ = std::move(set);
  return n;
}

NuisanceSpec NuisanceSpec::co_ellitopic(BasicEllitope nstar) {
  NuisanceSpec n(Kind::CoEllitopic);
  n.ell_ = std::move(nstar);
  return n;
}

NuisanceSpec NuisanceSpec::sparse(int s) {
  require(s >= 1, "NuisanceSpec::sparse: s must be positive");
  NuisanceSpec n(Kind::Sparse);
  n.s_ = s;
  return n;
}

const BasicEllitope& NuisanceSpec::set() const {
  require(kind_ == Kind::Ellitopic, "NuisanceSpec::set: not an ellitopic nuisance");
  return *ell_;
}

const BasicEllitope& NuisanceSpec::nstar() const {
  require(kind_ == Kind::CoEllitopic, "NuisanceSpec::nstar: not co-ellitopic");
  return *ell_;
}

int NuisanceSpec::s() const {
  require(kind_ == Kind::Sparse, "NuisanceSpec::s: not a sparse nuisance");
  return s_;
}

void ProblemInstance::validate() const {
  require(A.rows() == N.rows(), "ProblemInstance: A and N must share the row count m");
  require(A.cols() == B.cols(), "ProblemInstance: A and B must share the column count p");
  require(X.ambient() == p(), "ProblemInstance: signal set dimension must equal p");
  require(bstar.ambient() == q(), "ProblemInstance: bstar dimension must equal q");
  require(sigma > 0.0, "ProblemInstance: sigma must be positive");
  require(epsilon > 0.0 && epsilon < 1.0, "ProblemInstance: epsilon must lie in (0,1)");
  switch (nuisance.kind()) {
    case NuisanceSpec::Kind::None:
      break;
    case NuisanceSpec::Kind::Ellitopic:
      require(nuisance.set().ambient() == n(),
              "ProblemInstance: ellitopic nuisance set must live in R^n");
      break;
    case NuisanceSpec::Kind::CoEllitopic:
      require(nuisance.nstar().ambient() == m(),
              "ProblemInstance: co-ellitopic nstar must live in R^m");
      break;
    case NuisanceSpec::Kind::Sparse:
      require(nuisance.s() <= n(), "ProblemInstance: sparsity level exceeds n");
      break;
  }
}

ContrastMatrix::ContrastMatrix(Eigen::MatrixXd columns) : cols_(std::move(columns)) {}

ContrastMatrix::ContrastMatrix(Eigen::MatrixXd columns, std::vector<ColumnRole> roles)
    : cols_(std::move(columns)), roles_(std::move(roles)) {
  require(static_cast<int>(roles_.size()) == static_cast<int>(cols_.cols()),
          "ContrastMatrix: one role per column required");
}

ColumnRole ContrastMatrix::role(int i) const {
  require(has_roles(), "ContrastMatrix::role: no roles attached");
  return roles_.at(i);
}

double ContrastMatrix::max_column_norm() const {
  double mx = 0.0;
  for (int i = 0; i < count(); ++i) mx = std::max(mx, cols_.col(i).norm());
  return mx;
}

ContrastMatrix ContrastMatrix::without_zero_columns(double tol) const {
  std::vector<int> keep;
  for (int i = 0; i < count(); ++i)
    if (cols_.col(i).norm() > tol) keep.push_back(i);
  Eigen::MatrixXd out(rows(), static_cast<int>(keep.size()));
  std::vector<ColumnRole> roles;
  for (size_t j = 0; j < keep.size(); ++j) {
    out.col(static_cast<int>(j)) = cols_.col(keep[j]);
    if (has_roles()) roles.push_back(roles_[keep[j]]);
  }
  return has_roles() ? ContrastMatrix(std::move(out), std::move(roles))
                     : ContrastMatrix(std::move(out));
}

ContrastMatrix ContrastMatrix::concat(const ContrastMatrix& a, const ContrastMatrix& b) {
  require(a.rows() == b.rows(), "ContrastMatrix::concat: row mismatch");
  Eigen::MatrixXd out(a.rows(), a.count() + b.count());
  out.leftCols(a.count()) = a.matrix();
  out.rightCols(b.count()) = b.matrix();
  if (a.has_roles() && b.has_roles()) {
    std::vector<ColumnRole> roles = a.roles();
    roles.insert(roles.end(), b.roles().begin(), b.roles().end());
    return ContrastMatrix(std::move(out), std::move(roles));
  }
  return ContrastMatrix(std::move(out));
}

double varkappa(double sigma, double epsilon, int count) {
  require(sigma > 0.0, "varkappa: sigma must be positive");
  require(count >= 1, "varkappa: count must be positive");
  require(epsilon > 0.0, "varkappa: epsilon must be positive");
  const double ratio = 2.0 * static_cast<double>(count) / epsilon;
  require(ratio >= 1.0, "varkappa: 2*count/epsilon must be at least 1");
  return sigma * std::sqrt(2.0 * std::log(ratio));
}

Eigen::VectorXd sample_observation(const ProblemInstance& inst,
                                   const Eigen::VectorXd& x_star,
                                   const Eigen::VectorXd& nu_star,
                                   std::uint64_t seed, bool checked) {
  require(x_star.size() == inst.p(), "sample_observation: x_star dimension mismatch");
  require(nu_star.size() == inst.n(), "sample_observation: nu_star dimension mismatch");
  if (checked) {
    require(contains(inst.X, x_star, 1e-9),
            "sample_observation: x_star outside the signal set");
    switch (inst.nuisance.kind()) {
      case NuisanceSpec::Kind::None:
        require(nu_star.isZero(0.0),
                "sample_observation: nu_star must vanish when nuisance is absent");
        break;
      case NuisanceSpec::Kind::Ellitopic:
        require(contains(inst.nuisance.set(), nu_star, 1e-9),
                "sample_observation: nu_star outside the nuisance set");
        break;
      case NuisanceSpec::Kind::CoEllitopic:
        // N*nu must lie in the polar of nstar: support of nstar at N*nu <= 1.
        require(max_linear_over_ellitope(inst.nuisance.nstar(),
                                         inst.N * nu_star) <= 1.0 + 1e-7,
                "sample_observation: N*nu_star outside the polar nuisance set");
        break;
      case NuisanceSpec::Kind::Sparse: {
        int nz = 0;
        for (int i = 0; i < nu_star.size(); ++i)
          if (nu_star[i] != 0.0) ++nz;
        require(nz <= inst.nuisance.s(),
                "sample_observation: nu_star exceeds the sparsity level");
        break;
      }
    }
  }
  Rng rng(seed);
  return inst.A * x_star + inst.N * nu_star +
         rng.gaussian_vector(inst.m(), inst.sigma);
}

bool in_confidence_set(const ContrastMatrix& G, const Eigen::VectorXd& xi,
                       double vk) {
  require(xi.size() == G.rows(), "in_confidence_set: dimension mismatch");
  for (int i = 0; i < G.count(); ++i) {
    const Eigen::VectorXd g = G.column(i);
    if (std::abs(g.dot(xi)) > vk * g.norm()) return false;
  }
  return true;
}

double nuisance_seminorm(const NuisanceSpec& spec, const Eigen::MatrixXd& N,
                         const Eigen::VectorXd& h) {
  require(h.size() == N.rows(), "nuisance_seminorm: dimension mismatch");
  switch (spec.kind()) {
    case NuisanceSpec::Kind::None:
      return 0.0;
    case NuisanceSpec::Kind::Ellitopic:
      return max_linear_over_ellitope(spec.set(), N.transpose() * h);
    case NuisanceSpec::Kind::CoEllitopic:
      // nstar is the unit ball of pi, so pi is its Minkowski gauge.
      return gauge(spec.nstar(), h);
    case NuisanceSpec::Kind::Sparse:
      require(false, "nuisance_seminorm: undefined for sparse nuisance");
  }
  return 0.0;
}

namespace {

void fnv_bytes(std::uint64_t& h, const void* data, size_t len) {
  const unsigned char* b = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < len; ++i) {
    h ^= b[i];
    h *= 1099511628211ull;
  }
}

void fnv_int(std::uint64_t& h, std::int64_t v) { fnv_bytes(h, &v, sizeof(v)); }
void fnv_double(std::uint64_t& h, double v) { fnv_bytes(h, &v, sizeof(v)); }

void fnv_matrix(std::uint64_t& h, const Eigen::MatrixXd& M) {
  fnv_int(h, M.rows());
  fnv_int(h, M.cols());
  for (Eigen::Index j = 0; j < M.cols(); ++j)
    for (Eigen::Index i = 0; i < M.rows(); ++i) fnv_double(h, M(i, j));
}

void fnv_tset(std::uint64_t& h, const TSet& t) {
  fnv_int(h, static_cast<int>(t.kind()));
  fnv_int(h, t.dim());
  switch (t.kind()) {
    case TSet::Kind::Box:
      for (Eigen::Index i = 0; i < t.upper().size(); ++i) fnv_double(h, t.upper()[i]);
      break;
    case TSet::Kind::PBall:
      fnv_double(h, t.p());
      fnv_double(h, t.radius());
      break;
    case TSet::Kind::Product:
      for (const TSet& f : t.factors()) fnv_tset(h, f);
      break;
  }
}

void fnv_ellitope(std::uint64_t& h, const BasicEllitope& E) {
  fnv_int(h, E.ambient());
  fnv_int(h, E.num_forms());
  for (const Eigen::MatrixXd& T : E.forms()) fnv_matrix(h, T);
  fnv_tset(h, E.tset());
}

}  // namespace

std::uint64_t instance_hash(const ProblemInstance& inst) {
  std::uint64_t h = 1469598103934665603ull;
  fnv_int(h, inst.m());
  fnv_int(h, inst.p());
  fnv_int(h, inst.q());
  fnv_int(h, inst.n());
  fnv_matrix(h, inst.A);
  fnv_matrix(h, inst.B);
  fnv_matrix(h, inst.N);
  fnv_ellitope(h, inst.X);
  fnv_ellitope(h, inst.bstar);
  fnv_double(h, inst.sigma);
  fnv_double(h, inst.epsilon);
  fnv_int(h, static_cast<int>(inst.nuisance.kind()));
  switch (inst.nuisance.kind()) {
    case NuisanceSpec::Kind::None:
      break;
    case NuisanceSpec::Kind::Ellitopic:
      fnv_ellitope(h, inst.nuisance.set());
      break;
    case NuisanceSpec::Kind::CoEllitopic:
      fnv_ellitope(h, inst.nuisance.nstar());
      break;
    case NuisanceSpec::Kind::Sparse:
      fnv_int(h, inst.nuisance.s());
      break;
  }
  return h;
}

double error_norm(const BasicEllitope& bstar, const Eigen::VectorXd& v) {
  // Closed form when bstar is a Euclidean ball.
  if (bstar.num_forms() == 1 && bstar.tset().kind() == TSet::Kind::Box) {
    const Eigen::MatrixXd& F = bstar.form(0);
    const double d = F(0, 0);
    if (d > 0.0 && (F - d * Eigen::MatrixXd::Identity(F.rows(), F.cols()))
                           .cwiseAbs()
                           .maxCoeff() == 0.0) {
      return std::sqrt(bstar.tset().upper()[0] / d) * v.norm();
    }
  }
  return max_linear_over_ellitope(bstar, v);
}

}  // namespace polyest
