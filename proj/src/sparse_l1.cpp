#include "polyest/sparse_l1.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "polyest/errors.hpp"

namespace polyest {

namespace {

// Indices of the s largest magnitudes, ties toward the lowest index.
std::vector<int> top_indices(const Eigen::VectorXd& y, int s) {
  std::vector<int> idx(y.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
    return std::abs(y[a]) > std::abs(y[b]);
  });
  idx.resize(std::min<std::size_t>(idx.size(), static_cast<std::size_t>(s)));
  return idx;
}

}  // namespace

double norm_s1(const Eigen::VectorXd& z, int s) {
  require(s >= 1, "norm_s1: s must be positive");
  double acc = 0.0;
  for (int i : top_indices(z, s)) acc += std::abs(z[i]);
  return acc;
}

Eigen::VectorXd sparse_truncate(const Eigen::VectorXd& y, int s) {
  require(s >= 0, "sparse_truncate: s must be nonnegative");
  Eigen::VectorXd out = Eigen::VectorXd::Zero(y.size());
  if (s == 0) return out;
  for (int i : top_indices(y, s)) out[i] = y[i];
  return out;
}

std::optional<QInftyWitness> h_set_check(const ContrastMatrix& H,
                                         const Eigen::MatrixXd& N, int s,
                                         double kappa) {
  require(kappa > 0.0 && kappa < 0.5, "h_set_check: kappa must lie in (0, 1/2)");
  require(s >= 1, "h_set_check: s must be positive");
  require(H.rows() == N.rows(), "h_set_check: H and N row mismatch");
  require(H.count() == N.cols(), "h_set_check: H must have one column per nuisance entry");
  const int n = static_cast<int>(N.cols());
  const Eigen::MatrixXd R =
      Eigen::MatrixXd::Identity(n, n) - N.transpose() * H.matrix();
  const double max_entry = R.cwiseAbs().maxCoeff();
  if (max_entry > kappa / s) return std::nullopt;
  return QInftyWitness{H, kappa, s, max_entry};
}

double l1_bound_rhs(const ContrastMatrix& H, const Eigen::MatrixXd& N,
                    const Eigen::VectorXd& nu, const Eigen::VectorXd& nu_hat,
                    int s, double kappa, double q) {
  require(s >= 1, "l1_bound_rhs: s must be positive");
  require(kappa >= 0.0 && kappa < 0.5, "l1_bound_rhs: kappa must lie in [0, 1/2)");
  require(q >= 1.0, "l1_bound_rhs: q must be at least 1");
  require(nu.size() == nu_hat.size() && nu.size() == N.cols(),
          "l1_bound_rhs: dimension mismatch");
  require(nu_hat.lpNorm<1>() <= nu.lpNorm<1>() + 1e-12 * (1.0 + nu.lpNorm<1>()),
          "l1_bound_rhs: requires ||nu_hat||_1 <= ||nu||_1");
  const Eigen::VectorXd z = nu_hat - nu;
  const double rho = (H.matrix().transpose() * (N * z)).lpNorm<Eigen::Infinity>();
  const double tail = (nu - sparse_truncate(nu, s)).lpNorm<1>() / s;
  const double power =
      std::isinf(q) ? 1.0 : std::pow(2.0 * s, 1.0 / q);
  return power / (1.0 - 2.0 * kappa) * (rho + tail);
}

bool l1_bound_holds(const ContrastMatrix& H, const Eigen::MatrixXd& N,
                    const Eigen::VectorXd& nu, const Eigen::VectorXd& nu_hat,
                    int s, double kappa) {
  const Eigen::VectorXd z = nu_hat - nu;
  const double inf = std::numeric_limits<double>::infinity();
  const struct {
    double q;
    double lhs;
  } cases[] = {{1.0, z.lpNorm<1>()}, {2.0, z.norm()}, {inf, z.lpNorm<Eigen::Infinity>()}};
  for (const auto& c : cases) {
    const double rhs = l1_bound_rhs(H, N, nu, nu_hat, s, kappa, c.q);
    if (c.lhs > rhs * (1.0 + 1e-9) + 1e-15) return false;
  }
  return true;
}

}  // namespace polyest
