#include <cmath>
#include <random>

#include <Eigen/Dense>

#include "doctest.h"
#include "polyest/ellitope.hpp"
#include "polyest/errors.hpp"
#include "polyest/model.hpp"
#include "polyest/recovery.hpp"
#include "polyest/rng.hpp"
#include "polyest/sparse_l1.hpp"

using namespace polyest;

namespace {

ContrastMatrix identity_contrast(int m) {
  return ContrastMatrix(Eigen::MatrixXd::Identity(m, m));
}

ProblemInstance square_instance(int d, NuisanceSpec nuisance, double radius = 2.0) {
  ProblemInstance inst{Eigen::MatrixXd::Identity(d, d),
                       Eigen::MatrixXd::Identity(d, d),
                       Eigen::MatrixXd::Identity(d, d),
                       euclidean_ball_ellitope(d, radius),
                       euclidean_ball_ellitope(d, 1.0),
                       std::move(nuisance),
                       0.1,
                       0.05};
  inst.validate();
  return inst;
}

}  // namespace

TEST_CASE("bounded estimator recovers a noiseless signal exactly") {
  ProblemInstance inst = square_instance(3, NuisanceSpec::none());
  Eigen::VectorXd xs(3);
  xs << 0.7, -0.4, 0.2;
  Eigen::VectorXd omega = inst.A * xs;  // no noise, no nuisance
  RecoveryOutput out = estimate_bounded(inst, identity_contrast(3), omega);
  CHECK(out.feasible);
  CHECK(out.objective <= 1e-6);
  CHECK((out.x_hat - xs).cwiseAbs().maxCoeff() <= 1e-6);
  CHECK((out.w_hat - inst.B * xs).cwiseAbs().maxCoeff() <= 1e-6);
  CHECK(out.nu_hat.isZero(0.0));
  CHECK(contains(inst.X, out.x_hat, 1e-7));
}

TEST_CASE("bounded estimator with empty contrast returns the zero point") {
  ProblemInstance inst = square_instance(3, NuisanceSpec::none());
  ContrastMatrix empty(Eigen::MatrixXd(3, 0));
  RecoveryOutput out = estimate_bounded(inst, empty, Eigen::VectorXd::Ones(3));
  CHECK(out.feasible);
  CHECK(out.x_hat.isZero(0.0));
  CHECK(out.objective == 0.0);
}

TEST_CASE("bounded estimator rejects sparse nuisance and bad dimensions") {
  ProblemInstance inst = square_instance(3, NuisanceSpec::sparse(1));
  CHECK_THROWS_AS(estimate_bounded(inst, identity_contrast(3), Eigen::VectorXd::Zero(3)),
                  InvalidArgument);
  ProblemInstance ok = square_instance(3, NuisanceSpec::none());
  CHECK_THROWS_AS(estimate_bounded(ok, identity_contrast(3), Eigen::VectorXd::Zero(2)),
                  InvalidArgument);
}

TEST_CASE("bounded estimator absorbs an ellitopic nuisance") {
  ProblemInstance inst =
      square_instance(3, NuisanceSpec::ellitopic(euclidean_ball_ellitope(3, 0.5)));
  Eigen::VectorXd xs(3), nus(3);
  xs << 1.0, 0.3, -0.8;
  nus << 0.3, -0.2, 0.1;  // inside the radius-0.5 ball
  Eigen::VectorXd omega = inst.A * xs + inst.N * nus;
  RecoveryOutput out = estimate_bounded(inst, identity_contrast(3), omega);
  CHECK(out.feasible);
  CHECK(out.objective <= 1e-6);
  CHECK(contains(inst.X, out.x_hat, 1e-7));
  CHECK(out.nu_hat.isZero(0.0));
  // The fit can trade signal against nuisance, but only within the nuisance
  // radius; the recovered signal stays within 2*0.5 of the truth.
  CHECK((out.x_hat - xs).norm() <= 1.0 + 1e-6);
}

TEST_CASE("bounded estimator absorbs a co-ellitopic contamination") {
  // nstar = unit ball, so the contamination ranges over its polar, again the
  // unit ball.
  ProblemInstance inst =
      square_instance(3, NuisanceSpec::co_ellitopic(euclidean_ball_ellitope(3, 1.0)));
  Eigen::VectorXd xs(3), eta(3);
  xs << -0.5, 1.1, 0.4;
  eta << 0.3, 0.4, -0.6;  // norm < 1
  Eigen::VectorXd omega = inst.A * xs + eta;
  RecoveryOutput out = estimate_bounded(inst, identity_contrast(3), omega);
  CHECK(out.feasible);
  CHECK(out.objective <= 1e-5);
  CHECK(contains(inst.X, out.x_hat, 1e-7));
  CHECK((out.x_hat - xs).norm() <= 2.0 + 1e-6);
}

TEST_CASE("sparse estimator: l1 optimality against the planted nuisance") {
  ProblemInstance inst = square_instance(6, NuisanceSpec::sparse(1));
  Eigen::VectorXd xs = Eigen::VectorXd::Zero(6);
  xs[0] = 0.5;
  xs[3] = -0.9;
  Eigen::VectorXd nus = Eigen::VectorXd::Zero(6);
  nus[2] = 2.0;
  Eigen::VectorXd omega = inst.A * xs + inst.N * nus;  // noiseless
  RecoveryOutput out =
      estimate_sparse(inst, identity_contrast(6), identity_contrast(6), omega);
  CHECK(out.feasible);
  // The true pair is strictly feasible at any positive threshold, so the
  // minimal l1 mass cannot exceed the planted one.
  CHECK(out.objective <= nus.lpNorm<1>() + 1e-6);
  CHECK(out.objective == doctest::Approx(out.nu_hat.lpNorm<1>()).epsilon(1e-12));
  CHECK(contains(inst.X, out.x_hat, 1e-7));
  const double kb = varkappa(inst.sigma, inst.epsilon, 12);
  Eigen::VectorXd resid = inst.A * out.x_hat + inst.N * out.nu_hat - omega;
  for (int i = 0; i < 6; ++i) CHECK(std::abs(resid[i]) <= kb + 1e-6);
}

TEST_CASE("sparse estimator returns the zero fallback on certified infeasibility") {
  ProblemInstance inst = square_instance(4, NuisanceSpec::sparse(1), 1.0);
  inst.N = Eigen::MatrixXd::Zero(4, 4);  // no nuisance channel to absorb omega
  inst.validate();
  Eigen::VectorXd omega = Eigen::VectorXd::Constant(4, 100.0);
  RecoveryOutput out =
      estimate_sparse(inst, identity_contrast(4), identity_contrast(4), omega);
  CHECK_FALSE(out.feasible);
  CHECK(out.x_hat.isZero(0.0));
  CHECK(out.nu_hat.isZero(0.0));
  CHECK(out.w_hat.isZero(0.0));
  CHECK(out.objective == 0.0);
}

TEST_CASE("sparse estimator objective is monotone in the threshold") {
  ProblemInstance inst = square_instance(5, NuisanceSpec::sparse(2));
  Rng rng(17);
  Eigen::VectorXd xs = Eigen::VectorXd::Zero(5);
  Eigen::VectorXd nus = Eigen::VectorXd::Zero(5);
  nus[1] = 1.5;
  nus[4] = -0.7;
  Eigen::VectorXd omega = sample_observation(inst, xs, nus, 99);
  ContrastMatrix I5 = identity_contrast(5);
  const double kb = varkappa(inst.sigma, inst.epsilon, 10);
  RecoveryOutput tight = estimate_sparse(inst, I5, I5, omega, kb);
  RecoveryOutput loose = estimate_sparse(inst, I5, I5, omega, 2.0 * kb);
  CHECK(loose.objective <= tight.objective + 1e-7);
}

TEST_CASE("aggregated recovery equals the sparse program on the same stack") {
  ProblemInstance inst = square_instance(4, NuisanceSpec::sparse(1));
  Eigen::VectorXd xs = Eigen::VectorXd::Zero(4);
  xs[1] = 0.4;
  Eigen::VectorXd nus = Eigen::VectorXd::Zero(4);
  nus[0] = 1.0;
  Eigen::VectorXd omega = sample_observation(inst, xs, nus, 5);
  ContrastMatrix G = identity_contrast(4);
  Eigen::MatrixXd hcols(4, 2);
  hcols.col(0) << 1, 1, 0, 0;
  hcols.col(1) << 0, 0, 1, -1;
  ContrastMatrix H(hcols);
  RecoveryOutput a = estimate_sparse(inst, G, H, omega);
  RecoveryOutput b = estimate_aggregated(inst, ContrastMatrix::concat(G, H), omega);
  CHECK(a.feasible == b.feasible);
  CHECK((a.x_hat - b.x_hat).cwiseAbs().maxCoeff() <= 1e-9);
  CHECK((a.nu_hat - b.nu_hat).cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("inside the confidence set the true pair dominates the l1 fit") {
  // Premise of the l1 analysis: whenever xi lands in the confidence set, the
  // planted pair is feasible, so ||nu_hat||_1 <= ||nu_star||_1.
  ProblemInstance inst = square_instance(5, NuisanceSpec::sparse(1));
  Eigen::VectorXd xs(5);
  xs << 0.2, -0.3, 0.5, 0.0, 0.1;
  Eigen::VectorXd nus = Eigen::VectorXd::Zero(5);
  nus[3] = 3.0;
  ContrastMatrix I5 = identity_contrast(5);
  ContrastMatrix stack = ContrastMatrix::concat(I5, I5);
  const double kb = varkappa(inst.sigma, inst.epsilon, stack.count());
  int held = 0;
  for (int t = 0; t < 30; ++t) {
    Eigen::VectorXd omega = sample_observation(inst, xs, nus, 4000 + t);
    Eigen::VectorXd xi = omega - inst.A * xs - inst.N * nus;
    if (!in_confidence_set(stack, xi, kb)) continue;
    ++held;
    RecoveryOutput out = estimate_sparse(inst, I5, I5, omega, kb);
    CHECK(out.feasible);
    CHECK(out.objective <= nus.lpNorm<1>() + 1e-6);
  }
  CHECK(held >= 25);  // the confidence set holds with probability >= 0.95
}

TEST_CASE("alternative estimator is the same program under its own name") {
  ProblemInstance inst = square_instance(4, NuisanceSpec::sparse(1));
  Eigen::VectorXd omega = sample_observation(inst, Eigen::VectorXd::Zero(4),
                                             Eigen::VectorXd::Zero(4), 11);
  ContrastMatrix I4 = identity_contrast(4);
  RecoveryOutput a = estimate_sparse(inst, I4, I4, omega);
  RecoveryOutput b = estimate_alternative(inst, I4, I4, omega);
  CHECK((a.x_hat - b.x_hat).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.nu_hat - b.nu_hat).cwiseAbs().maxCoeff() == 0.0);
}
