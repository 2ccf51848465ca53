#include <cmath>
#include <random>

#include <Eigen/Dense>

#include "doctest.h"
#include "polyest/ellitope.hpp"
#include "polyest/errors.hpp"
#include "polyest/model.hpp"
#include "polyest/rng.hpp"

using namespace polyest;

namespace {

ProblemInstance tiny_instance(int m, int p, int n, NuisanceSpec nuisance,
                              double sigma = 0.1, double epsilon = 0.05) {
  std::mt19937_64 rng(99);
  std::normal_distribution<double> g;
  Eigen::MatrixXd A(m, p), N(m, n);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < p; ++j) A(i, j) = g(rng);
    for (int j = 0; j < n; ++j) N(i, j) = g(rng);
  }
  ProblemInstance inst{A,
                       Eigen::MatrixXd::Identity(p, p),
                       N,
                       unit_box_ellitope(p),
                       euclidean_ball_ellitope(p, 1.0),
                       std::move(nuisance),
                       sigma,
                       epsilon};
  inst.validate();
  return inst;
}

}  // namespace

TEST_CASE("confidence threshold formula") {
  // Independent high-precision evaluation of sigma*sqrt(2 ln(2 count / eps)).
  const long double ref =
      0.1L * std::sqrt(2.0L * std::log(2.0L * 512.0L / 0.05L));
  CHECK(varkappa(0.1, 0.05, 512) == doctest::Approx(static_cast<double>(ref)).epsilon(1e-12));
  CHECK(varkappa(0.1, 0.05, 512) == doctest::Approx(0.445585).epsilon(1e-5));

  CHECK(varkappa(0.3, 2.0 * 7, 7) == doctest::Approx(0.0));
  CHECK(varkappa(0.2, 0.05, 512) == doctest::Approx(2.0 * varkappa(0.1, 0.05, 512)));

  CHECK_THROWS_AS(varkappa(-1.0, 0.05, 4), InvalidArgument);
  CHECK_THROWS_AS(varkappa(0.1, 0.0, 4), InvalidArgument);
  CHECK_THROWS_AS(varkappa(0.1, 0.05, 0), InvalidArgument);
  CHECK_THROWS_AS(varkappa(0.1, 9.0, 4), InvalidArgument);
}

TEST_CASE("observation sampling: determinism and limits") {
  ProblemInstance inst = tiny_instance(6, 3, 4, NuisanceSpec::sparse(2));
  Eigen::VectorXd x = Eigen::VectorXd::Constant(3, 0.5);
  Eigen::VectorXd nu = Eigen::VectorXd::Zero(4);
  nu[1] = 2.0;

  Eigen::VectorXd w1 = sample_observation(inst, x, nu, 1234);
  Eigen::VectorXd w2 = sample_observation(inst, x, nu, 1234);
  CHECK((w1 - w2).cwiseAbs().maxCoeff() == 0.0);
  Eigen::VectorXd w3 = sample_observation(inst, x, nu, 1235);
  CHECK((w1 - w3).cwiseAbs().maxCoeff() > 0.0);

  ProblemInstance noiseless = inst;
  noiseless.sigma = 1e-300;
  Eigen::VectorXd w0 = sample_observation(noiseless, x, nu, 7);
  CHECK((w0 - (inst.A * x + inst.N * nu)).cwiseAbs().maxCoeff() <= 1e-290);

  // Membership violations rejected in checked mode only.
  Eigen::VectorXd bad_x = Eigen::VectorXd::Constant(3, 1.5);
  CHECK_THROWS_AS(sample_observation(inst, bad_x, nu, 7), InvalidArgument);
  CHECK_NOTHROW(sample_observation(inst, bad_x, nu, 7, false));
  Eigen::VectorXd dense_nu = Eigen::VectorXd::Constant(4, 1.0);
  CHECK_THROWS_AS(sample_observation(inst, x, dense_nu, 7), InvalidArgument);
}

TEST_CASE("observation noise has the declared second moment") {
  ProblemInstance inst = tiny_instance(8, 3, 4, NuisanceSpec::sparse(2), 0.3);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(3);
  Eigen::VectorXd nu = Eigen::VectorXd::Zero(4);
  double acc = 0.0;
  const int draws = 10000;
  for (int t = 0; t < draws; ++t) {
    acc += sample_observation(inst, x, nu, 1000 + t).squaredNorm();
  }
  const double per_coord = acc / (draws * inst.m());
  CHECK(per_coord == doctest::Approx(0.09).epsilon(0.05));
}

TEST_CASE("confidence set membership") {
  std::mt19937_64 mt(3);
  std::normal_distribution<double> g;
  Eigen::MatrixXd cols(5, 3);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 3; ++j) cols(i, j) = g(mt);
  ContrastMatrix G(cols);

  CHECK(in_confidence_set(G, Eigen::VectorXd::Zero(5), 0.3));

  const double vk = 0.3;
  Eigen::VectorXd gcol = G.column(1);
  Eigen::VectorXd xi = (vk + 1e-6) * gcol / gcol.norm();
  CHECK_FALSE(in_confidence_set(ContrastMatrix(gcol), xi, vk));
  CHECK(in_confidence_set(ContrastMatrix(gcol), (vk - 1e-6) * gcol / gcol.norm(), vk));
}

TEST_CASE("confidence set rejection rate stays within the union bound") {
  const double sigma = 0.25, eps = 0.1;
  for (int I : {1, 8}) {
    Rng rng(2026 + I);
    Eigen::MatrixXd cols(6, I);
    for (int j = 0; j < I; ++j) cols.col(j) = rng.gaussian_vector(6);
    ContrastMatrix G(cols);
    const double vk = varkappa(sigma, eps, I);
    const int draws = 2000;
    int rejected = 0;
    for (int t = 0; t < draws; ++t) {
      if (!in_confidence_set(G, rng.gaussian_vector(6, sigma), vk)) ++rejected;
    }
    const double rate = static_cast<double>(rejected) / draws;
    const double band = 3.0 * std::sqrt(eps * (1 - eps) / draws);
    CHECK(rate <= eps + band);
  }
}

TEST_CASE("nuisance seminorm closed forms and oracle") {
  const int m = 4, n = 4;
  NuisanceSpec ball = NuisanceSpec::ellitopic(euclidean_ball_ellitope(n, 1.0));
  Eigen::MatrixXd I4 = Eigen::MatrixXd::Identity(m, n);
  Rng rng(55);
  for (int t = 0; t < 3; ++t) {
    Eigen::VectorXd h = rng.gaussian_vector(m);
    CHECK(nuisance_seminorm(ball, I4, h) == doctest::Approx(h.norm()).epsilon(1e-6));
  }
  CHECK(nuisance_seminorm(ball, I4, Eigen::VectorXd::Zero(m)) == doctest::Approx(0.0));

  // Box nuisance against brute force over the 2^n vertices.
  NuisanceSpec box = NuisanceSpec::ellitopic(unit_box_ellitope(5));
  Eigen::MatrixXd N(4, 5);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 5; ++j) N(i, j) = rng.normal();
  for (int t = 0; t < 3; ++t) {
    Eigen::VectorXd h = rng.gaussian_vector(4);
    Eigen::VectorXd w = N.transpose() * h;
    double best = 0.0;
    for (int mask = 0; mask < 32; ++mask) {
      double v = 0.0;
      for (int j = 0; j < 5; ++j) v += ((mask >> j) & 1 ? 1.0 : -1.0) * w[j];
      best = std::max(best, v);
    }
    CHECK(nuisance_seminorm(box, N, h) == doctest::Approx(best).epsilon(1e-6));
  }

  CHECK_THROWS_AS(nuisance_seminorm(NuisanceSpec::sparse(2), N,
                                    Eigen::VectorXd::Zero(4)),
                  InvalidArgument);
}

TEST_CASE("co-ellitopic seminorm is a norm") {
  BasicEllitope nstar = direct_product(euclidean_ball_ellitope(2, 1.5),
                                       pball_ellitope(2, 4.0));
  NuisanceSpec spec = NuisanceSpec::co_ellitopic(nstar);
  Eigen::MatrixXd N = Eigen::MatrixXd::Identity(4, 4);
  Rng rng(77);
  for (int t = 0; t < 50; ++t) {
    Eigen::VectorXd a = rng.gaussian_vector(4), b = rng.gaussian_vector(4);
    const double pa = nuisance_seminorm(spec, N, a);
    const double pb = nuisance_seminorm(spec, N, b);
    const double pab = nuisance_seminorm(spec, N, a + b);
    CHECK(nuisance_seminorm(spec, N, 2.5 * a) == doctest::Approx(2.5 * pa).epsilon(1e-10));
    CHECK(pab <= pa + pb + 1e-8);
  }
}

TEST_CASE("ellitopic seminorm triangle inequality via conic solves") {
  NuisanceSpec spec = NuisanceSpec::ellitopic(pball_ellitope(3, 4.0));
  Rng rng(78);
  Eigen::MatrixXd N(3, 3);
  for (int i = 0; i < 3; ++i) N.row(i) = rng.gaussian_vector(3).transpose();
  for (int t = 0; t < 5; ++t) {
    Eigen::VectorXd a = rng.gaussian_vector(3), b = rng.gaussian_vector(3);
    const double pa = nuisance_seminorm(spec, N, a);
    const double pb = nuisance_seminorm(spec, N, b);
    const double pab = nuisance_seminorm(spec, N, a + b);
    CHECK(pab <= pa + pb + 1e-8);
    CHECK(nuisance_seminorm(spec, N, 3.0 * a) == doctest::Approx(3.0 * pa).epsilon(1e-7));
  }
}

TEST_CASE("error norm against its defining maximization") {
  Rng rng(79);
  BasicEllitope ball = euclidean_ball_ellitope(3, 2.0);
  for (int t = 0; t < 5; ++t) {
    Eigen::VectorXd v = rng.gaussian_vector(3);
    CHECK(error_norm(ball, v) == doctest::Approx(2.0 * v.norm()).epsilon(1e-9));
  }
  // ell_1-type polar: bstar the unit box gives the sup-norm's dual, ||v||_1.
  BasicEllitope box = unit_box_ellitope(3);
  for (int t = 0; t < 3; ++t) {
    Eigen::VectorXd v = rng.gaussian_vector(3);
    CHECK(error_norm(box, v) == doctest::Approx(v.lpNorm<1>()).epsilon(1e-6));
  }
}

TEST_CASE("contrast matrix bookkeeping") {
  Eigen::MatrixXd cols(3, 4);
  cols.setZero();
  cols.col(0) << 1, 0, 0;
  cols.col(2) << 0, 3, 4;
  ContrastMatrix G(cols, {ColumnRole::HBlock, ColumnRole::GBlock,
                          ColumnRole::GBlock, ColumnRole::AltGBlock});
  CHECK(G.max_column_norm() == doctest::Approx(5.0));
  ContrastMatrix trimmed = G.without_zero_columns();
  CHECK(trimmed.count() == 2);
  CHECK(trimmed.role(0) == ColumnRole::HBlock);
  CHECK(trimmed.role(1) == ColumnRole::GBlock);

  ContrastMatrix joined = ContrastMatrix::concat(G, trimmed);
  CHECK(joined.count() == 6);
  CHECK(joined.role(5) == ColumnRole::GBlock);

  CHECK_THROWS_AS(ContrastMatrix(cols, {ColumnRole::HBlock}), InvalidArgument);
}

TEST_CASE("instance validation rejects bad couplings") {
  ProblemInstance inst = tiny_instance(6, 3, 4, NuisanceSpec::sparse(2));
  ProblemInstance bad = inst;
  bad.N = Eigen::MatrixXd::Zero(5, 4);
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  bad = inst;
  bad.epsilon = 1.0;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  bad = inst;
  bad.nuisance = NuisanceSpec::sparse(9);
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  bad = inst;
  bad.nuisance = NuisanceSpec::co_ellitopic(euclidean_ball_ellitope(5, 1.0));
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
}

TEST_CASE("absent nuisance pins nu to zero") {
  ProblemInstance inst = tiny_instance(6, 3, 4, NuisanceSpec::none());
  CHECK(inst.nuisance.bounded());
  Eigen::VectorXd x = Eigen::VectorXd::Constant(3, 0.5);
  CHECK_NOTHROW(sample_observation(inst, x, Eigen::VectorXd::Zero(4), 3));
  Eigen::VectorXd nz = Eigen::VectorXd::Zero(4);
  nz[2] = 1e-12;
  CHECK_THROWS_AS(sample_observation(inst, x, nz, 3), InvalidArgument);
  // The induced seminorm vanishes identically.
  CHECK(nuisance_seminorm(inst.nuisance, inst.N,
                          Eigen::VectorXd::Constant(6, 2.0)) == 0.0);
}

TEST_CASE("instance hash separates instances and is stable") {
  ProblemInstance a = tiny_instance(6, 3, 4, NuisanceSpec::sparse(2));
  ProblemInstance b = tiny_instance(6, 3, 4, NuisanceSpec::sparse(2));
  CHECK(instance_hash(a) == instance_hash(b));
  ProblemInstance c = a;
  c.sigma = 0.11;
  CHECK(instance_hash(c) != instance_hash(a));
  ProblemInstance d = a;
  d.A(0, 0) += 1e-12;
  CHECK(instance_hash(d) != instance_hash(a));
  ProblemInstance e = a;
  e.nuisance = NuisanceSpec::sparse(3);
  CHECK(instance_hash(e) != instance_hash(a));
}

TEST_CASE("seed splitting produces distinct reproducible streams") {
  Rng a(42), b(42);
  CHECK(a.split(3).gaussian_vector(4) == b.split(3).gaussian_vector(4));
  CHECK((a.split(1).gaussian_vector(4) - b.split(2).gaussian_vector(4))
            .cwiseAbs()
            .maxCoeff() > 0.0);
}
