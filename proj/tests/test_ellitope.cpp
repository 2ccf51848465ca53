#include <cmath>
#include <random>

#include <Eigen/Dense>

#include "doctest.h"
#include "polyest/ellitope.hpp"
#include "polyest/ellitope_conic.hpp"
#include "polyest/errors.hpp"
#include "polyest/solve.hpp"

using namespace polyest;

namespace {

Eigen::VectorXd random_vec(int n, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> g;
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = scale * g(rng);
  return v;
}

Eigen::VectorXd random_nonneg(int n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 2.0);
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = u(rng);
  return v;
}

}  // namespace

TEST_CASE("support values of the parameter-set variants") {
  TSet box = TSet::box(Eigen::Vector3d(1, 1, 1));
  CHECK(support_value(box, Eigen::Vector3d(0.5, 0, 2)) == doctest::Approx(2.5));

  TSet p4 = TSet::pball(4.0, 1.0, 2);
  CHECK(support_value(p4, Eigen::Vector2d(3, 4)) == doctest::Approx(5.0));

  TSet p2 = TSet::pball(2.0, 1.0, 2);
  CHECK(support_value(p2, Eigen::Vector2d(3, 4)) == doctest::Approx(4.0));

  TSet prod = TSet::product({box, p2});
  Eigen::VectorXd dual(5);
  dual << 0.5, 0, 2, 3, 4;
  CHECK(support_value(prod, dual) == doctest::Approx(6.5));

  CHECK_THROWS_AS(support_value(box, Eigen::Vector3d(1, -0.1, 0)), InvalidArgument);
  CHECK_THROWS_AS(support_value(box, Eigen::Vector2d(1, 1)), InvalidArgument);
}

TEST_CASE("support function is homogeneous and subadditive") {
  std::mt19937_64 rng(5);
  TSet prod = TSet::product(
      {TSet::box(random_nonneg(3, rng).array() + 0.1),
       TSet::pball(4.0, 1.5, 2), TSet::pball(2.0, 0.7, 3)});
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::VectorXd a = random_nonneg(8, rng), b = random_nonneg(8, rng);
    const double sa = support_value(prod, a), sb = support_value(prod, b);
    CHECK(support_value(prod, 3.0 * a) == doctest::Approx(3.0 * sa));
    CHECK(support_value(prod, a + b) <= sa + sb + 1e-12);
  }
}

TEST_CASE("membership in box and p-ball ellitopes") {
  BasicEllitope box = unit_box_ellitope(4);
  CHECK(contains(box, Eigen::VectorXd::Constant(4, 0.5), 1e-9));
  CHECK(contains(box, Eigen::VectorXd::Zero(4), 1e-9));

  BasicEllitope ball4 = pball_ellitope(3, 4.0);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(3);
  x[0] = 1.01;  // ||x||_4 = 1.01
  CHECK_FALSE(contains(ball4, x, 1e-9));
  CHECK(contains(ball4, Eigen::VectorXd::Zero(3), 1e-9));

  CHECK_THROWS_AS(contains(box, Eigen::VectorXd::Zero(3), 1e-9), InvalidArgument);
}

TEST_CASE("membership agrees with closed-form norm tests") {
  std::mt19937_64 rng(17);
  BasicEllitope box = unit_box_ellitope(5);
  BasicEllitope ball = pball_ellitope(5, 6.0);
  std::uniform_real_distribution<double> u(-1.3, 1.3);
  for (int trial = 0; trial < 1000; ++trial) {
    Eigen::VectorXd x(5);
    for (int i = 0; i < 5; ++i) x[i] = u(rng);
    CHECK(contains(box, x, 1e-9) == (x.cwiseAbs().maxCoeff() <= 1.0 + 1e-9));
    const double p6 = std::pow(x.cwiseAbs().array().pow(6.0).sum(), 1.0 / 6.0);
    // both sides use the squared-form comparison scale
    CHECK(contains(ball, x, 1e-9) == (p6 * p6 <= 1.0 + 1e-9));
  }
}

TEST_CASE("membership is scale-monotone") {
  std::mt19937_64 rng(19);
  BasicEllitope ball = pball_ellitope(4, 4.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    Eigen::VectorXd x = random_vec(4, rng);
    if (!contains(ball, x, 0.0)) x /= (1e-12 + 2.0 * gauge(ball, x));
    REQUIRE(contains(ball, x, 1e-12));
    CHECK(contains(ball, u(rng) * x, 1e-12));
  }
}

TEST_CASE("direct products preserve membership componentwise") {
  std::mt19937_64 rng(23);
  BasicEllitope box2 = unit_box_ellitope(2);
  BasicEllitope box3 = unit_box_ellitope(3);
  BasicEllitope prod = direct_product(box2, box3);
  BasicEllitope box5 = unit_box_ellitope(5);
  std::uniform_real_distribution<double> u(-1.2, 1.2);
  for (int trial = 0; trial < 200; ++trial) {
    Eigen::VectorXd x(5);
    for (int i = 0; i < 5; ++i) x[i] = u(rng);
    CHECK(contains(prod, x, 1e-9) == contains(box5, x, 1e-9));
  }

  BasicEllitope ball = euclidean_ball_ellitope(3, 1.0);
  BasicEllitope mixed = direct_product(box2, ball);
  Eigen::VectorXd bad(5);
  bad << 0.5, 0.5, 2.0, 0.0, 0.0;  // ||y||_2 = 2
  CHECK_FALSE(contains(mixed, bad, 1e-9));

  BasicEllitope pa = pball_ellitope(2, 4.0);
  BasicEllitope pb = pball_ellitope(3, 6.0);
  BasicEllitope pp = direct_product(pa, pb);
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::VectorXd x(5);
    for (int i = 0; i < 5; ++i) x[i] = u(rng);
    const bool expect =
        contains(pa, x.head(2), 1e-9) && contains(pb, x.tail(3), 1e-9);
    CHECK(contains(pp, x, 1e-9) == expect);
  }
}

TEST_CASE("gauge scales membership to the boundary") {
  std::mt19937_64 rng(29);
  BasicEllitope prod =
      direct_product(pball_ellitope(3, 4.0), euclidean_ball_ellitope(2, 0.5));
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::VectorXd x = random_vec(5, rng);
    const double g = gauge(prod, x);
    REQUIRE(g > 0.0);
    CHECK(contains(prod, x / (g * (1 + 1e-9)), 1e-9));
    CHECK_FALSE(contains(prod, x * (1 + 1e-6) / g, 1e-9));
    CHECK(gauge(prod, 2.0 * x) == doctest::Approx(2.0 * g));
  }
}

TEST_CASE("contamination-channel ball: gauge identity and membership") {
  // Unit ball of 2*max[pi(.), varkappa*||.||_2].
  std::mt19937_64 rng(31);
  BasicEllitope nstar = euclidean_ball_ellitope(4, 1.0);
  const double vk = 1.0;
  BasicEllitope W = cw_ellitope(nstar, vk);
  CHECK(W.num_forms() == 2);
  CHECK(contains(W, Eigen::VectorXd::Zero(4), 1e-12));

  // Here pi = ||.||_2, so W is the Euclidean ball of radius 1/2.
  for (int i = 0; i < 4; ++i) {
    Eigen::VectorXd e = Eigen::VectorXd::Unit(4, i);
    CHECK(contains(W, 0.4999 * e, 1e-12));
    CHECK_FALSE(contains(W, 0.5001 * e, 1e-12));
  }

  // Gauge identity on random vectors, against an independent pi evaluation.
  BasicEllitope nstar2 = direct_product(euclidean_ball_ellitope(2, 2.0),
                                        unit_box_ellitope(2));
  const double vk2 = 0.7;
  BasicEllitope W2 = cw_ellitope(nstar2, vk2);
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::VectorXd g = random_vec(4, rng);
    const double pi = gauge(nstar2, g);
    const double theta = gauge(W2, g);
    CHECK(theta == doctest::Approx(2.0 * std::max(pi, vk2 * g.norm())));
    CHECK(gauge(W2, 2.0 * g) == doctest::Approx(2.0 * theta));
  }

  CHECK_THROWS_AS(cw_ellitope(nstar, 0.0), InvalidArgument);
}

TEST_CASE("constructor rejects malformed ellitopes") {
  std::vector<Eigen::MatrixXd> forms;
  forms.push_back(Eigen::Vector2d(1.0, -0.5).asDiagonal());
  CHECK_THROWS_AS(BasicEllitope(2, std::move(forms), TSet::box(Eigen::VectorXd::Ones(1))),
                  InvalidArgument);

  std::vector<Eigen::MatrixXd> degen;
  degen.push_back((Eigen::Matrix2d() << 1, 0, 0, 0).finished());
  CHECK_THROWS_AS(BasicEllitope(2, std::move(degen), TSet::box(Eigen::VectorXd::Ones(1))),
                  InvalidArgument);

  CHECK_THROWS_AS(TSet::pball(1.5, 1.0, 2), InvalidArgument);
  CHECK_THROWS_AS(TSet::box(Eigen::Vector2d(1.0, 0.0)), InvalidArgument);
}

TEST_CASE("linear maximization over ellitopes hits closed forms") {
  std::mt19937_64 rng(37);
  for (int trial = 0; trial < 3; ++trial) {
    Eigen::VectorXd c = random_vec(4, rng);

    // Unit box: max is ||c||_1.
    CHECK(max_linear_over_ellitope(unit_box_ellitope(4), c) ==
          doctest::Approx(c.lpNorm<1>()).epsilon(1e-6));

    // Euclidean ball radius r: max is r*||c||_2.
    CHECK(max_linear_over_ellitope(euclidean_ball_ellitope(4, 0.8), c) ==
          doctest::Approx(0.8 * c.norm()).epsilon(1e-6));

    // p-ball, p = 4: max is the dual norm ||c||_{4/3}.
    const double dual43 = std::pow(c.cwiseAbs().array().pow(4.0 / 3.0).sum(), 0.75);
    CHECK(max_linear_over_ellitope(pball_ellitope(4, 4.0), c) ==
          doctest::Approx(dual43).epsilon(1e-6));
  }
}

TEST_CASE("support epigraph matches direct evaluation at pinned multipliers") {
  std::mt19937_64 rng(41);
  TSet tset = TSet::product({TSet::box(Eigen::Vector2d(2.0, 0.5)),
                             TSet::pball(4.0, 1.5, 3),
                             TSet::pball(2.0, 0.7, 2)});
  for (int trial = 0; trial < 5; ++trial) {
    Eigen::VectorXd chi = random_nonneg(7, rng);
    conic::ConicProgram prog;
    const int v = prog.add_vector("chi", 7);
    std::vector<conic::LinExpr> exprs;
    for (int j = 0; j < 7; ++j) {
      prog.add_eq(conic::LinExpr(-chi[j]).add(v, j, 1.0));
      exprs.push_back(conic::LinExpr().add(v, j, 1.0));
    }
    conic::LinExpr phi = add_support_epigraph(prog, tset, exprs);
    prog.set_objective(conic::Sense::Minimize, phi);
    const double got = solve_optimal(prog).objective;
    CHECK(got == doctest::Approx(support_value(tset, chi)).epsilon(1e-6));
  }
}

TEST_CASE("parameter-set domination rows reproduce the gauge") {
  std::mt19937_64 rng(43);
  TSet tset = TSet::product({TSet::box(Eigen::Vector3d(1.0, 2.0, 0.5)),
                             TSet::pball(4.0, 1.2, 3)});
  for (int trial = 0; trial < 5; ++trial) {
    Eigen::VectorXd q = random_nonneg(6, rng);
    conic::ConicProgram prog;
    const int rho = prog.add_scalar("rho");
    prog.add_nonneg(conic::LinExpr().add(rho, 0, 1.0));
    std::vector<conic::LinExpr> rows;
    for (int j = 0; j < 6; ++j) rows.push_back(conic::LinExpr(q[j]));
    add_tset_domination(prog, tset, rows, conic::LinExpr().add(rho, 0, 1.0));
    prog.set_objective(conic::Sense::Minimize, conic::LinExpr().add(rho, 0, 1.0));
    const double got = solve_optimal(prog).objective;
    CHECK(got == doctest::Approx(tset_gauge(tset, q)).epsilon(1e-6));
  }
}

TEST_CASE("linear-image ellitope validates shapes") {
  BasicEllitope base = unit_box_ellitope(3);
  LinearImageEllitope img(base, Eigen::MatrixXd::Random(5, 3));
  CHECK(img.ambient() == 5);
  CHECK_THROWS_AS(LinearImageEllitope(base, Eigen::MatrixXd::Random(5, 4)),
                  InvalidArgument);
}
