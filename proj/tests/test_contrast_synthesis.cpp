#include <cmath>

#include <Eigen/Dense>

#include "doctest.h"
#include "polyest/contrast_synthesis.hpp"
#include "polyest/ellitope.hpp"
#include "polyest/errors.hpp"
#include "polyest/model.hpp"
#include "polyest/recovery.hpp"
#include "polyest/risk_certification.hpp"
#include "polyest/rng.hpp"
#include "polyest/solve.hpp"

using namespace polyest;

namespace {

Eigen::MatrixXd gaussian_matrix(Rng& rng, int rows, int cols) {
  Eigen::MatrixXd M(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) M(i, j) = rng.normal();
  return M;
}

Eigen::MatrixXd orthonormal_columns(Rng& rng, int rows, int cols) {
  Eigen::MatrixXd M = gaussian_matrix(rng, rows, cols);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(M);
  return qr.householderQ() * Eigen::MatrixXd::Identity(rows, cols);
}

Eigen::MatrixXd random_psd(Rng& rng, int n) {
  Eigen::MatrixXd F = gaussian_matrix(rng, n, n);
  return F * F.transpose() / n;
}

Eigen::VectorXd ball_point(Rng& rng, int dim, double radius) {
  Eigen::VectorXd u = rng.gaussian_vector(dim);
  const double r = radius * std::sqrt(rng.uniform());
  return (r / std::max(1e-12, u.norm())) * u;
}

ProblemInstance ball_instance(Eigen::MatrixXd A, Eigen::MatrixXd B,
                              Eigen::MatrixXd N, double x_radius,
                              NuisanceSpec nuisance, double sigma = 0.1,
                              double epsilon = 0.05) {
  const int p = static_cast<int>(A.cols());
  const int q = static_cast<int>(B.rows());
  ProblemInstance inst{std::move(A),
                       std::move(B),
                       std::move(N),
                       euclidean_ball_ellitope(p, x_radius),
                       euclidean_ball_ellitope(q, 1.0),
                       std::move(nuisance),
                       sigma,
                       epsilon};
  inst.validate();
  return inst;
}

}  // namespace

TEST_CASE("mixing budget factor formula") {
  const long double ref = 2.0L * std::sqrt(2.0L) * std::log(4.0L * 36.0L * 3.0L);
  CHECK(mixing_budget_factor(6, 3) ==
        doctest::Approx(static_cast<double>(ref)).epsilon(1e-14));
  CHECK_THROWS_AS(mixing_budget_factor(0, 1), InvalidArgument);
}

TEST_CASE("single-form decomposition is the plain eigendecomposition") {
  Rng rng(601);
  const int m = 5;
  const BasicEllitope W = euclidean_ball_ellitope(m, 1.0);
  const Eigen::MatrixXd Theta = random_psd(rng, m);
  const double rho = Theta.trace();

  const DecompositionResult dec = decompose_over_ellitope(Theta, rho, W, m, 77);
  CHECK(dec.attempts == 1);
  REQUIRE(dec.gamma.size() == m);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(Theta);
  for (int i = 0; i < m; ++i) {
    CHECK(dec.gamma[i] == doctest::Approx(eig.eigenvalues()[i]).epsilon(1e-12));
    CHECK((dec.vectors.col(i) - eig.eigenvectors().col(i)).norm() <= 1e-10);
  }
  CHECK(dec.reconstruction_error <= 1e-10);
  CHECK(dec.gamma.sum() <= dec.claimed_budget + 1e-9);
}

TEST_CASE("multi-form decomposition meets budget and membership") {
  Rng rng(602);
  const int m = 6, J = 3;
  std::vector<Eigen::MatrixXd> forms;
  for (int j = 0; j < J; ++j)
    forms.push_back(random_psd(rng, m) +
                    0.1 * Eigen::MatrixXd::Identity(m, m));
  const BasicEllitope W(m, forms, TSet::box(Eigen::VectorXd::Ones(J)));
  const Eigen::MatrixXd Theta = random_psd(rng, m);
  double rho = 0.0;
  for (int j = 0; j < J; ++j) rho = std::max(rho, (Theta * forms[j]).trace());

  const DecompositionResult dec =
      decompose_over_ellitope(Theta, rho, W, 2 * m, 78);
  CHECK(dec.gamma.minCoeff() > 0.0);
  CHECK(dec.gamma.sum() <= dec.claimed_budget * (1.0 + 1e-9) + 1e-9);
  CHECK(dec.reconstruction_error <= 1e-9 * (1.0 + Theta.norm()));
  for (int i = 0; i < dec.vectors.cols(); ++i)
    CHECK(gauge(W, dec.vectors.col(i)) <= 1.0 + 1e-9);

  CHECK(decompose_over_ellitope(Eigen::MatrixXd::Zero(m, m), 1.0, W, m, 5)
            .gamma.size() == 0);
  CHECK_THROWS_AS(decompose_over_ellitope(Theta, 1e-4 * rho, W, m, 5),
                  InvalidArgument);
}

TEST_CASE("no-nuisance design round-trips through its certificate") {
  for (std::uint64_t seed : {611u, 612u, 613u}) {
    Rng rng(seed);
    const int m = 5, p = 3, q = 2;
    ProblemInstance inst =
        ball_instance(gaussian_matrix(rng, m, p), gaussian_matrix(rng, q, p),
                      Eigen::MatrixXd::Identity(m, 1), 1.0, NuisanceSpec::none());
    const SynthesisReport rep = synth_no_nuisance(inst);
    CHECK(rep.opt_value > 0.0);
    CHECK(rep.contrast.count() >= 1);
    CHECK(rep.contrast.count() <= m);
    CHECK(rep.contrast.role(0) == ColumnRole::GBlock);
    CHECK(rep.certificate.kind == BoundKind::Bounded);
    CHECK(rep.certificate.instance_hash == instance_hash(inst));
    CHECK(rep.certificate.value ==
          doctest::Approx(rep.opt_value).epsilon(1e-4));

    // Re-certifying the synthesized columns at the design count lands back on
    // the program optimum; at the emitted count the bound can only improve.
    const RiskCertificate again = certify_bounded(inst, rep.contrast, m);
    CHECK(again.value <= rep.opt_value * (1.0 + 1e-4) + 1e-8);
    CHECK(again.value >= rep.opt_value * (1.0 - 1e-4) - 1e-8);
    const RiskCertificate tighter = certify_bounded(inst, rep.contrast);
    CHECK(tighter.value <= again.value * (1.0 + 1e-6) + 1e-8);
  }
}

TEST_CASE("no-nuisance design dominates the estimator it induces") {
  Rng rng(614);
  const int m = 4, p = 2;
  ProblemInstance inst = ball_instance(
      orthonormal_columns(rng, m, p), Eigen::MatrixXd::Identity(p, p),
      Eigen::MatrixXd::Identity(m, 1), 1.0, NuisanceSpec::none());
  const SynthesisReport rep = synth_no_nuisance(inst);
  const double vk = varkappa(inst.sigma, inst.epsilon, m);
  int conditioned = 0;
  for (int trial = 0; trial < 100; ++trial) {
    Rng sub = rng.split(trial);
    const Eigen::VectorXd x_star = ball_point(sub, p, 1.0);
    const Eigen::VectorXd omega =
        sample_observation(inst, x_star, Eigen::VectorXd::Zero(1), 30000 + trial);
    if (!in_confidence_set(rep.contrast, omega - inst.A * x_star, vk)) continue;
    ++conditioned;
    const RecoveryOutput out = estimate_bounded(inst, rep.contrast, omega);
    CHECK(error_norm(inst.bstar, out.w_hat - inst.B * x_star) <=
          rep.certificate.value + 1e-7);
  }
  CHECK(conditioned >= 85);
}

TEST_CASE("degenerate sensing yields an empty design") {
  Rng rng(615);
  ProblemInstance inst =
      ball_instance(gaussian_matrix(rng, 3, 2), Eigen::MatrixXd::Zero(2, 2),
                    Eigen::MatrixXd::Identity(3, 1), 1.0, NuisanceSpec::none());
  const SynthesisReport rep = synth_no_nuisance(inst);
  CHECK(rep.contrast.count() == 0);
  CHECK(rep.certificate.value == 0.0);
}

TEST_CASE("ellitopic nuisance folds into an augmented signal") {
  Rng rng(616);
  const int m = 4, p = 2, n = 2;
  ProblemInstance inst = ball_instance(
      orthonormal_columns(rng, m, p), Eigen::MatrixXd::Identity(p, p),
      0.5 * gaussian_matrix(rng, m, n), 1.0,
      NuisanceSpec::ellitopic(euclidean_ball_ellitope(n, 0.5)));
  const ProblemInstance aug = augment_ellitopic(inst);
  CHECK(aug.p() == p + n);
  CHECK(aug.nuisance.kind() == NuisanceSpec::Kind::None);
  CHECK((aug.A.leftCols(p) - inst.A).norm() == 0.0);
  CHECK((aug.A.rightCols(n) - inst.N).norm() == 0.0);
  CHECK(aug.B.rightCols(n).isZero(0.0));

  const SynthesisReport rep = synth_ellitopic_nuisance(inst);
  CHECK(rep.certificate.value > 0.0);
  CHECK(rep.certificate.instance_hash == instance_hash(aug));

  const double vk = varkappa(inst.sigma, inst.epsilon, m);
  int conditioned = 0;
  for (int trial = 0; trial < 100; ++trial) {
    Rng sub = rng.split(200 + trial);
    const Eigen::VectorXd x_star = ball_point(sub, p, 1.0);
    const Eigen::VectorXd nu_star = ball_point(sub, n, 0.5);
    const Eigen::VectorXd omega =
        sample_observation(inst, x_star, nu_star, 31000 + trial);
    const Eigen::VectorXd xi = omega - inst.A * x_star - inst.N * nu_star;
    if (!in_confidence_set(rep.contrast, xi, vk)) continue;
    ++conditioned;
    const RecoveryOutput out = estimate_bounded(inst, rep.contrast, omega);
    CHECK(error_norm(inst.bstar, out.w_hat - inst.B * x_star) <=
          rep.certificate.value + 1e-7);
  }
  CHECK(conditioned >= 85);
}

TEST_CASE("co-ellitopic design stays within its program optimum") {
  Rng rng(617);
  const int m = 4, p = 2;
  ProblemInstance inst = ball_instance(
      orthonormal_columns(rng, m, p), Eigen::MatrixXd::Identity(p, p),
      Eigen::MatrixXd::Identity(m, m), 1.0,
      NuisanceSpec::co_ellitopic(euclidean_ball_ellitope(m, 2.0)));
  const SynthesisReport rep = synth_coellitopic(inst);
  CHECK(rep.opt_value > 0.0);
  CHECK(rep.certificate.value <= rep.opt_value * (1.0 + 1e-6) + 1e-8);
  REQUIRE(rep.decomposition.has_value());
  CHECK(rep.decomposition->gamma.sum() <=
        rep.decomposition->claimed_budget * (1.0 + 1e-9) + 1e-9);

  const double vk = varkappa(inst.sigma, inst.epsilon, m);
  const BasicEllitope& nstar = inst.nuisance.nstar();
  for (int i = 0; i < rep.contrast.count(); ++i) {
    const Eigen::VectorXd g = rep.contrast.column(i);
    CHECK(2.0 * std::max(gauge(nstar, g), vk * g.norm()) <= 1.0 + 1e-8);
  }

  int conditioned = 0;
  for (int trial = 0; trial < 100; ++trial) {
    Rng sub = rng.split(400 + trial);
    const Eigen::VectorXd x_star = ball_point(sub, p, 1.0);
    const Eigen::VectorXd nu_star = ball_point(sub, m, 0.495);
    const Eigen::VectorXd omega =
        sample_observation(inst, x_star, nu_star, 32000 + trial);
    const Eigen::VectorXd xi = omega - inst.A * x_star - inst.N * nu_star;
    if (!in_confidence_set(rep.contrast, xi, vk)) continue;
    ++conditioned;
    const RecoveryOutput out = estimate_bounded(inst, rep.contrast, omega);
    CHECK(error_norm(inst.bstar, out.w_hat - inst.B * x_star) <=
          rep.certificate.value + 1e-7);
  }
  CHECK(conditioned >= 85);
}

TEST_CASE("channel design matches the hand-solved identity instance") {
  const int m = 4;
  ProblemInstance inst = ball_instance(
      Eigen::MatrixXd::Zero(m, 2), Eigen::MatrixXd::Identity(2, 2),
      Eigen::MatrixXd::Identity(m, m), 1.0, NuisanceSpec::sparse(2));
  const double kappa = 0.25;
  const ContrastMatrix H = synth_h_sparse(inst, kappa);
  REQUIRE(H.count() == m);
  CHECK(H.role(0) == ColumnRole::HBlock);
  const double shrink = 1.0 - kappa / 2.0;
  for (int k = 0; k < m; ++k) {
    Eigen::VectorXd expect = Eigen::VectorXd::Zero(m);
    expect[k] = shrink;
    CHECK((H.column(k) - expect).lpNorm<Eigen::Infinity>() <= 1e-4);
  }

  ProblemInstance open_channel = ball_instance(
      Eigen::MatrixXd::Zero(m, 2), Eigen::MatrixXd::Identity(2, 2),
      Eigen::MatrixXd::Zero(m, m), 1.0, NuisanceSpec::sparse(2));
  CHECK_THROWS_AS(synth_h_sparse(open_channel, kappa), conic::SolveError);
}

TEST_CASE("sparse design certificate dominates its estimator") {
  Rng rng(618);
  const int m = 5, p = 2;
  ProblemInstance inst = ball_instance(
      orthonormal_columns(rng, m, p), Eigen::MatrixXd::Identity(p, p),
      Eigen::MatrixXd::Identity(m, m), 1.0, NuisanceSpec::sparse(1));
  const double kappa = 0.25;
  const ContrastMatrix H = synth_h_sparse(inst, kappa);
  const SynthesisReport rep = synth_g_sparse(inst, H, kappa);
  CHECK(rep.certificate.kind == BoundKind::Sparse);
  CHECK(rep.contrast.count() <= 2 * m);
  CHECK(rep.h_block.count() == m);
  CHECK(rep.certificate.value <= rep.opt_value * (1.0 + 1e-6) + 1e-8);
  CHECK(rep.certificate.value > 0.0);

  const double kbar = varkappa(inst.sigma, inst.epsilon, inst.n() + 2 * m);
  const ContrastMatrix D = ContrastMatrix::concat(rep.contrast, H);
  int conditioned = 0;
  double worst_unit = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    Rng sub = rng.split(600 + trial);
    const Eigen::VectorXd x_star = ball_point(sub, p, 1.0);
    Eigen::VectorXd nu_star = Eigen::VectorXd::Zero(m);
    nu_star[sub.uniform_int(0, m - 1)] = sub.uniform(-1.0, 1.0);
    const Eigen::VectorXd omega =
        sample_observation(inst, x_star, nu_star, 33000 + trial);
    const Eigen::VectorXd xi = omega - inst.A * x_star - inst.N * nu_star;
    if (!in_confidence_set(D, xi, kbar)) continue;
    ++conditioned;
    const RecoveryOutput out = estimate_sparse(inst, rep.contrast, H, omega, kbar);
    REQUIRE(out.feasible);
    CHECK(error_norm(inst.bstar, out.w_hat - inst.B * x_star) <=
          rep.certificate.value + 1e-7);
    // Per-column proof obligation behind the unit weights.
    const Eigen::VectorXd probe =
        rep.contrast.matrix().transpose() * (inst.A * (out.x_hat - x_star));
    worst_unit = std::max(worst_unit, probe.lpNorm<Eigen::Infinity>());
  }
  CHECK(conditioned >= 85);
  CHECK(worst_unit <= 1.0 + 1e-6);
}

TEST_CASE("sparse design honours the forced zero localization block") {
  Rng rng(619);
  const int m = 4, p = 2;
  ProblemInstance inst = ball_instance(
      orthonormal_columns(rng, m, p), Eigen::MatrixXd::Identity(p, p),
      Eigen::MatrixXd::Identity(m, m), 1.0, NuisanceSpec::sparse(1));
  const ContrastMatrix H = synth_h_sparse(inst, 0.25);
  SynthesisOptions opts;
  opts.force_theta1_zero = true;
  const SynthesisReport rep = synth_g_sparse(inst, H, 0.25, opts);
  CHECK(rep.contrast.count() == m);
  CHECK(rep.certificate.theta1.isZero(0.0));
  CHECK_FALSE(rep.decomposition.has_value());
  const SynthesisReport full = synth_g_sparse(inst, H, 0.25);
  CHECK(rep.opt_value >= full.opt_value - 1e-7);
}

TEST_CASE("alternative design covers an arbitrary channel block") {
  Rng rng(620);
  const int m = 5, p = 2;
  ProblemInstance inst = ball_instance(
      orthonormal_columns(rng, m, p), Eigen::MatrixXd::Identity(p, p),
      Eigen::MatrixXd::Identity(m, m), 1.0, NuisanceSpec::sparse(1));
  const ContrastMatrix Hbar(Eigen::MatrixXd::Identity(m, m));
  const SynthesisReport rep = synth_alternative(inst, Hbar);
  CHECK(rep.certificate.kind == BoundKind::SparseAlt);
  CHECK(rep.h_block.count() == m);
  CHECK(rep.h_block.role(0) == ColumnRole::AltHBlock);
  if (rep.contrast.count() > 0) CHECK(rep.contrast.role(0) == ColumnRole::AltGBlock);
  CHECK(rep.certificate.value <= rep.opt_value * (1.0 + 1e-6) + 1e-8);

  const double kbar = varkappa(inst.sigma, inst.epsilon, m + 2 * m);
  const SparseAux aux = opt_programs(inst, Hbar, kbar);
  const Eigen::VectorXd psi = psi_h_values(inst, rep.h_block, aux);
  const ContrastMatrix D = ContrastMatrix::concat(rep.contrast, rep.h_block);
  int conditioned = 0;
  for (int trial = 0; trial < 100; ++trial) {
    Rng sub = rng.split(800 + trial);
    const Eigen::VectorXd x_star = ball_point(sub, p, 1.0);
    Eigen::VectorXd nu_star = Eigen::VectorXd::Zero(m);
    nu_star[sub.uniform_int(0, m - 1)] = sub.uniform(-1.0, 1.0);
    const Eigen::VectorXd omega =
        sample_observation(inst, x_star, nu_star, 34000 + trial);
    const Eigen::VectorXd xi = omega - inst.A * x_star - inst.N * nu_star;
    if (!in_confidence_set(D, xi, kbar)) continue;
    ++conditioned;
    const RecoveryOutput out =
        estimate_alternative(inst, rep.contrast, rep.h_block, omega, kbar);
    REQUIRE(out.feasible);
    CHECK(error_norm(inst.bstar, out.w_hat - inst.B * x_star) <=
          rep.certificate.value + 1e-7);
    const Eigen::VectorXd delta = inst.A * (out.x_hat - x_star);
    CHECK((rep.contrast.matrix().transpose() * delta).lpNorm<Eigen::Infinity>() <=
          1.0 + 1e-6);
    for (int i = 0; i < rep.h_block.count(); ++i)
      CHECK(std::abs(rep.h_block.column(i).dot(delta)) <= psi[i] + 1e-6);
  }
  CHECK(conditioned >= 85);
}

TEST_CASE("aggregated contrast stacks the four blocks in order") {
  Rng rng(621);
  const int m = 2;
  auto fake = [&](int h_cols, ColumnRole h_role, int g_cols, ColumnRole g_role,
                  std::uint64_t hash) {
    SynthesisReport rep;
    rep.h_block = ContrastMatrix(gaussian_matrix(rng, m, h_cols),
                                 std::vector<ColumnRole>(h_cols, h_role));
    rep.contrast = ContrastMatrix(gaussian_matrix(rng, m, g_cols),
                                  std::vector<ColumnRole>(g_cols, g_role));
    rep.certificate.instance_hash = hash;
    return rep;
  };
  const SynthesisReport gated =
      fake(3, ColumnRole::HBlock, 4, ColumnRole::GBlock, 42);
  const SynthesisReport alt =
      fake(2, ColumnRole::AltHBlock, 4, ColumnRole::AltGBlock, 42);
  const ContrastMatrix combined = build_aggregated_contrast(gated, alt);
  CHECK(combined.count() == 3 + 2 + 4 + 4);
  CHECK(combined.role(0) == ColumnRole::HBlock);
  CHECK(combined.role(3) == ColumnRole::AltHBlock);
  CHECK(combined.role(5) == ColumnRole::GBlock);
  CHECK(combined.role(9) == ColumnRole::AltGBlock);
  CHECK((combined.matrix().leftCols(3) - gated.h_block.matrix()).norm() == 0.0);

  const SynthesisReport foreign =
      fake(2, ColumnRole::AltHBlock, 4, ColumnRole::AltGBlock, 43);
  CHECK_THROWS_AS(build_aggregated_contrast(gated, foreign), InvalidArgument);
}

TEST_CASE("aggregated bound dominates the aggregated estimator") {
  Rng rng(622);
  const int m = 4, p = 2;
  ProblemInstance inst = ball_instance(
      orthonormal_columns(rng, m, p), Eigen::MatrixXd::Identity(p, p),
      Eigen::MatrixXd::Identity(m, m), 1.0, NuisanceSpec::sparse(1));
  const double kappa = 0.25;
  const ContrastMatrix H = synth_h_sparse(inst, kappa);
  const SynthesisReport gated = synth_g_sparse(inst, H, kappa);
  const SynthesisReport alt =
      synth_alternative(inst, ContrastMatrix(Eigen::MatrixXd::Identity(m, m)));
  const ContrastMatrix combined = build_aggregated_contrast(gated, alt);
  const double kbar_agg = varkappa(inst.sigma, inst.epsilon, combined.count());

  const ContrastMatrix g_all =
      ContrastMatrix::concat(gated.contrast, alt.contrast);
  const RiskCertificate branch_a =
      certify_sparse(inst, g_all, gated.h_block, kappa, kbar_agg);
  const SparseAux aux = opt_programs(inst, alt.h_block, kbar_agg);
  const RiskCertificate branch_b = certify_sparse_alt(
      inst, ContrastMatrix::concat(g_all, alt.h_block), aux);
  const RiskCertificate agg = certify_aggregated(branch_a, branch_b);
  CHECK(agg.value > 0.0);

  int conditioned = 0;
  for (int trial = 0; trial < 60; ++trial) {
    Rng sub = rng.split(1000 + trial);
    const Eigen::VectorXd x_star = ball_point(sub, p, 1.0);
    Eigen::VectorXd nu_star = Eigen::VectorXd::Zero(m);
    nu_star[sub.uniform_int(0, m - 1)] = sub.uniform(-1.0, 1.0);
    const Eigen::VectorXd omega =
        sample_observation(inst, x_star, nu_star, 35000 + trial);
    const Eigen::VectorXd xi = omega - inst.A * x_star - inst.N * nu_star;
    if (!in_confidence_set(combined, xi, kbar_agg)) continue;
    ++conditioned;
    const RecoveryOutput out = estimate_aggregated(inst, combined, omega, kbar_agg);
    REQUIRE(out.feasible);
    CHECK(error_norm(inst.bstar, out.w_hat - inst.B * x_star) <=
          agg.value + 1e-7);
  }
  CHECK(conditioned >= 50);
}
