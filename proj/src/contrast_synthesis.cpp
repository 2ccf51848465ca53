#include "polyest/contrast_synthesis.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "polyest/conic_program.hpp"
#include "polyest/ellitope_conic.hpp"
#include "polyest/errors.hpp"
#include "polyest/psd_utils.hpp"
#include "polyest/rng.hpp"
#include "polyest/solve.hpp"
#include "polyest/sparse_l1.hpp"
#include "polyest/svec.hpp"

namespace polyest {

namespace {

using conic::ConicProgram;
using conic::LinExpr;

std::vector<LinExpr> identity_exprs(int var, int dim) {
  std::vector<LinExpr> out(dim);
  for (int j = 0; j < dim; ++j) out[j].add(var, j, 1.0);
  return out;
}

/* Synthesis programs tolerate loose solves. Every constant that matters is
 * rebuilt from the emitted matrices afterwards (trace caps before the
 * decomposition, the certificate LMI through polish, the channel gate by an
 * exact projection), so a stalled iterate only costs a little optimality.
 * These LMIs are degenerate at the optimum whenever the signal set has
 * rank-one forms, which makes tight tolerances unreachable for a first-order
 * method. Certification and recovery solves keep the strict default. */
conic::SolveOptions synthesis_solve_options() {
  conic::SolveOptions opts;
  opts.tol_stalled = 2e-3;
  return opts;
}

int add_nonneg_vector(ConicProgram& prog, const std::string& name, int dim) {
  const int v = prog.add_vector(name, dim);
  for (int j = 0; j < dim; ++j) {
    LinExpr e;
    e.add(v, j, 1.0);
    prog.add_nonneg(e);
  }
  return v;
}

void add_psd_on(ConicProgram& prog, int var, int order) {
  std::vector<LinExpr> rows(svec_dim(order));
  for (int idx = 0; idx < svec_dim(order); ++idx) rows[idx].add(var, idx, 1.0);
  prog.add_psd(order, std::move(rows));
}

// Linear functional Tr(W Y) of a symmetric variable block.
LinExpr trace_against(int var, const Eigen::MatrixXd& W) {
  const Eigen::VectorXd w = svec(W);
  LinExpr e;
  for (Eigen::Index idx = 0; idx < w.size(); ++idx)
    if (w[idx] != 0.0) e.add(var, static_cast<int>(idx), w[idx]);
  return e;
}

// Orthonormal basis of the column space, with a conservative rank cutoff.
Eigen::MatrixXd range_basis(const Eigen::MatrixXd& A) {
  if (A.size() == 0 || A.isZero(0.0)) return Eigen::MatrixXd(A.rows(), 0);
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
  qr.setThreshold(1e-10);
  const int r = static_cast<int>(qr.rank());
  return qr.householderQ() * Eigen::MatrixXd::Identity(A.rows(), r);
}

Eigen::MatrixXd clamp_psd(const Eigen::MatrixXd& M) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(
      0.5 * (M + M.transpose()));
  const Eigen::VectorXd ev = eig.eigenvalues().cwiseMax(0.0);
  return eig.eigenvectors() * ev.asDiagonal() * eig.eigenvectors().transpose();
}

ContrastMatrix retag(const ContrastMatrix& C, ColumnRole role) {
  return ContrastMatrix(C.matrix(),
                        std::vector<ColumnRole>(C.count(), role));
}

ContrastMatrix tagged(Eigen::MatrixXd cols, ColumnRole role) {
  const int n = static_cast<int>(cols.cols());
  return ContrastMatrix(std::move(cols), std::vector<ColumnRole>(n, role));
}

// Adds terms of the sandwich form C^T Y C to the bottom-right LMI block.
struct SandwichTerm {
  int var;            // symmetric variable of order C.rows()
  Eigen::MatrixXd C;  // rows(Y) x p
};

// Adds terms sum_i t_i V.col(i) V.col(i)^T for a nonnegative vector variable.
struct RankOneTerm {
  int var;
  Eigen::MatrixXd V;  // p x count
};

/* The coupling constraint shared by every design program:
 *   [ sum_l lambda_l S_l              B/2                              ]
 *   [ B^T/2            sum_k mu_k T_k + A^T(...)A terms from the lists ] >= 0
 * assembled in scaled svec coordinates. */
void add_coupling_lmi(ConicProgram& prog, const ProblemInstance& inst, int lam,
                      int mu, const std::vector<SandwichTerm>& sandwiches,
                      const std::vector<RankOneTerm>& rank_ones) {
  const int q = inst.q(), p = inst.p();
  const int L = inst.bstar.num_forms(), K = inst.X.num_forms();
  const double rt2 = std::sqrt(2.0);
  const int ord = q + p;
  std::vector<LinExpr> rows(svec_dim(ord));
  for (int j = 0; j < ord; ++j) {
    for (int i = 0; i <= j; ++i) {
      LinExpr& e = rows[svec_index(i, j)];
      const double scale = (i == j) ? 1.0 : rt2;
      if (j < q) {
        for (int l = 0; l < L; ++l) {
          const double v = inst.bstar.form(l)(i, j);
          if (v != 0.0) e.add(lam, l, scale * v);
        }
      } else if (i < q) {
        e.constant = scale * 0.5 * inst.B(i, j - q);
      } else {
        const int a = i - q, b = j - q;
        for (int k = 0; k < K; ++k) {
          const double v = inst.X.form(k)(a, b);
          if (v != 0.0) e.add(mu, k, scale * v);
        }
        for (const RankOneTerm& t : rank_ones) {
          for (int c = 0; c < t.V.cols(); ++c) {
            const double v = t.V(a, c) * t.V(b, c);
            if (v != 0.0) e.add(t.var, c, scale * v);
          }
        }
        for (const SandwichTerm& t : sandwiches) {
          const int r = static_cast<int>(t.C.rows());
          for (int s = 0; s < r; ++s) {
            const double vd = t.C(s, a) * t.C(s, b);
            if (vd != 0.0) e.add(t.var, svec_index(s, s), scale * vd);
            for (int u = s + 1; u < r; ++u) {
              const double vo =
                  (t.C(s, a) * t.C(u, b) + t.C(u, a) * t.C(s, b)) / rt2;
              if (vo != 0.0) e.add(t.var, svec_index(s, u), scale * vo);
            }
          }
        }
      }
    }
  }
  prog.add_psd(ord, std::move(rows));
}

RiskCertificate blank_certificate(const ProblemInstance& inst, BoundKind kind) {
  RiskCertificate cert;
  cert.kind = kind;
  cert.lambda = Eigen::VectorXd::Zero(inst.bstar.num_forms());
  cert.mu = Eigen::VectorXd::Zero(inst.X.num_forms());
  cert.gamma = Eigen::VectorXd::Zero(0);
  cert.instance_hash = instance_hash(inst);
  return cert;
}

SynthesisReport zero_report(const ProblemInstance& inst, BoundKind kind,
                            ColumnRole role) {
  SynthesisReport rep;
  rep.contrast = tagged(Eigen::MatrixXd(inst.m(), 0), role);
  rep.certificate = blank_certificate(inst, kind);
  return rep;
}

}  // namespace

double mixing_budget_factor(int ambient, int forms) {
  require(ambient >= 1 && forms >= 1,
          "mixing_budget_factor: ambient and form count must be positive");
  return 2.0 * std::sqrt(2.0) *
         std::log(4.0 * static_cast<double>(ambient) * ambient * forms);
}

DecompositionResult decompose_over_ellitope(const Eigen::MatrixXd& Theta,
                                            double rho, const BasicEllitope& W,
                                            int columns, std::uint64_t seed) {
  const int m = static_cast<int>(Theta.rows());
  require(Theta.cols() == m, "decompose_over_ellitope: matrix must be square");
  require(W.ambient() == m, "decompose_over_ellitope: ambient mismatch");
  require(columns >= m, "decompose_over_ellitope: need at least ambient columns");
  require(rho >= 0.0, "decompose_over_ellitope: negative budget");

  DecompositionResult out;
  out.claimed_budget = mixing_budget_factor(m, W.num_forms()) * rho;
  out.gamma = Eigen::VectorXd(0);
  out.vectors = Eigen::MatrixXd(m, 0);
  const double theta_scale = Theta.cwiseAbs().maxCoeff();
  if (theta_scale <= 1e-14) return out;
  require(rho > 0.0,
          "decompose_over_ellitope: nonzero matrix needs a positive budget");

  Eigen::VectorXd caps(W.num_forms());
  for (int j = 0; j < W.num_forms(); ++j)
    caps[j] = (Theta * W.form(j)).trace() / rho;
  require(tset_contains(W.tset(), caps.cwiseMax(0.0),
                        1e-6 * (1.0 + caps.cwiseAbs().maxCoeff())),
          "decompose_over_ellitope: trace caps exceed the budget");

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(
      0.5 * (Theta + Theta.transpose()));
  const Eigen::MatrixXd root =
      eig.eigenvectors() *
      eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();

  Rng rng(seed);
  for (int attempt = 1; attempt <= 64; ++attempt) {
    Eigen::MatrixXd Z(m, columns);
    if (attempt == 1) {
      Z.setZero();
      Z.leftCols(m) = root;
    } else {
      // Random signs times rows of a Haar orthogonal matrix keep
      // Z Z^T = Theta while spreading mass evenly across the columns.
      Eigen::MatrixXd Gau(columns, columns);
      for (int i = 0; i < columns; ++i)
        for (int j = 0; j < columns; ++j) Gau(i, j) = rng.normal();
      Eigen::HouseholderQR<Eigen::MatrixXd> qr(Gau);
      const Eigen::MatrixXd Q =
          (qr.householderQ() * Eigen::MatrixXd::Identity(columns, columns))
              .topRows(m);
      Eigen::VectorXd sign(m);
      for (int i = 0; i < m; ++i) sign[i] = rng.uniform() < 0.5 ? -1.0 : 1.0;
      Z = root * sign.asDiagonal() * Q;
    }

    std::vector<double> masses;
    Eigen::MatrixXd kept(m, columns);
    int cnt = 0;
    double total = 0.0;
    for (int i = 0; i < columns; ++i) {
      const Eigen::VectorXd z = Z.col(i);
      if (z.norm() <= 1e-14 * std::sqrt(theta_scale)) continue;
      const double g = gauge(W, z);
      require(g > 0.0, "decompose_over_ellitope: degenerate gauge");
      kept.col(cnt++) = z / g;
      masses.push_back(g * g);
      total += g * g;
    }
    if (total <= out.claimed_budget * (1.0 + 1e-9) + 1e-12) {
      out.gamma = Eigen::Map<Eigen::VectorXd>(masses.data(), cnt);
      out.vectors = kept.leftCols(cnt);
      out.attempts = attempt;
      out.reconstruction_error =
          (Theta - out.vectors * out.gamma.asDiagonal() *
                       out.vectors.transpose())
              .norm();
      return out;
    }
  }
  require(false, "decompose_over_ellitope: mixing failed to meet the budget");
  return out;
}

SynthesisReport synth_no_nuisance(const ProblemInstance& inst, int columns) {
  inst.validate();
  require(inst.nuisance.kind() == NuisanceSpec::Kind::None,
          "synth_no_nuisance: instance carries a nuisance term");
  if (columns < 0) columns = inst.m();
  require(columns >= inst.m(),
          "synth_no_nuisance: column budget below the observation dimension");
  if (inst.B.isZero(0.0)) return zero_report(inst, BoundKind::Bounded, ColumnRole::GBlock);

  const double vk = varkappa(inst.sigma, inst.epsilon, columns);
  const Eigen::MatrixXd V = range_basis(inst.A);
  const int r = static_cast<int>(V.cols());

  ConicProgram prog;
  const int lam = add_nonneg_vector(prog, "lambda", inst.bstar.num_forms());
  const int mu = add_nonneg_vector(prog, "mu", inst.X.num_forms());
  const int rho = prog.add_scalar("rho");
  prog.add_nonneg(LinExpr().add(rho, 0, 1.0));
  std::vector<SandwichTerm> sandwiches;
  int Y = -1;
  if (r > 0) {
    Y = prog.add_symmetric("Y", r);
    add_psd_on(prog, Y, r);
    sandwiches.push_back({Y, V.transpose() * inst.A});
    LinExpr cap;
    cap.add(rho, 0, 1.0);
    for (int s = 0; s < r; ++s) cap.add(Y, svec_index(s, s), -vk * vk);
    prog.add_nonneg(cap);
  }
  add_coupling_lmi(prog, inst, lam, mu, sandwiches, {});

  LinExpr obj;
  obj.add(add_support_epigraph(prog, inst.bstar.tset(),
                               identity_exprs(lam, inst.bstar.num_forms())),
          1.0);
  obj.add(add_support_epigraph(prog, inst.X.tset(),
                               identity_exprs(mu, inst.X.num_forms())),
          4.0);
  obj.add(rho, 0, 4.0);
  prog.set_objective(conic::Sense::Minimize, obj);
  conic::SolveResult res = conic::solve_optimal(prog, synthesis_solve_options());

  Eigen::MatrixXd Theta = Eigen::MatrixXd::Zero(inst.m(), inst.m());
  if (r > 0)
    Theta = clamp_psd(V * res.matrix_value(prog, Y) * V.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(Theta);
  const Eigen::VectorXd ev = eig.eigenvalues().cwiseMax(0.0);
  const double ev_max = ev.size() ? ev.maxCoeff() : 0.0;
  std::vector<int> keep;
  for (int i = 0; i < ev.size(); ++i)
    if (ev[i] > 1e-9 * ev_max) keep.push_back(i);

  Eigen::MatrixXd G(inst.m(), static_cast<int>(keep.size()));
  Eigen::VectorXd gamma(static_cast<int>(keep.size()));
  for (int c = 0; c < static_cast<int>(keep.size()); ++c) {
    G.col(c) = eig.eigenvectors().col(keep[c]) / vk;
    gamma[c] = vk * vk * ev[keep[c]];
  }

  SynthesisReport rep;
  rep.contrast = tagged(std::move(G), ColumnRole::GBlock);
  rep.certificate = finalize_column_certificate(
      inst, rep.contrast,
      Eigen::VectorXd::Constant(rep.contrast.count(), 4.0),
      res.vector_value(prog, lam), res.vector_value(prog, mu),
      std::move(gamma), BoundKind::Bounded);
  rep.certificate.rho = res.scalar_value(prog, rho);
  rep.certificate.theta1 = Theta;
  rep.opt_value = res.objective;
  rep.iterations = res.iterations;
  rep.solver_residual = res.max_eq_violation;
  return rep;
}

ProblemInstance augment_ellitopic(const ProblemInstance& inst) {
  inst.validate();
  require(inst.nuisance.kind() == NuisanceSpec::Kind::Ellitopic,
          "augment_ellitopic: ellitopic nuisance required");
  Eigen::MatrixXd Abar(inst.m(), inst.p() + inst.n());
  Abar << inst.A, inst.N;
  Eigen::MatrixXd Bbar(inst.q(), inst.p() + inst.n());
  Bbar << inst.B, Eigen::MatrixXd::Zero(inst.q(), inst.n());
  ProblemInstance out{std::move(Abar),
                      std::move(Bbar),
                      Eigen::MatrixXd::Zero(inst.m(), 1),
                      direct_product(inst.X, inst.nuisance.set()),
                      inst.bstar,
                      NuisanceSpec::none(),
                      inst.sigma,
                      inst.epsilon};
  out.validate();
  return out;
}

SynthesisReport synth_ellitopic_nuisance(const ProblemInstance& inst,
                                         int columns) {
  return synth_no_nuisance(augment_ellitopic(inst), columns);
}

SynthesisReport synth_coellitopic(const ProblemInstance& inst, int columns,
                                  std::uint64_t seed) {
  inst.validate();
  require(inst.nuisance.kind() == NuisanceSpec::Kind::CoEllitopic,
          "synth_coellitopic: co-ellitopic nuisance required");
  if (columns < 0) columns = inst.m();
  require(columns >= inst.m(),
          "synth_coellitopic: column budget below the observation dimension");
  if (inst.B.isZero(0.0)) return zero_report(inst, BoundKind::Bounded, ColumnRole::GBlock);

  const int m = inst.m();
  const double vk = varkappa(inst.sigma, inst.epsilon, columns);
  const BasicEllitope W = cw_ellitope(inst.nuisance.nstar(), vk);
  const double alpha = mixing_budget_factor(m, W.num_forms());

  ConicProgram prog;
  const int lam = add_nonneg_vector(prog, "lambda", inst.bstar.num_forms());
  const int mu = add_nonneg_vector(prog, "mu", inst.X.num_forms());
  const int rho = prog.add_scalar("rho");
  prog.add_nonneg(LinExpr().add(rho, 0, 1.0));
  const int Th = prog.add_symmetric("Theta", m);
  add_psd_on(prog, Th, m);

  std::vector<LinExpr> traces;
  for (int j = 0; j < W.num_forms(); ++j)
    traces.push_back(trace_against(Th, W.form(j)));
  add_tset_domination(prog, W.tset(), traces, LinExpr().add(rho, 0, 1.0));
  add_coupling_lmi(prog, inst, lam, mu, {{Th, inst.A}}, {});

  LinExpr obj;
  obj.add(add_support_epigraph(prog, inst.bstar.tset(),
                               identity_exprs(lam, inst.bstar.num_forms())),
          1.0);
  obj.add(add_support_epigraph(prog, inst.X.tset(),
                               identity_exprs(mu, inst.X.num_forms())),
          4.0);
  obj.add(rho, 0, 4.0 * alpha);
  prog.set_objective(conic::Sense::Minimize, obj);
  conic::SolveResult res = conic::solve_optimal(prog, synthesis_solve_options());

  const Eigen::MatrixXd Theta = clamp_psd(res.matrix_value(prog, Th));
  const double rho_star = std::max(0.0, res.scalar_value(prog, rho));
  Eigen::VectorXd caps(W.num_forms());
  for (int j = 0; j < W.num_forms(); ++j)
    caps[j] = std::max(0.0, (Theta * W.form(j)).trace());
  const double rho_use =
      std::max(rho_star, tset_gauge(W.tset(), caps)) * (1.0 + 1e-9) + 1e-12;

  DecompositionResult dec =
      decompose_over_ellitope(Theta, rho_use, W, columns, seed);

  // Every kept column sits on the unit sphere of theta(.), so the certificate
  // weight 4*max_i theta(w_i)^2 evaluates to 4 up to rounding.
  double theta_max = 0.0;
  for (int i = 0; i < dec.vectors.cols(); ++i) {
    const Eigen::VectorXd w = dec.vectors.col(i);
    theta_max = std::max(
        theta_max,
        2.0 * std::max(gauge(inst.nuisance.nstar(), w), vk * w.norm()));
  }

  SynthesisReport rep;
  rep.contrast = tagged(dec.vectors, ColumnRole::GBlock);
  rep.certificate = finalize_column_certificate(
      inst, rep.contrast,
      Eigen::VectorXd::Constant(rep.contrast.count(),
                                4.0 * theta_max * theta_max),
      res.vector_value(prog, lam), res.vector_value(prog, mu), dec.gamma,
      BoundKind::Bounded);
  rep.certificate.rho = rho_star;
  rep.certificate.theta1 = Theta;
  rep.opt_value = res.objective;
  rep.iterations = res.iterations;
  rep.solver_residual = res.max_eq_violation;
  rep.decomposition = std::move(dec);
  return rep;
}

ContrastMatrix synth_h_sparse(const ProblemInstance& inst, double kappa,
                              double kbar) {
  inst.validate();
  require(inst.nuisance.kind() == NuisanceSpec::Kind::Sparse,
          "synth_h_sparse: sparse nuisance model required");
  require(kappa > 0.0 && kappa < 0.5,
          "synth_h_sparse: kappa must lie in (0, 1/2)");
  const int m = inst.m(), n = inst.n(), p = inst.p();
  const int K = inst.X.num_forms();
  if (kbar < 0.0) kbar = varkappa(inst.sigma, inst.epsilon, n + 2 * m);
  // Interior margin so the designed block passes the witness gate strictly.
  const double margin = (kappa / inst.nuisance.s()) * (1.0 - 1e-6);
  const double rt2 = std::sqrt(2.0);

  Eigen::MatrixXd H(m, n);
  for (int k = 0; k < n; ++k) {
    ConicProgram prog;
    const int h = prog.add_vector("h", m);
    const int t = prog.add_scalar("t");
    const int v = prog.add_scalar("v");
    const int chi = add_nonneg_vector(prog, "chi", K);

    std::vector<LinExpr> soc(m + 1);
    soc[0].add(t, 0, 1.0);
    for (int i = 0; i < m; ++i) soc[i + 1].add(h, i, 1.0);
    prog.add_soc(std::move(soc));

    // [[v, (A^T h)^T], [A^T h, sum chi_k T_k]] >= 0 makes v + phi_T(chi) an
    // upper bound on 2 max_{x in X} |h^T A x|.
    std::vector<LinExpr> rows(svec_dim(1 + p));
    for (int j = 0; j <= p; ++j) {
      for (int i = 0; i <= j; ++i) {
        LinExpr& e = rows[svec_index(i, j)];
        const double scale = (i == j) ? 1.0 : rt2;
        if (j == 0) {
          e.add(v, 0, 1.0);
        } else if (i == 0) {
          for (int row = 0; row < m; ++row) {
            const double a = inst.A(row, j - 1);
            if (a != 0.0) e.add(h, row, scale * a);
          }
        } else {
          for (int kk = 0; kk < K; ++kk) {
            const double f = inst.X.form(kk)(i - 1, j - 1);
            if (f != 0.0) e.add(chi, kk, scale * f);
          }
        }
      }
    }
    prog.add_psd(1 + p, std::move(rows));

    for (int l = 0; l < n; ++l) {
      const double target = (l == k) ? 1.0 : 0.0;
      for (double sign : {1.0, -1.0}) {
        LinExpr e(margin - sign * target);
        for (int i = 0; i < m; ++i) {
          const double c = inst.N(i, l);
          if (c != 0.0) e.add(h, i, sign * c);
        }
        prog.add_nonneg(e);
      }
    }

    LinExpr obj;
    obj.add(t, 0, kbar);
    obj.add(v, 0, 1.0);
    obj.add(add_support_epigraph(prog, inst.X.tset(), identity_exprs(chi, K)),
            1.0);
    prog.set_objective(conic::Sense::Minimize, obj);

    conic::SolveResult res = conic::solve(prog, synthesis_solve_options());
    if (res.status != conic::SolveStatus::Optimal)
      throw conic::SolveError(
          res.status, "synth_h_sparse: no channel contrast for coordinate " +
                          std::to_string(k));
    Eigen::VectorXd hk = res.vector_value(prog, h);

    // A loose solve can leave the gate marginally violated. Clamp N^T h back
    // into the designed box and realize the clamp by the minimum-norm
    // correction, so the exact gate holds with the interior margin intact.
    Eigen::VectorXd y = inst.N.transpose() * hk;
    Eigen::VectorXd clamped = y;
    for (int l = 0; l < n; ++l) {
      const double target = (l == k) ? 1.0 : 0.0;
      clamped[l] = std::clamp(y[l], target - margin, target + margin);
    }
    if (clamped != y) {
      const Eigen::VectorXd delta =
          inst.N.transpose().completeOrthogonalDecomposition().solve(clamped - y);
      hk += delta;
      const Eigen::VectorXd y2 = inst.N.transpose() * hk;
      for (int l = 0; l < n; ++l) {
        const double target = (l == k) ? 1.0 : 0.0;
        require(std::abs(y2[l] - target) <= kappa / inst.nuisance.s(),
                "synth_h_sparse: gate repair failed for coordinate " +
                    std::to_string(k));
      }
    }
    H.col(k) = hk;
  }

  ContrastMatrix out = tagged(std::move(H), ColumnRole::HBlock);
  require(h_set_check(out, inst.N, inst.nuisance.s(), kappa).has_value(),
          "synth_h_sparse: designed block failed the witness gate");
  return out;
}

namespace {

/* Shared engine for the two sparse estimation designs.  Solves
 *   min phi_S + 4 phi_T + sum_i tau_i w_i + Tr(Theta2) + alpha * rho
 * with Theta1 capped by the localization forms, Theta2 whitened by Qw, and an
 * optional block of directly weighted columns, then assembles the contrast
 * and its certificate from the solution. */
SynthesisReport sparse_design(const ProblemInstance& inst,
                              const ContrastMatrix& direct_block,
                              const Eigen::VectorXd& direct_weights,
                              const std::vector<Eigen::MatrixXd>& loc_forms,
                              const Eigen::MatrixXd& Qw, BoundKind kind,
                              ColumnRole g_role,
                              const SynthesisOptions& options) {
  const int m = inst.m(), n = inst.n();
  const double alpha = mixing_budget_factor(m, n);
  const bool with_theta1 = !options.force_theta1_zero;
  const bool with_direct = direct_block.count() > 0 && !options.force_tau_zero;

  ConicProgram prog;
  const int lam = add_nonneg_vector(prog, "lambda", inst.bstar.num_forms());
  const int mu = add_nonneg_vector(prog, "mu", inst.X.num_forms());
  std::vector<SandwichTerm> sandwiches;
  std::vector<RankOneTerm> rank_ones;

  const Eigen::MatrixXd V2 = range_basis(Qw * inst.A);
  const int r2 = static_cast<int>(V2.cols());
  int Y2 = -1;
  if (r2 > 0) {
    Y2 = prog.add_symmetric("Y2", r2);
    add_psd_on(prog, Y2, r2);
    sandwiches.push_back({Y2, V2.transpose() * Qw * inst.A});
  }
  int Th1 = -1, rho = -1;
  if (with_theta1) {
    Th1 = prog.add_symmetric("Theta1", m);
    add_psd_on(prog, Th1, m);
    rho = prog.add_scalar("rho");
    prog.add_nonneg(LinExpr().add(rho, 0, 1.0));
    for (const Eigen::MatrixXd& Mj : loc_forms) {
      LinExpr cap;
      cap.add(rho, 0, 1.0);
      cap.add(trace_against(Th1, Mj), -1.0);
      prog.add_nonneg(cap);
    }
    sandwiches.push_back({Th1, inst.A});
  }
  int tau = -1;
  if (with_direct) {
    tau = add_nonneg_vector(prog, "tau", direct_block.count());
    rank_ones.push_back({tau, inst.A.transpose() * direct_block.matrix()});
  }
  add_coupling_lmi(prog, inst, lam, mu, sandwiches, rank_ones);

  LinExpr obj;
  obj.add(add_support_epigraph(prog, inst.bstar.tset(),
                               identity_exprs(lam, inst.bstar.num_forms())),
          1.0);
  obj.add(add_support_epigraph(prog, inst.X.tset(),
                               identity_exprs(mu, inst.X.num_forms())),
          4.0);
  if (Y2 >= 0)
    for (int s = 0; s < r2; ++s) obj.add(Y2, svec_index(s, s), 1.0);
  if (rho >= 0) obj.add(rho, 0, alpha);
  if (tau >= 0)
    for (int i = 0; i < direct_block.count(); ++i)
      obj.add(tau, i, direct_weights[i]);
  prog.set_objective(conic::Sense::Minimize, obj);
  conic::SolveResult res = conic::solve_optimal(prog, synthesis_solve_options());

  Eigen::MatrixXd Theta1 = Eigen::MatrixXd::Zero(m, m);
  double rho_star = 0.0;
  std::optional<DecompositionResult> dec;
  Eigen::MatrixXd G1(m, 0);
  Eigen::VectorXd gam1(0);
  if (with_theta1) {
    Theta1 = clamp_psd(res.matrix_value(prog, Th1));
    rho_star = std::max(0.0, res.scalar_value(prog, rho));
    if (Theta1.cwiseAbs().maxCoeff() > 1e-14) {
      const BasicEllitope loc(m, loc_forms,
                              TSet::box(Eigen::VectorXd::Ones(n)));
      Eigen::VectorXd caps(n);
      for (int j = 0; j < n; ++j)
        caps[j] = std::max(0.0, (Theta1 * loc_forms[j]).trace());
      const double rho_use =
          std::max(rho_star, tset_gauge(loc.tset(), caps)) * (1.0 + 1e-9) +
          1e-12;
      dec = decompose_over_ellitope(Theta1, rho_use, loc, m, options.seed);
      G1 = dec->vectors;
      gam1 = dec->gamma;
    }
  }

  Eigen::MatrixXd Theta2 = Eigen::MatrixXd::Zero(m, m);
  if (r2 > 0) Theta2 = clamp_psd(V2 * res.matrix_value(prog, Y2) * V2.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig2(Theta2);
  const Eigen::MatrixXd G2 = Qw * eig2.eigenvectors();
  const Eigen::VectorXd gam2 = eig2.eigenvalues().cwiseMax(0.0);

  Eigen::MatrixXd G(m, G1.cols() + G2.cols());
  G.leftCols(G1.cols()) = G1;
  G.rightCols(G2.cols()) = G2;
  Eigen::VectorXd gam_g(G.cols());
  gam_g.head(gam1.size()) = gam1;
  gam_g.tail(gam2.size()) = gam2;

  SynthesisReport rep;
  rep.contrast = tagged(std::move(G), g_role);

  ContrastMatrix cert_cols = direct_block.count() > 0
                                 ? ContrastMatrix::concat(direct_block, rep.contrast)
                                 : rep.contrast;
  Eigen::VectorXd weights(cert_cols.count());
  Eigen::VectorXd gamma(cert_cols.count());
  if (direct_block.count() > 0) {
    weights.head(direct_block.count()) = direct_weights;
    gamma.head(direct_block.count()) =
        tau >= 0 ? Eigen::VectorXd(res.vector_value(prog, tau))
                 : Eigen::VectorXd(Eigen::VectorXd::Zero(direct_block.count()));
  }
  weights.tail(rep.contrast.count()).setOnes();
  gamma.tail(rep.contrast.count()) = gam_g;

  rep.certificate = finalize_column_certificate(
      inst, cert_cols, weights, res.vector_value(prog, lam),
      res.vector_value(prog, mu), std::move(gamma), kind);
  rep.certificate.rho = rho_star;
  rep.certificate.theta1 = Theta1;
  rep.certificate.theta2 = Theta2;
  rep.opt_value = res.objective;
  rep.iterations = res.iterations;
  rep.solver_residual = res.max_eq_violation;
  rep.decomposition = std::move(dec);
  return rep;
}

}  // namespace

SynthesisReport synth_g_sparse(const ProblemInstance& inst,
                               const ContrastMatrix& H, double kappa,
                               const SynthesisOptions& options) {
  inst.validate();
  require(inst.nuisance.kind() == NuisanceSpec::Kind::Sparse,
          "synth_g_sparse: sparse nuisance model required");
  const int m = inst.m(), n = inst.n(), s = inst.nuisance.s();
  const double kbar = options.kbar >= 0.0
                          ? options.kbar
                          : varkappa(inst.sigma, inst.epsilon, n + 2 * m);
  if (inst.B.isZero(0.0)) {
    SynthesisReport rep = zero_report(inst, BoundKind::Sparse, ColumnRole::GBlock);
    rep.h_block = retag(H, ColumnRole::HBlock);
    return rep;
  }
  const double rho_H =
      inst.N.isZero(0.0) ? 0.0 : rho_h(inst, H, kappa, kbar);

  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(m, m);
  std::vector<Eigen::MatrixXd> loc_forms(n);
  for (int j = 0; j < n; ++j) {
    const Eigen::VectorXd nj = inst.N.col(j);
    loc_forms[j] = 8.0 * kbar * kbar * eye +
                   8.0 * s * s * rho_H * rho_H * nj * nj.transpose();
  }
  const Eigen::MatrixXd Qw =
      inv_sqrt(8.0 * kbar * kbar * eye +
                   4.0 * s * rho_H * rho_H * inst.N * inst.N.transpose(),
               1e-9 * 8.0 * kbar * kbar);

  SynthesisOptions opts = options;
  opts.force_tau_zero = true;  // no directly weighted block in this design
  SynthesisReport rep = sparse_design(
      inst, tagged(Eigen::MatrixXd(m, 0), ColumnRole::HBlock),
      Eigen::VectorXd(0), loc_forms, Qw, BoundKind::Sparse,
      ColumnRole::GBlock, opts);
  rep.h_block = retag(H, ColumnRole::HBlock);
  return rep;
}

SynthesisReport synth_alternative(const ProblemInstance& inst,
                                  const ContrastMatrix& Hbar,
                                  const SynthesisOptions& options) {
  inst.validate();
  require(inst.nuisance.kind() == NuisanceSpec::Kind::Sparse,
          "synth_alternative: sparse nuisance model required");
  require(Hbar.count() >= 1, "synth_alternative: empty contrast block");
  require(Hbar.rows() == inst.m(),
          "synth_alternative: contrast row dimension mismatch");
  const int m = inst.m(), n = inst.n(), s = inst.nuisance.s();
  const double kbar =
      options.kbar >= 0.0
          ? options.kbar
          : varkappa(inst.sigma, inst.epsilon, Hbar.count() + 2 * m);
  const ContrastMatrix direct = retag(Hbar, ColumnRole::AltHBlock);
  if (inst.B.isZero(0.0)) {
    SynthesisReport rep =
        zero_report(inst, BoundKind::SparseAlt, ColumnRole::AltGBlock);
    rep.h_block = direct;
    return rep;
  }

  SparseAux aux = opt_programs(inst, Hbar, kbar);
  const Eigen::VectorXd psi = psi_h_values(inst, direct, aux);

  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(m, m);
  std::vector<Eigen::MatrixXd> loc_forms(n);
  for (int j = 0; j < n; ++j) {
    const Eigen::VectorXd nj = inst.N.col(j);
    loc_forms[j] = 8.0 * kbar * kbar * eye +
                   8.0 * s * s * aux.opt_inf * aux.opt_inf * nj * nj.transpose();
  }
  const Eigen::MatrixXd Qw =
      inv_sqrt(8.0 * kbar * kbar * eye +
                   2.0 * aux.varrho2 * aux.varrho2 * inst.N * inst.N.transpose(),
               1e-9 * 8.0 * kbar * kbar);

  SynthesisReport rep =
      sparse_design(inst, direct, psi.cwiseProduct(psi), loc_forms, Qw,
                    BoundKind::SparseAlt, ColumnRole::AltGBlock, options);
  rep.h_block = direct;
  return rep;
}

ContrastMatrix build_aggregated_contrast(const SynthesisReport& gated,
                                         const SynthesisReport& alternative) {
  require(gated.certificate.instance_hash != 0 &&
              gated.certificate.instance_hash ==
                  alternative.certificate.instance_hash,
          "build_aggregated_contrast: reports certify different instances");
  require(gated.h_block.count() >= 1,
          "build_aggregated_contrast: gated report carries no channel block");
  require(alternative.h_block.count() >= 1,
          "build_aggregated_contrast: alternative report carries no channel block");
  return ContrastMatrix::concat(
      ContrastMatrix::concat(gated.h_block, alternative.h_block),
      ContrastMatrix::concat(gated.contrast, alternative.contrast));
}

}  // namespace polyest
