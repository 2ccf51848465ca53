#include "polyest/risk_certification.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>
#include <vector>

#include <Eigen/Dense>

#include "polyest/conic_program.hpp"
#include "polyest/ellitope_conic.hpp"
#include "polyest/errors.hpp"
#include "polyest/solve.hpp"
#include "polyest/sparse_l1.hpp"
#include "polyest/svec.hpp"

namespace polyest {

namespace {

using conic::ConicProgram;
using conic::LinExpr;

constexpr double kLmiFloor = 1e-9;

std::vector<LinExpr> identity_exprs(int var, int dim) {
  std::vector<LinExpr> out(dim);
  for (int j = 0; j < dim; ++j) out[j].add(var, j, 1.0);
  return out;
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

/* Solves whose output is re-certified exactly afterwards (multiplier ridge
 * recompute, LMI polish, or feasibility reprojection) can accept stalled
 * iterates far above the strict tolerance: the post pass restores soundness
 * and the slack only costs a little optimality. The ellitope LMIs here are
 * degenerate at the optimum whenever the signal set has rank-one forms, so a
 * first-order method cannot be expected to reach 1e-8 on them. */
conic::SolveOptions recertified_solve_options() {
  conic::SolveOptions opts;
  opts.tol_stalled = 2e-3;
  return opts;
}

double min_eigenvalue(const Eigen::MatrixXd& M) {
  if (M.rows() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(M.selfadjointView<Eigen::Lower>());
  return eig.eigenvalues().minCoeff();
}

Eigen::MatrixXd form_sum(const BasicEllitope& E, const Eigen::VectorXd& weights) {
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(E.ambient(), E.ambient());
  for (int l = 0; l < E.num_forms(); ++l) M += weights[l] * E.form(l);
  return M;
}

Eigen::MatrixXd assemble_lmi(const ProblemInstance& inst, const Eigen::VectorXd& lambda,
                             const Eigen::VectorXd& mu,
                             const Eigen::MatrixXd& bottom_extra) {
  const int q = inst.q(), p = inst.p();
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(q + p, q + p);
  M.topLeftCorner(q, q) = form_sum(inst.bstar, lambda);
  M.topRightCorner(q, p) = 0.5 * inst.B;
  M.bottomLeftCorner(p, q) = 0.5 * inst.B.transpose();
  M.bottomRightCorner(p, p) = form_sum(inst.X, mu) + bottom_extra;
  return M;
}

RiskCertificate zero_certificate(const ProblemInstance& inst, const ContrastMatrix& G,
                                 BoundKind kind) {
  RiskCertificate cert;
  cert.kind = kind;
  cert.lambda = Eigen::VectorXd::Zero(inst.bstar.num_forms());
  cert.mu = Eigen::VectorXd::Zero(inst.X.num_forms());
  cert.gamma = Eigen::VectorXd::Zero(G.count());
  cert.value = 0.0;
  cert.lmi_residual = 0.0;
  cert.instance_hash = instance_hash(inst);
  return cert;
}

void append_vector(std::ostringstream& os, const char* name, const Eigen::VectorXd& v) {
  os << name << ":";
  for (Eigen::Index i = 0; i < v.size(); ++i) os << " " << v[i];
  os << "\n";
}

void append_matrix(std::ostringstream& os, const char* name, const Eigen::MatrixXd& M) {
  if (M.size() == 0) return;
  os << name << ": " << M.rows() << " " << M.cols() << "\n";
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    for (Eigen::Index j = 0; j < M.cols(); ++j) {
      os << (j ? " " : "") << M(i, j);
    }
    os << "\n";
  }
}

}  // namespace

const char* bound_kind_name(BoundKind k) {
  switch (k) {
    case BoundKind::Bounded: return "bounded";
    case BoundKind::Sparse: return "sparse";
    case BoundKind::SparseAlt: return "sparse-alt";
    case BoundKind::Aggregated: return "aggregated";
  }
  return "unknown";
}

std::string certificate_record(const RiskCertificate& cert) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "kind: " << bound_kind_name(cert.kind) << "\n";
  os << "value: " << cert.value << "\n";
  os << "rho: " << cert.rho << "\n";
  os << "lmi_residual: " << cert.lmi_residual << "\n";
  os << "instance: " << std::hex << std::setw(16) << std::setfill('0')
     << cert.instance_hash << std::dec << std::setfill(' ') << "\n";
  if (cert.kind == BoundKind::Aggregated)
    os << "winner: " << bound_kind_name(cert.winner) << "\n";
  append_vector(os, "lambda", cert.lambda);
  append_vector(os, "mu", cert.mu);
  append_vector(os, "gamma", cert.gamma);
  append_matrix(os, "theta1", cert.theta1);
  append_matrix(os, "theta2", cert.theta2);
  return os.str();
}

namespace {

// Subgradient of mu -> support_value(tset, mu) at a componentwise-nonnegative
// point, used by the multiplier polish inside support_upper.
Eigen::VectorXd tset_subgradient(const TSet& tset, const Eigen::VectorXd& mu) {
  switch (tset.kind()) {
    case TSet::Kind::Box:
      return tset.upper();
    case TSet::Kind::PBall: {
      const double q = tset.p() / 2.0;
      Eigen::VectorXd g = Eigen::VectorXd::Zero(mu.size());
      if (q == 1.0) {
        int arg = 0;
        mu.maxCoeff(&arg);
        g[arg] = tset.radius();
        return g;
      }
      const double qc = q / (q - 1.0);
      double nrm = 0.0;
      for (int k = 0; k < mu.size(); ++k) nrm += std::pow(mu[k], qc);
      nrm = std::pow(nrm, 1.0 / qc);
      if (nrm <= 0.0) return g;
      for (int k = 0; k < mu.size(); ++k)
        g[k] = tset.radius() * std::pow(mu[k] / nrm, qc - 1.0);
      return g;
    }
    case TSet::Kind::Product: {
      Eigen::VectorXd g(mu.size());
      int off = 0;
      for (const TSet& f : tset.factors()) {
        g.segment(off, f.dim()) = tset_subgradient(f, mu.segment(off, f.dim()));
        off += f.dim();
      }
      return g;
    }
  }
  return Eigen::VectorXd::Zero(mu.size());
}

}  // namespace

double support_upper(const BasicEllitope& E, const Eigen::VectorXd& c) {
  require(c.size() == E.ambient(), "support_upper: dimension mismatch");
  if (c.isZero(0.0)) return 0.0;
  const int d = E.ambient();
  const int K = E.num_forms();

  ConicProgram prog;
  const int mu = add_nonneg_vector(prog, "mu", K);
  const int t = prog.add_scalar("t");
  const double rt2 = std::sqrt(2.0);
  std::vector<LinExpr> rows(svec_dim(d + 1));
  for (int j = 0; j <= d; ++j) {
    for (int i = 0; i <= j; ++i) {
      LinExpr& e = rows[svec_index(i, j)];
      const double scale = (i == j) ? 1.0 : rt2;
      if (j < d) {
        for (int k = 0; k < K; ++k) {
          const double v = E.form(k)(i, j);
          if (v != 0.0) e.add(mu, k, scale * v);
        }
      } else if (i < d) {
        e.constant = scale * 0.5 * c[i];
      } else {
        e.add(t, 0, 1.0);
      }
    }
  }
  prog.add_psd(d + 1, std::move(rows));
  LinExpr phi = add_support_epigraph(prog, E.tset(), identity_exprs(mu, K));
  LinExpr obj;
  obj.add(t, 0, 1.0);
  obj.add(phi, 1.0);
  prog.set_objective(conic::Sense::Minimize, obj);
  conic::SolveResult res = conic::solve_optimal(prog, recertified_solve_options());

  // Recompute the quadratic term from the returned multipliers so the value
  // stays an upper bound however loose the solve was: with M = sum mu_k T_k
  // and any t >= (c/2)' M^{-1} (c/2) the pair certifies max c'x <= t + phi(mu).
  // A uniform ridge keeps M invertible with a known eigenvalue floor, which
  // turns the linear-solve residual into a certified correction term.
  Eigen::VectorXd mu_hat = res.vector_value(prog, mu).cwiseMax(0.0);

  // The returned multipliers can be far from optimal when the solve stalled,
  // and the certified evaluation then inflates badly. F(mu) = phi_T(mu) +
  // (c/2)' M(mu)^{-1} (c/2) is convex and cheap, so polish mu by projected
  // subgradient steps with a monotone line search; every iterate certifies.
  {
    const Eigen::VectorXd q = 0.5 * c;
    const auto eval = [&](const Eigen::VectorXd& m_try, Eigen::VectorXd* grad) {
      const Eigen::MatrixXd M = form_sum(E, m_try);
      Eigen::LLT<Eigen::MatrixXd> llt(M);
      if (llt.info() != Eigen::Success)
        return std::numeric_limits<double>::infinity();
      Eigen::VectorXd y = llt.solve(q);
      y += llt.solve(q - M * y);
      if (grad) {
        *grad = tset_subgradient(E.tset(), m_try);
        for (int k = 0; k < K; ++k)
          (*grad)[k] -= y.dot(E.form(k) * y);
      }
      return support_value(E.tset(), m_try) + q.dot(y);
    };
    // A grid of uniform multipliers guards against a useless warm start.
    double f_cur = eval(mu_hat, nullptr);
    for (int j = -6; j <= 6; ++j) {
      const Eigen::VectorXd uni =
          std::pow(10.0, j) * (1.0 + q.norm()) * Eigen::VectorXd::Ones(K);
      const double f_uni = eval(uni, nullptr);
      if (f_uni < f_cur) {
        f_cur = f_uni;
        mu_hat = uni;
      }
    }
    double step = 1.0;
    int bad = 0;
    Eigen::VectorXd grad(K);
    for (int it = 0; it < 200 && bad < 24; ++it) {
      if (!std::isfinite(f_cur)) break;
      if (!std::isfinite(eval(mu_hat, &grad))) break;
      const double scale =
          (1.0 + mu_hat.norm()) / (1.0 + grad.norm());
      const Eigen::VectorXd cand =
          (mu_hat - step * scale * grad).cwiseMax(0.0);
      const double f_cand = eval(cand, nullptr);
      if (f_cand < f_cur - 1e-13 * (1.0 + std::abs(f_cur))) {
        mu_hat = cand;
        f_cur = f_cand;
        step *= 1.3;
        bad = 0;
      } else {
        step *= 0.5;
        ++bad;
      }
    }
  }
  const double mu_scale = 1.0 + mu_hat.maxCoeff();
  const double form_floor =
      min_eigenvalue(form_sum(E, Eigen::VectorXd::Ones(K)));
  require(form_floor > 0.0, "support_upper: degenerate ellitope forms");
  double best = std::numeric_limits<double>::infinity();
  for (double ridge : {1e-12, 1e-9, 1e-6}) {
    const Eigen::VectorXd mu_r = mu_hat.array() + ridge * mu_scale;
    const Eigen::MatrixXd M = form_sum(E, mu_r);
    Eigen::LLT<Eigen::MatrixXd> llt(M);
    if (llt.info() != Eigen::Success) continue;
    Eigen::VectorXd y = llt.solve(0.5 * c);
    y += llt.solve(0.5 * c - M * y);
    const Eigen::VectorXd r = 0.5 * c - M * y;
    // t* = (c/2)' y + r' M^{-1} (c/2) and ||M^{-1}|| <= 1 / (ridge floor).
    const double eig_floor = ridge * mu_scale * form_floor;
    const double t_up =
        0.5 * c.dot(y) + r.norm() * (y.norm() + r.norm() / eig_floor);
    if (!(t_up >= 0.0)) continue;
    best = std::min(best, t_up + support_value(E.tset(), mu_r));
  }
  require(std::isfinite(best), "support_upper: multiplier recomputation failed");
  return best * (1.0 + 1e-9) + 1e-13;
}

double polish_lmi(const ProblemInstance& inst, Eigen::VectorXd& lambda,
                  Eigen::VectorXd& mu, const Eigen::MatrixXd& bottom_extra) {
  lambda = lambda.cwiseMax(0.0);
  mu = mu.cwiseMax(0.0);
  double lmin = min_eigenvalue(assemble_lmi(inst, lambda, mu, bottom_extra));
  if (lmin < kLmiFloor) {
    const double dirS =
        min_eigenvalue(form_sum(inst.bstar, Eigen::VectorXd::Ones(inst.bstar.num_forms())));
    const double dirT =
        min_eigenvalue(form_sum(inst.X, Eigen::VectorXd::Ones(inst.X.num_forms())));
    const double mdir = std::min(dirS, dirT);
    require(mdir > 0.0, "polish_lmi: degenerate ellitope forms");
    const double c = (kLmiFloor - lmin) / mdir;
    lambda.array() += c;
    mu.array() += c;
    lmin = min_eigenvalue(assemble_lmi(inst, lambda, mu, bottom_extra));
  }
  require(lmin >= -1e-7, "polish_lmi: certificate LMI failed verification");
  return lmin;
}

RiskCertificate finalize_column_certificate(const ProblemInstance& inst,
                                            const ContrastMatrix& G,
                                            const Eigen::VectorXd& column_weights,
                                            Eigen::VectorXd lambda, Eigen::VectorXd mu,
                                            Eigen::VectorXd gamma, BoundKind kind) {
  require(column_weights.size() == G.count(),
          "finalize_column_certificate: one weight per column required");
  require(gamma.size() == G.count(),
          "finalize_column_certificate: one gamma per column required");
  gamma = gamma.cwiseMax(0.0);
  Eigen::MatrixXd extra = Eigen::MatrixXd::Zero(inst.p(), inst.p());
  for (int i = 0; i < G.count(); ++i) {
    const Eigen::VectorXd v = inst.A.transpose() * G.column(i);
    extra.selfadjointView<Eigen::Lower>().rankUpdate(v, gamma[i]);
  }
  extra.triangularView<Eigen::StrictlyUpper>() =
      extra.transpose().triangularView<Eigen::StrictlyUpper>();

  RiskCertificate cert;
  cert.kind = kind;
  cert.lmi_residual = polish_lmi(inst, lambda, mu, extra);
  cert.lambda = std::move(lambda);
  cert.mu = std::move(mu);
  cert.gamma = std::move(gamma);
  cert.value = support_value(inst.bstar.tset(), cert.lambda) +
               4.0 * support_value(inst.X.tset(), cert.mu) +
               column_weights.dot(cert.gamma);
  cert.instance_hash = instance_hash(inst);
  return cert;
}

RiskCertificate certify_columns(const ProblemInstance& inst, const ContrastMatrix& G,
                                const Eigen::VectorXd& column_weights, BoundKind kind) {
  inst.validate();
  const int I = G.count();
  require(I >= 1, "certify_columns: at least one contrast column required");
  require(G.rows() == inst.m(), "certify_columns: contrast row dimension mismatch");
  require(column_weights.size() == I, "certify_columns: one weight per column required");
  require(column_weights.minCoeff() >= 0.0, "certify_columns: weights must be nonnegative");
  if (inst.B.isZero(0.0)) return zero_certificate(inst, G, kind);

  const int q = inst.q(), p = inst.p();
  const int L = inst.bstar.num_forms(), K = inst.X.num_forms();
  ConicProgram prog;
  const int lam = add_nonneg_vector(prog, "lambda", L);
  const int mu = add_nonneg_vector(prog, "mu", K);
  const int gam = add_nonneg_vector(prog, "gamma", I);

  const Eigen::MatrixXd V = inst.A.transpose() * G.matrix();  // p x I
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
        for (int c = 0; c < I; ++c) {
          const double v = V(a, c) * V(b, c);
          if (v != 0.0) e.add(gam, c, scale * v);
        }
      }
    }
  }
  prog.add_psd(ord, std::move(rows));

  LinExpr obj;
  obj.add(add_support_epigraph(prog, inst.bstar.tset(), identity_exprs(lam, L)), 1.0);
  obj.add(add_support_epigraph(prog, inst.X.tset(), identity_exprs(mu, K)), 4.0);
  for (int i = 0; i < I; ++i) obj.add(gam, i, column_weights[i]);
  prog.set_objective(conic::Sense::Minimize, obj);

  conic::SolveResult res = conic::solve_optimal(prog, recertified_solve_options());
  return finalize_column_certificate(inst, G, column_weights,
                                     res.vector_value(prog, lam),
                                     res.vector_value(prog, mu),
                                     res.vector_value(prog, gam), kind);
}

RiskCertificate certify_bounded(const ProblemInstance& inst, const ContrastMatrix& G,
                                int design_columns) {
  inst.validate();
  require(inst.nuisance.bounded(),
          "certify_bounded: sparse nuisance uses the l1 certificates");
  require(G.count() >= 1, "certify_bounded: at least one contrast column required");
  require(G.rows() == inst.m(), "certify_bounded: contrast row dimension mismatch");
  if (design_columns < 0) design_columns = G.count();
  require(design_columns >= G.count(),
          "certify_bounded: design_columns below the actual column count");

  const double vk = varkappa(inst.sigma, inst.epsilon, design_columns);
  double pi_max = 0.0;
  for (int i = 0; i < G.count(); ++i) {
    const Eigen::VectorXd g = G.column(i);
    switch (inst.nuisance.kind()) {
      case NuisanceSpec::Kind::None:
        break;
      case NuisanceSpec::Kind::Ellitopic:
        pi_max = std::max(pi_max,
                          support_upper(inst.nuisance.set(), inst.N.transpose() * g));
        break;
      case NuisanceSpec::Kind::CoEllitopic:
        pi_max = std::max(pi_max, gauge(inst.nuisance.nstar(), g));
        break;
      case NuisanceSpec::Kind::Sparse:
        break;  // unreachable
    }
  }
  const double psi = pi_max + vk * G.max_column_norm();
  return certify_columns(inst, G,
                         Eigen::VectorXd::Constant(G.count(), 4.0 * psi * psi),
                         BoundKind::Bounded);
}

namespace {

// Witness gate shared by rho_h and certify_sparse; kappa = 0 demands an
// exact inverse since the entrywise cap degenerates to zero.
void require_h_design(const ProblemInstance& inst, const ContrastMatrix& H,
                      double kappa) {
  require(kappa >= 0.0 && kappa < 0.5, "h design: kappa must lie in [0, 1/2)");
  require(H.rows() == inst.m(), "h design: row dimension mismatch");
  require(H.count() == inst.n(), "h design: one column per nuisance coordinate");
  if (kappa > 0.0) {
    require(h_set_check(H, inst.N, inst.nuisance.s(), kappa).has_value(),
            "h design: H fails the witness membership test");
  } else {
    const Eigen::MatrixXd E = Eigen::MatrixXd::Identity(inst.n(), inst.n()) -
                              inst.N.transpose() * H.matrix();
    require(E.cwiseAbs().maxCoeff() <= 1e-12,
            "h design: kappa = 0 requires N^T H = I exactly");
  }
}

}  // namespace

double rho_h(const ProblemInstance& inst, const ContrastMatrix& H, double kappa,
             double kbar) {
  inst.validate();
  require(inst.nuisance.kind() == NuisanceSpec::Kind::Sparse,
          "rho_h: sparse nuisance model required");
  require_h_design(inst, H, kappa);
  if (kbar < 0.0) kbar = varkappa(inst.sigma, inst.epsilon, inst.n() + 2 * inst.m());

  double worst = 0.0;
  for (int k = 0; k < H.count(); ++k) {
    const Eigen::VectorXd h = H.column(k);
    const double fit = 2.0 * support_upper(inst.X, inst.A.transpose() * h);
    worst = std::max(worst, kbar * h.norm() + fit);
  }
  return worst / (1.0 - 2.0 * kappa);
}

RiskCertificate certify_sparse(const ProblemInstance& inst, const ContrastMatrix& G,
                               const ContrastMatrix& H, double kappa, double kbar) {
  inst.validate();
  require(inst.nuisance.kind() == NuisanceSpec::Kind::Sparse,
          "certify_sparse: sparse nuisance model required");
  require(G.count() >= 1, "certify_sparse: at least one contrast column required");
  require(G.rows() == inst.m(), "certify_sparse: contrast row dimension mismatch");
  if (kbar < 0.0)
    kbar = varkappa(inst.sigma, inst.epsilon, H.count() + G.count());

  double rho = 0.0;
  if (!inst.N.isZero(0.0)) rho = rho_h(inst, H, kappa, kbar);

  const int s2 = 2 * inst.nuisance.s();
  double psi = 0.0;
  for (int i = 0; i < G.count(); ++i) {
    const Eigen::VectorXd g = G.column(i);
    psi = std::max(psi, 2.0 * kbar * g.norm() +
                            rho * norm_s1(inst.N.transpose() * g, s2));
  }
  return certify_columns(inst, G, Eigen::VectorXd::Constant(G.count(), psi * psi),
                         BoundKind::Sparse);
}

namespace {

// Inflation for maximization optima whose downstream uses are all monotone
// increasing: absorbs solver tolerance on the conservative side.
double inflate_sup(double v) { return v * (1.0 + 1e-6) + 1e-12; }

double solve_opt_program(const ProblemInstance& inst, const ContrastMatrix& H,
                         double kbar, int coord, bool two_norm) {
  const int p = inst.p(), n = inst.n(), M = H.count();
  ConicProgram prog;
  const int v = prog.add_vector("v", p);
  const int w = prog.add_vector("w", n);
  const int aw = prog.add_vector("abs_w", n);
  add_ellitope_membership(prog, inst.X, identity_exprs(v, p), 2.0);
  for (int j = 0; j < n; ++j) {
    LinExpr lo, hi, cap;
    lo.add(aw, j, 1.0).add(w, j, -1.0);
    hi.add(aw, j, 1.0).add(w, j, 1.0);
    prog.add_nonneg(lo);
    prog.add_nonneg(hi);
    // |w_j| <= w_coord
    cap.add(w, coord, 1.0).add(aw, j, -1.0);
    prog.add_nonneg(cap);
  }
  const Eigen::MatrixXd HtN = H.matrix().transpose() * inst.N;
  const Eigen::MatrixXd HtA = H.matrix().transpose() * inst.A;
  for (int k = 0; k < M; ++k) {
    const double cap = 2.0 * kbar * H.column(k).norm();
    for (double sign : {1.0, -1.0}) {
      LinExpr row(cap);
      for (int j = 0; j < n; ++j) row.add(w, j, -sign * HtN(k, j));
      for (int j = 0; j < p; ++j) row.add(v, j, -sign * HtA(k, j));
      prog.add_nonneg(row);
    }
  }

  LinExpr obj;
  if (!two_norm) {
    // ||w||_1 <= 2 s w_coord, maximize w_coord.
    LinExpr budget;
    budget.add(w, coord, 2.0 * inst.nuisance.s());
    for (int j = 0; j < n; ++j) budget.add(aw, j, -1.0);
    prog.add_nonneg(budget);
    obj.add(w, coord, 1.0);
  } else {
    // ||w||_1 <= t <= 2 s w_coord, maximize r with r^2 <= w_coord * t.
    const int t = prog.add_scalar("t");
    const int r = prog.add_scalar("r");
    LinExpr lo, hi;
    lo.add(t, 0, 1.0);
    for (int j = 0; j < n; ++j) lo.add(aw, j, -1.0);
    hi.add(w, coord, 2.0 * inst.nuisance.s()).add(t, 0, -1.0);
    prog.add_nonneg(lo);
    prog.add_nonneg(hi);
    std::vector<LinExpr> rsoc(3);
    rsoc[0].add(w, coord, 1.0);
    rsoc[1].add(t, 0, 1.0);
    rsoc[2].add(r, 0, std::sqrt(2.0));
    prog.add_rsoc(std::move(rsoc));
    obj.add(r, 0, 1.0);
  }
  prog.set_objective(conic::Sense::Maximize, obj);

  conic::SolveResult res = conic::solve(prog);
  if (res.status == conic::SolveStatus::Unbounded)
    throw conic::SolveError(res.status,
                            "opt_programs: contrast fails to bound the nuisance error");
  if (res.status != conic::SolveStatus::Optimal)
    throw conic::SolveError(res.status, "opt_programs: solver failed");
  return std::max(0.0, res.objective);
}

}  // namespace

SparseAux opt_programs(const ProblemInstance& inst, const ContrastMatrix& H,
                       double kbar) {
  inst.validate();
  require(inst.nuisance.kind() == NuisanceSpec::Kind::Sparse,
          "opt_programs: sparse nuisance model required");
  require(H.count() >= 1, "opt_programs: at least one contrast column required");
  require(H.rows() == inst.m(), "opt_programs: contrast row dimension mismatch");
  if (kbar < 0.0)
    kbar = varkappa(inst.sigma, inst.epsilon, H.count() + 2 * inst.m());

  SparseAux aux;
  aux.kbar = kbar;
  aux.s = inst.nuisance.s();
  for (int i = 0; i < inst.n(); ++i) {
    aux.opt_inf = std::max(aux.opt_inf, solve_opt_program(inst, H, kbar, i, false));
    aux.opt2 = std::max(aux.opt2, solve_opt_program(inst, H, kbar, i, true));
  }
  aux.opt_inf = inflate_sup(aux.opt_inf);
  aux.opt2 = inflate_sup(aux.opt2);
  aux.varrho2 = std::min(aux.opt2, std::sqrt(2.0 * aux.s) * aux.opt_inf);
  return aux;
}

double pi_bar(const Eigen::VectorXd& d, const Eigen::MatrixXd& N,
              const SparseAux& aux, int s) {
  require(d.size() == N.rows(), "pi_bar: dimension mismatch");
  require(s >= 1, "pi_bar: sparsity level must be positive");
  const Eigen::VectorXd c = N.transpose() * d;
  if (c.isZero(0.0)) return 0.0;
  const int n = static_cast<int>(c.size());

  ConicProgram prog;
  const int u = prog.add_vector("u", n);
  const int vv = prog.add_vector("v", n);
  const int au = prog.add_vector("abs_u", n);
  const int zv = prog.add_scalar("z2");
  const int zw = prog.add_scalar("zinf");
  for (int j = 0; j < n; ++j) {
    LinExpr lo, hi;
    lo.add(au, j, 1.0).add(u, j, -1.0);
    hi.add(au, j, 1.0).add(u, j, 1.0);
    prog.add_nonneg(lo);
    prog.add_nonneg(hi);
    // w = c - u - v, enforce |w_j| <= zw
    for (double sign : {1.0, -1.0}) {
      LinExpr e(-sign * c[j]);
      e.add(zw, 0, 1.0).add(u, j, sign).add(vv, j, sign);
      prog.add_nonneg(e);
    }
  }
  std::vector<LinExpr> soc(n + 1);
  soc[0].add(zv, 0, 1.0);
  for (int j = 0; j < n; ++j) soc[j + 1].add(vv, j, 1.0);
  prog.add_soc(std::move(soc));

  LinExpr obj;
  for (int j = 0; j < n; ++j) obj.add(au, j, aux.opt_inf);
  obj.add(zv, 0, aux.opt2);
  obj.add(zw, 0, 2.0 * s * aux.opt_inf);
  prog.set_objective(conic::Sense::Minimize, obj);

  conic::SolveResult res = conic::solve_optimal(prog, recertified_solve_options());
  // Re-project the split onto exact feasibility and evaluate by hand; the
  // result upper-bounds the true minimum whatever the solve quality.
  const Eigen::VectorXd u_hat = res.vector_value(prog, u);
  const Eigen::VectorXd v_hat = res.vector_value(prog, vv);
  const Eigen::VectorXd w_hat = c - u_hat - v_hat;
  return aux.opt_inf * u_hat.lpNorm<1>() + aux.opt2 * v_hat.norm() +
         2.0 * s * aux.opt_inf * w_hat.lpNorm<Eigen::Infinity>();
}

Eigen::VectorXd psi_h_values(const ProblemInstance& inst, const ContrastMatrix& D,
                             const SparseAux& aux) {
  require(aux.kbar > 0.0, "psi_h_values: aux carries no threshold");
  Eigen::VectorXd psi(D.count());
  for (int i = 0; i < D.count(); ++i) {
    const Eigen::VectorXd d = D.column(i);
    psi[i] = pi_bar(d, inst.N, aux, aux.s) + 2.0 * aux.kbar * d.norm();
  }
  return psi;
}

RiskCertificate certify_sparse_alt(const ProblemInstance& inst, const ContrastMatrix& D,
                                   const SparseAux& aux) {
  inst.validate();
  require(inst.nuisance.kind() == NuisanceSpec::Kind::Sparse,
          "certify_sparse_alt: sparse nuisance model required");
  require(aux.kbar > 0.0, "certify_sparse_alt: aux carries no threshold");
  require(aux.s == inst.nuisance.s(), "certify_sparse_alt: aux sparsity mismatch");
  require(D.rows() == inst.m(), "certify_sparse_alt: contrast row dimension mismatch");
  const ContrastMatrix cols = D.without_zero_columns();
  require(cols.count() >= 1, "certify_sparse_alt: all contrast columns are zero");
  const Eigen::VectorXd psi = psi_h_values(inst, cols, aux);
  return certify_columns(inst, cols, psi.cwiseProduct(psi), BoundKind::SparseAlt);
}

RiskCertificate certify_aggregated(const RiskCertificate& a, const RiskCertificate& b) {
  require(a.instance_hash != 0 && a.instance_hash == b.instance_hash,
          "certify_aggregated: certificates refer to different instances");
  RiskCertificate out = (a.value <= b.value) ? a : b;
  out.winner = (a.value <= b.value) ? a.kind : b.kind;
  out.kind = BoundKind::Aggregated;
  return out;
}

}  // namespace polyest
