#include "polyest/solve.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <vector>

#include <Eigen/Eigenvalues>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include "polyest/errors.hpp"
#include "polyest/svec.hpp"

// First-order conic solver on the homogeneous self-dual embedding:
// Douglas-Rachford splitting between the affine subspace Qu = v and the
// cone product R^N x K* x R+, with Ruiz equilibration and Anderson
// acceleration. Optimality and infeasibility are decided from the embedding's
// certificates, re-checked against the original (unscaled) data.

namespace polyest::conic {

namespace {

constexpr double kInvSqrt2 = 0.7071067811865476;

double eval_expr(const LinExpr& e, const Eigen::VectorXd& flat,
                 const std::vector<VarBlock>& vars) {
  double v = e.constant;
  for (const Term& t : e.terms) v += t.coef * flat[vars[t.var].offset + t.index];
  return v;
}

struct Compiled {
  int N = 0;
  int M = 0;
  Eigen::SparseMatrix<double> A;  // original scale; rows follow cone layout
  Eigen::VectorXd b;
  Eigen::VectorXd c;  // minimize sense
};

Compiled compile(const ConicProgram& prog) {
  Compiled cm;
  cm.N = prog.flat_size();
  cm.M = prog.row_count();
  require(cm.N >= 1, "solve: program has no variables");
  const auto& vars = prog.variables();
  size_t nnz = 0;
  for (const LinExpr& e : prog.rows()) nnz += e.terms.size();
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(nnz);
  cm.b = Eigen::VectorXd::Zero(cm.M);
  for (int r = 0; r < cm.M; ++r) {
    const LinExpr& e = prog.rows()[r];
    cm.b[r] = e.constant;
    for (const Term& t : e.terms) {
      trips.emplace_back(r, vars[t.var].offset + t.index, -t.coef);
    }
  }
  cm.A.resize(cm.M, cm.N);
  cm.A.setFromTriplets(trips.begin(), trips.end());
  cm.c = Eigen::VectorXd::Zero(cm.N);
  for (const Term& t : prog.objective().terms) {
    cm.c[vars[t.var].offset + t.index] += t.coef;
  }
  if (prog.sense() == Sense::Maximize) cm.c = -cm.c;
  return cm;
}

struct Scaling {
  Eigen::VectorXd D;  // row scales, uniform within SOC/RSOC/PSD blocks
  Eigen::VectorXd E;  // column scales
  double sb = 1.0;
  double sc = 1.0;
};

Scaling equilibrate(Eigen::SparseMatrix<double>& A, Eigen::VectorXd& b,
                    Eigen::VectorXd& c, const std::vector<ConeBlock>& cones) {
  const int M = static_cast<int>(A.rows());
  const int N = static_cast<int>(A.cols());
  Scaling sc;
  sc.D = Eigen::VectorXd::Ones(M);
  sc.E = Eigen::VectorXd::Ones(N);
  Eigen::VectorXd rmax(M), cmax(N);
  for (int pass = 0; pass < 10; ++pass) {
    rmax.setZero();
    cmax.setZero();
    for (int k = 0; k < A.outerSize(); ++k) {
      for (Eigen::SparseMatrix<double>::InnerIterator it(A, k); it; ++it) {
        const double a = std::abs(it.value());
        rmax[it.row()] = std::max(rmax[it.row()], a);
        cmax[it.col()] = std::max(cmax[it.col()], a);
      }
    }
    for (const ConeBlock& cb : cones) {
      if (cb.kind == ConeKind::Soc || cb.kind == ConeKind::RSoc ||
          cb.kind == ConeKind::Psd) {
        const double mx = rmax.segment(cb.first_row, cb.dim).maxCoeff();
        rmax.segment(cb.first_row, cb.dim).setConstant(mx);
      }
    }
    Eigen::VectorXd dr(M), dc(N);
    for (int i = 0; i < M; ++i) dr[i] = rmax[i] > 0 ? 1.0 / std::sqrt(rmax[i]) : 1.0;
    for (int j = 0; j < N; ++j) dc[j] = cmax[j] > 0 ? 1.0 / std::sqrt(cmax[j]) : 1.0;
    for (int k = 0; k < A.outerSize(); ++k) {
      for (Eigen::SparseMatrix<double>::InnerIterator it(A, k); it; ++it) {
        it.valueRef() *= dr[it.row()] * dc[it.col()];
      }
    }
    sc.D.array() *= dr.array();
    sc.E.array() *= dc.array();
  }
  b = sc.D.asDiagonal() * b;
  c = sc.E.asDiagonal() * c;
  sc.sb = 1.0 / std::clamp(b.norm(), 1e-4, 1e12);
  sc.sc = 1.0 / std::clamp(c.norm(), 1e-4, 1e12);
  b *= sc.sb;
  c *= sc.sc;
  return sc;
}

void soc_project(Eigen::Ref<Eigen::VectorXd> seg) {
  const int n = static_cast<int>(seg.size());
  const double t = seg[0];
  if (n == 1) {
    seg[0] = std::max(t, 0.0);
    return;
  }
  const double nv = seg.tail(n - 1).norm();
  if (nv <= t) return;
  if (nv <= -t) {
    seg.setZero();
    return;
  }
  const double a = 0.5 * (t + nv);
  seg[0] = a;
  seg.tail(n - 1) *= a / nv;
}

void rsoc_rotate(Eigen::Ref<Eigen::VectorXd> seg) {
  const double a = seg[0], b = seg[1];
  seg[0] = kInvSqrt2 * (a + b);
  seg[1] = kInvSqrt2 * (a - b);
}

void psd_project(Eigen::Ref<Eigen::VectorXd> seg) {
  Eigen::MatrixXd S = smat(seg);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
  const Eigen::VectorXd lam = es.eigenvalues();
  if (lam[0] >= 0.0) return;
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(S.rows(), S.cols());
  for (int i = 0; i < lam.size(); ++i) {
    if (lam[i] > 0.0) {
      P.noalias() += lam[i] * es.eigenvectors().col(i) * es.eigenvectors().col(i).transpose();
    }
  }
  seg = svec(P);
}

// Projection of the embedding's y-part onto the dual cone K*.
void project_dual(Eigen::Ref<Eigen::VectorXd> y, const std::vector<ConeBlock>& cones) {
  for (const ConeBlock& cb : cones) {
    auto seg = y.segment(cb.first_row, cb.dim);
    switch (cb.kind) {
      case ConeKind::Zero:
        break;  // dual of {0} is free
      case ConeKind::NonNeg:
        seg = seg.cwiseMax(0.0);
        break;
      case ConeKind::Soc:
        soc_project(seg);
        break;
      case ConeKind::RSoc:
        rsoc_rotate(seg);
        soc_project(seg);
        rsoc_rotate(seg);
        break;
      case ConeKind::Psd:
        psd_project(seg);
        break;
    }
  }
}

// Margin of a vector with respect to the primal cone K (negative: violated).
double cone_margin(const Eigen::VectorXd& s, const std::vector<ConeBlock>& cones) {
  double margin = std::numeric_limits<double>::infinity();
  for (const ConeBlock& cb : cones) {
    Eigen::VectorXd seg = s.segment(cb.first_row, cb.dim);
    double m = 0.0;
    switch (cb.kind) {
      case ConeKind::Zero:
        m = -seg.cwiseAbs().maxCoeff();
        break;
      case ConeKind::NonNeg:
        m = seg.minCoeff();
        break;
      case ConeKind::Soc:
        m = cb.dim == 1 ? seg[0] : seg[0] - seg.tail(cb.dim - 1).norm();
        break;
      case ConeKind::RSoc: {
        rsoc_rotate(seg);
        m = seg[0] - seg.tail(cb.dim - 1).norm();
        break;
      }
      case ConeKind::Psd: {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(smat(seg),
                                                          Eigen::EigenvaluesOnly);
        m = es.eigenvalues().minCoeff();
        break;
      }
    }
    margin = std::min(margin, m);
  }
  return margin;
}

struct Embedding {
  const Compiled* cm = nullptr;
  Eigen::SparseMatrix<double> As;  // scaled
  Eigen::VectorXd bs, cs;
  Scaling sc;
  Eigen::VectorXd h;  // (cs; bs)
  Eigen::SparseMatrix<double> K;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> kkt;
  Eigen::VectorXd g;  // M^{-1} h
  double den = 1.0;
  bool factor_ok = false;
  bool refine = false;

  // Solves [[I, As^T], [-As, I]] (z1; z2) = (p; q) through the symmetric
  // quasidefinite form [[I, As^T], [As, -I]] (z1; z2) = (p; -q).
  Eigen::VectorXd m_solve(const Eigen::VectorXd& rhs12) const {
    const int N = static_cast<int>(As.cols());
    const int M = static_cast<int>(As.rows());
    Eigen::VectorXd r(N + M);
    r.head(N) = rhs12.head(N);
    r.tail(M) = -rhs12.tail(M);
    Eigen::VectorXd z = kkt.solve(r);
    if (refine) z += kkt.solve(r - K * z);
    return z;
  }

  // z = (I + Q)^{-1} w with Q = [[0, A^T, c], [-A, 0, b], [-c^T, -b^T, 0]].
  void lin_solve(const Eigen::VectorXd& w, Eigen::VectorXd& z) const {
    const int NM = static_cast<int>(h.size());
    Eigen::VectorXd rhs = w.head(NM) - h * w[NM];
    Eigen::VectorXd zeta = m_solve(rhs);
    zeta -= g * (h.dot(zeta) / den);
    z.head(NM) = zeta;
    z[NM] = w[NM] + h.dot(zeta);
  }
};

bool setup_embedding(const Compiled& cm, const std::vector<ConeBlock>& cones,
                     Embedding& em) {
  em.cm = &cm;
  em.As = cm.A;
  em.bs = cm.b;
  em.cs = cm.c;
  em.sc = equilibrate(em.As, em.bs, em.cs, cones);
  const int N = cm.N, M = cm.M;
  em.h.resize(N + M);
  em.h.head(N) = em.cs;
  em.h.tail(M) = em.bs;

  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<size_t>(em.As.nonZeros()) * 2 + N + M);
  for (int i = 0; i < N; ++i) trips.emplace_back(i, i, 1.0);
  for (int i = 0; i < M; ++i) trips.emplace_back(N + i, N + i, -1.0);
  for (int k = 0; k < em.As.outerSize(); ++k) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(em.As, k); it; ++it) {
      trips.emplace_back(N + static_cast<int>(it.row()), static_cast<int>(it.col()),
                         it.value());
      trips.emplace_back(static_cast<int>(it.col()), N + static_cast<int>(it.row()),
                         it.value());
    }
  }
  em.K.resize(N + M, N + M);
  em.K.setFromTriplets(trips.begin(), trips.end());
  em.kkt.compute(em.K);
  if (em.kkt.info() != Eigen::Success) return false;
  em.g = em.m_solve(em.h);
  em.den = 1.0 + em.h.dot(em.g);
  em.factor_ok = std::isfinite(em.den) && em.den > 0.0;
  return em.factor_ok;
}

struct Candidate {
  Eigen::VectorXd x, y, s;
  double rp_rel = 0, rd_rel = 0, gap_rel = 0;
  double eq_viol = 0;
  double margin = 0;
};

}  // namespace

const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal: return "optimal";
    case SolveStatus::Infeasible: return "infeasible";
    case SolveStatus::Unbounded: return "unbounded";
    case SolveStatus::NumericalFailure: return "numerical-failure";
  }
  return "?";
}

SolveResult solve(const ConicProgram& prog, const SolveOptions& opts) {
  const auto t0 = std::chrono::steady_clock::now();
  Compiled cm = compile(prog);
  const auto& cones = prog.cones();
  const auto& vars = prog.variables();
  SolveResult res;
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };

  if (cm.M == 0) {
    // No constraints: optimal when the objective is flat, unbounded otherwise.
    res.primal = Eigen::VectorXd::Zero(cm.N);
    res.dual.resize(0);
    res.slack.resize(0);
    if (cm.c.norm() == 0.0) {
      res.status = SolveStatus::Optimal;
      res.objective = eval_expr(prog.objective(), res.primal, vars);
      res.max_eq_violation = 0;
      res.min_cone_margin = 0;
      res.duality_gap = 0;
    } else {
      res.status = SolveStatus::Unbounded;
      res.primal = -cm.c;
    }
    res.seconds = elapsed();
    return res;
  }

  Embedding em;
  if (!setup_embedding(cm, cones, em)) {
    res.status = SolveStatus::NumericalFailure;
    res.seconds = elapsed();
    return res;
  }

  const int N = cm.N, M = cm.M, NM = N + M;
  const int total = NM + 1;
  const double alpha = opts.alpha;

  Eigen::VectorXd w = Eigen::VectorXd::Zero(total);
  w[NM] = 1.0;
  Eigen::VectorXd ut(total), z(total), u(total), v(total), f(total);

  // Anderson acceleration ring buffer.
  const int mem = std::max(opts.aa_memory, 0);
  Eigen::MatrixXd dW(total, std::max(mem, 1)), dF(total, std::max(mem, 1));
  int aa_count = 0, aa_head = 0;
  Eigen::VectorXd w_prev, f_prev;
  bool have_prev = false, used_aa = false;
  Eigen::VectorXd last_plain;
  double last_r = std::numeric_limits<double>::infinity();

  const Eigen::VectorXd& A_b = cm.b;
  const Eigen::VectorXd& A_c = cm.c;
  const double norm_b = A_b.lpNorm<Eigen::Infinity>();
  const double norm_c = A_c.lpNorm<Eigen::Infinity>();

  auto build_candidate = [&](double tau, Candidate& cand) {
    cand.x = em.sc.E.cwiseProduct(ut.head(N)) / (em.sc.sb * tau);
    cand.y = em.sc.D.cwiseProduct(u.segment(N, M)) / (em.sc.sc * tau);
    cand.s = v.segment(N, M).cwiseQuotient(em.sc.D) / (em.sc.sb * tau);
    Eigen::VectorXd Ax = cm.A * cand.x;
    Eigen::VectorXd rp = Ax + cand.s - A_b;
    Eigen::VectorXd rd = cm.A.transpose() * cand.y + A_c;
    const double px = A_c.dot(cand.x);
    const double dy = A_b.dot(cand.y);
    cand.eq_viol = rp.lpNorm<Eigen::Infinity>();
    cand.rp_rel = cand.eq_viol /
                  (1.0 + std::max({norm_b, cand.s.lpNorm<Eigen::Infinity>(),
                                   Ax.lpNorm<Eigen::Infinity>()}));
    cand.rd_rel = rd.lpNorm<Eigen::Infinity>() /
                  (1.0 + std::max(norm_c, (rd - A_c).lpNorm<Eigen::Infinity>()));
    cand.gap_rel = std::abs(px + dy) / (1.0 + std::abs(px) + std::abs(dy));
    cand.margin = cone_margin(A_b - Ax, cones);
    return cand.rp_rel <= opts.tol && cand.rd_rel <= opts.tol &&
           cand.gap_rel <= opts.tol;
  };

  auto finish_optimal = [&](const Candidate& cand, int iter) {
    res.status = SolveStatus::Optimal;
    res.primal = cand.x;
    res.dual = cand.y;
    res.slack = cand.s;
    res.objective = eval_expr(prog.objective(), cand.x, vars);
    res.max_eq_violation = cand.eq_viol;
    res.min_cone_margin = cand.margin;
    res.duality_gap = cand.gap_rel;
    res.iterations = iter;
    res.seconds = elapsed();
  };

  auto check_certificates = [&](int iter) -> bool {
    // Primal infeasibility: y in K*, A^T y ~ 0, b^T y < 0.
    Eigen::VectorXd yu = em.sc.D.cwiseProduct(u.segment(N, M)) / em.sc.sc;
    const double bty = A_b.dot(yu);
    if (bty < 0.0) {
      const double aty = (cm.A.transpose() * yu).lpNorm<Eigen::Infinity>();
      Eigen::VectorXd ys = u.segment(N, M);
      const double bty_s = em.bs.dot(ys);
      const double aty_s = (em.As.transpose() * ys).lpNorm<Eigen::Infinity>();
      if (aty <= opts.infeas_tol * (-bty) && bty_s < 0.0 &&
          aty_s <= opts.infeas_tol * (-bty_s)) {
        res.status = SolveStatus::Infeasible;
        res.dual = yu / (-bty);
        res.primal = Eigen::VectorXd::Zero(N);
        res.iterations = iter;
        res.seconds = elapsed();
        return true;
      }
    }
    // Unboundedness: x with A x + s ~ 0, s in K, c^T x < 0.
    Eigen::VectorXd xu = em.sc.E.cwiseProduct(ut.head(N)) / em.sc.sb;
    Eigen::VectorXd su = v.segment(N, M).cwiseQuotient(em.sc.D) / em.sc.sb;
    const double ctx = A_c.dot(xu);
    if (ctx < 0.0) {
      const double pres = (cm.A * xu + su).lpNorm<Eigen::Infinity>();
      Eigen::VectorXd xs = ut.head(N);
      const double ctx_s = em.cs.dot(xs);
      const double pres_s =
          (em.As * xs + v.segment(N, M)).lpNorm<Eigen::Infinity>();
      if (pres <= opts.infeas_tol * (-ctx) && ctx_s < 0.0 &&
          pres_s <= opts.infeas_tol * (-ctx_s)) {
        res.status = SolveStatus::Unbounded;
        res.primal = xu / (-ctx);
        res.dual = Eigen::VectorXd::Zero(M);
        res.iterations = iter;
        res.seconds = elapsed();
        return true;
      }
    }
    return false;
  };

  Candidate cand, best;
  double best_score = std::numeric_limits<double>::infinity();
  // Plateau bookkeeping, in units of convergence checks.
  double stall_ref = std::numeric_limits<double>::infinity();
  int checks_since_improve = 0;
  const int stall_checks = std::max(1, 10000 / std::max(opts.check_every, 1));
  int last_iter = 0;

  for (int iter = 1; iter <= opts.max_iters; ++iter) {
    last_iter = iter;
    em.lin_solve(w, ut);
    z = 2.0 * ut - w;
    u = z;
    project_dual(u.segment(N, M), cones);
    u[NM] = std::max(z[NM], 0.0);
    v = u - z;
    const double fp_r = alpha * (u - ut).norm();

    if (used_aa && have_prev && fp_r > 20.0 * last_r) {
      // Anderson step made things worse; fall back to the plain iterate.
      w = last_plain;
      aa_count = 0;
      aa_head = 0;
      used_aa = false;
      have_prev = false;
      continue;
    }

    f = w + alpha * (u - ut);

    const bool checking = (iter % opts.check_every == 0) || iter == opts.max_iters;
    if (checking) {
      const double tau = u[NM];
      if (tau > 1e-12 * std::max(1.0, u.lpNorm<Eigen::Infinity>())) {
        if (build_candidate(tau, cand)) {
          finish_optimal(cand, iter);
          return res;
        }
        const double score = std::max({cand.rp_rel, cand.rd_rel, cand.gap_rel});
        if (score < best_score) {
          best_score = score;
          best = cand;
        }
        if (score < 0.8 * stall_ref) {
          stall_ref = score;
          checks_since_improve = 0;
        } else if (++checks_since_improve >= stall_checks) {
          checks_since_improve = 0;
          stall_ref = score;
          if (!em.refine) {
            // The iteration is pinned by the accuracy of the KKT solves;
            // refine them and keep going.
            em.refine = true;
            aa_count = 0;
            aa_head = 0;
            have_prev = false;
          } else {
            break;
          }
        }
      }
      if (check_certificates(iter)) return res;
      if (opts.verbose && iter % (opts.check_every * 40) == 0) {
        std::fprintf(stderr, "  it %6d fp %.3e rp %.3e rd %.3e gap %.3e tau %.3e\n",
                     iter, fp_r, cand.rp_rel, cand.rd_rel, cand.gap_rel, u[NM]);
      }
    }

    if (mem > 0 && have_prev) {
      dW.col(aa_head) = w - w_prev;
      dF.col(aa_head) = f - f_prev;
      aa_head = (aa_head + 1) % mem;
      aa_count = std::min(aa_count + 1, mem);
    }
    w_prev = w;
    f_prev = f;
    have_prev = true;
    last_plain = f;
    last_r = fp_r;

    if (mem > 0 && aa_count >= 2 && iter >= 10) {
      // Type-II Anderson: gamma = argmin || r - dR gamma ||, r = f - w.
      Eigen::MatrixXd dR(total, aa_count);
      for (int j = 0; j < aa_count; ++j) {
        dR.col(j) = dF.col(j).head(total) - dW.col(j).head(total);
      }
      Eigen::VectorXd r = f - w;
      Eigen::MatrixXd G = dR.transpose() * dR;
      G.diagonal().array() += 1e-12 * (1.0 + G.trace());
      Eigen::VectorXd gamma = G.ldlt().solve(dR.transpose() * r);
      if (gamma.allFinite()) {
        w = f - dF.leftCols(aa_count) * gamma;
        used_aa = true;
      } else {
        w = f;
        used_aa = false;
      }
    } else {
      w = f;
      used_aa = false;
    }
  }

  // Iteration budget exhausted or the residuals stopped moving. Fall back to
  // the best iterate seen if it clears the relaxed bound, otherwise report
  // failure with its diagnostics.
  if (std::isfinite(best_score) && opts.tol_stalled > 0.0 &&
      best_score <= opts.tol_stalled) {
    finish_optimal(best, last_iter);
    return res;
  }
  res.status = SolveStatus::NumericalFailure;
  if (std::isfinite(best_score)) {
    res.primal = best.x;
    res.dual = best.y;
    res.slack = best.s;
    res.objective = eval_expr(prog.objective(), best.x, vars);
    res.max_eq_violation = best.eq_viol;
    res.min_cone_margin = best.margin;
    res.duality_gap = best.gap_rel;
  }
  res.iterations = last_iter;
  res.seconds = elapsed();
  return res;
}

SolveResult solve_optimal(const ConicProgram& prog, const SolveOptions& opts) {
  SolveResult res = solve(prog, opts);
  if (!res.optimal()) {
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "conic solve did not reach optimality: status=%s iters=%d "
                  "eq=%.2e gap=%.2e",
                  to_string(res.status), res.iterations, res.max_eq_violation,
                  res.duality_gap);
    throw SolveError(res.status, buf);
  }
  return res;
}

double SolveResult::scalar_value(const ConicProgram& prog, int var) const {
  const VarBlock& b = prog.variable(var);
  return primal[b.offset];
}

Eigen::VectorXd SolveResult::vector_value(const ConicProgram& prog, int var) const {
  const VarBlock& b = prog.variable(var);
  return primal.segment(b.offset, b.size);
}

Eigen::MatrixXd SolveResult::matrix_value(const ConicProgram& prog, int var) const {
  const VarBlock& b = prog.variable(var);
  return smat(primal.segment(b.offset, b.size));
}

}  // namespace polyest::conic
