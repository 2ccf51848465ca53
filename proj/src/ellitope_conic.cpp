#include "polyest/ellitope_conic.hpp"

#include "polyest/errors.hpp"
#include "polyest/solve.hpp"

namespace polyest {

using conic::ConicProgram;
using conic::LinExpr;

Eigen::MatrixXd psd_factor(const Eigen::MatrixXd& T) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T);
  require(es.info() == Eigen::Success, "psd_factor: eigendecomposition failed");
  const Eigen::VectorXd& ev = es.eigenvalues();
  const double cut = 1e-13 * std::max(1.0, ev.cwiseAbs().maxCoeff());
  int rank = 0;
  for (int i = 0; i < ev.size(); ++i)
    if (ev[i] > cut) ++rank;
  Eigen::MatrixXd C(rank, T.rows());
  int r = 0;
  for (int i = 0; i < ev.size(); ++i) {
    if (ev[i] > cut)
      C.row(r++) = std::sqrt(ev[i]) * es.eigenvectors().col(i).transpose();
  }
  return C;
}

void add_tset_domination(ConicProgram& prog, const TSet& tset,
                         const std::vector<LinExpr>& q, const LinExpr& rho) {
  require(static_cast<int>(q.size()) == tset.dim(),
          "add_tset_domination: row count mismatch");
  switch (tset.kind()) {
    case TSet::Kind::Box: {
      for (int j = 0; j < tset.dim(); ++j) {
        LinExpr row;
        row.add(rho, tset.upper()[j]);
        row.add(q[j], -1.0);
        prog.add_nonneg(std::move(row));
      }
      return;
    }
    case TSet::Kind::PBall: {
      const double half = tset.p() / 2.0;
      if (half == 1.0) {
        // sum q_j <= radius * rho
        LinExpr row;
        row.add(rho, tset.radius());
        for (const LinExpr& e : q) row.add(e, -1.0);
        prog.add_nonneg(std::move(row));
        return;
      }
      if (half == 2.0) {
        // ||q||_2 <= radius * rho
        std::vector<LinExpr> soc;
        LinExpr head;
        head.add(rho, tset.radius());
        soc.push_back(std::move(head));
        for (const LinExpr& e : q) soc.push_back(e);
        prog.add_soc(std::move(soc));
        return;
      }
      require(false, "add_tset_domination: p-ball exponent not conic-representable");
      return;
    }
    case TSet::Kind::Product: {
      int off = 0;
      for (const TSet& f : tset.factors()) {
        std::vector<LinExpr> slice(q.begin() + off, q.begin() + off + f.dim());
        add_tset_domination(prog, f, slice, rho);
        off += f.dim();
      }
      return;
    }
  }
}

void add_ellitope_membership(ConicProgram& prog, const BasicEllitope& E,
                             const std::vector<LinExpr>& point, double scale) {
  require(static_cast<int>(point.size()) == E.ambient(),
          "add_ellitope_membership: point dimension mismatch");
  require(scale > 0.0, "add_ellitope_membership: scale must be positive");
  const int L = E.num_forms();
  const int t = prog.add_vector("t_memb", L);
  for (int l = 0; l < L; ++l) {
    Eigen::MatrixXd C = psd_factor(E.form(l));
    std::vector<LinExpr> rows;
    rows.push_back(LinExpr().add(t, l, scale * scale));
    rows.push_back(LinExpr(0.5));
    for (int r = 0; r < C.rows(); ++r) {
      LinExpr row;
      for (int j = 0; j < E.ambient(); ++j) {
        if (C(r, j) != 0.0) row.add(point[j], C(r, j));
      }
      rows.push_back(std::move(row));
    }
    prog.add_rsoc(std::move(rows));
  }
  std::vector<LinExpr> tvals;
  for (int l = 0; l < L; ++l) tvals.push_back(LinExpr().add(t, l, 1.0));
  add_tset_domination(prog, E.tset(), tvals, LinExpr(1.0));
}

LinExpr add_support_epigraph(ConicProgram& prog, const TSet& tset,
                             const std::vector<LinExpr>& chi) {
  require(static_cast<int>(chi.size()) == tset.dim(),
          "add_support_epigraph: multiplier count mismatch");
  switch (tset.kind()) {
    case TSet::Kind::Box: {
      LinExpr phi;
      for (int j = 0; j < tset.dim(); ++j) phi.add(chi[j], tset.upper()[j]);
      return phi;
    }
    case TSet::Kind::PBall: {
      const double half = tset.p() / 2.0;
      if (half == 1.0) {
        // radius * max_j chi_j
        const int z = prog.add_scalar("phi_max");
        prog.add_nonneg(LinExpr().add(z, 0, 1.0));
        for (const LinExpr& e : chi) {
          LinExpr row;
          row.add(z, 0, 1.0);
          row.add(e, -1.0);
          prog.add_nonneg(std::move(row));
        }
        return LinExpr().add(z, 0, tset.radius());
      }
      if (half == 2.0) {
        // radius * ||chi||_2
        const int z = prog.add_scalar("phi_nrm");
        std::vector<LinExpr> soc;
        soc.push_back(LinExpr().add(z, 0, 1.0));
        for (const LinExpr& e : chi) soc.push_back(e);
        prog.add_soc(std::move(soc));
        return LinExpr().add(z, 0, tset.radius());
      }
      require(false, "add_support_epigraph: p-ball exponent not conic-representable");
      return LinExpr();
    }
    case TSet::Kind::Product: {
      LinExpr phi;
      int off = 0;
      for (const TSet& f : tset.factors()) {
        std::vector<LinExpr> slice(chi.begin() + off, chi.begin() + off + f.dim());
        phi.add(add_support_epigraph(prog, f, slice), 1.0);
        off += f.dim();
      }
      return phi;
    }
  }
  return LinExpr();
}

double max_linear_over_ellitope(const BasicEllitope& E, const Eigen::VectorXd& c) {
  require(c.size() == E.ambient(), "max_linear_over_ellitope: dimension mismatch");
  if (c.isZero(0.0)) return 0.0;
  ConicProgram prog;
  const int x = prog.add_vector("x", E.ambient());
  std::vector<LinExpr> point;
  for (int j = 0; j < E.ambient(); ++j) point.push_back(LinExpr().add(x, j, 1.0));
  add_ellitope_membership(prog, E, point, 1.0);
  LinExpr obj;
  for (int j = 0; j < E.ambient(); ++j) {
    if (c[j] != 0.0) obj.add(x, j, c[j]);
  }
  prog.set_objective(conic::Sense::Maximize, std::move(obj));
  return solve_optimal(prog).objective;
}

}  // namespace polyest
