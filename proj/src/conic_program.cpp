#include "polyest/conic_program.hpp"

#include <algorithm>
#include <cstdio>
#include <map>

#include "polyest/errors.hpp"
#include "polyest/svec.hpp"

namespace polyest::conic {

int ConicProgram::add_scalar(const std::string& name) {
  vars_.push_back({VarKind::Scalar, name, 1, 1, flat_size_});
  flat_size_ += 1;
  return static_cast<int>(vars_.size()) - 1;
}

int ConicProgram::add_vector(const std::string& name, int n) {
  require(n >= 1, "add_vector: dimension must be positive");
  vars_.push_back({VarKind::Vector, name, n, n, flat_size_});
  flat_size_ += n;
  return static_cast<int>(vars_.size()) - 1;
}

int ConicProgram::add_symmetric(const std::string& name, int order) {
  require(order >= 1, "add_symmetric: order must be positive");
  vars_.push_back({VarKind::Symmetric, name, order, svec_dim(order), flat_size_});
  flat_size_ += svec_dim(order);
  return static_cast<int>(vars_.size()) - 1;
}

void ConicProgram::check_expr(const LinExpr& expr) const {
  for (const Term& t : expr.terms) {
    require(t.var >= 0 && t.var < static_cast<int>(vars_.size()),
            "constraint references undeclared variable block");
    require(t.index >= 0 && t.index < vars_[t.var].size,
            "constraint index out of range for block '" + vars_[t.var].name + "'");
  }
}

void ConicProgram::push_block(ConeKind kind, std::vector<LinExpr> rows, int order) {
  const int first = static_cast<int>(rows_.size());
  for (LinExpr& e : rows) {
    check_expr(e);
    rows_.push_back(std::move(e));
  }
  cones_.push_back({kind, first, static_cast<int>(rows_.size()) - first, order});
}

void ConicProgram::add_eq(LinExpr expr) {
  std::vector<LinExpr> rows;
  rows.push_back(std::move(expr));
  push_block(ConeKind::Zero, std::move(rows), 0);
}

void ConicProgram::add_nonneg(LinExpr expr) {
  std::vector<LinExpr> rows;
  rows.push_back(std::move(expr));
  push_block(ConeKind::NonNeg, std::move(rows), 0);
}

void ConicProgram::add_soc(std::vector<LinExpr> rows) {
  require(rows.size() >= 1, "add_soc: needs at least the epigraph row");
  push_block(ConeKind::Soc, std::move(rows), 0);
}

void ConicProgram::add_rsoc(std::vector<LinExpr> rows) {
  require(rows.size() >= 2, "add_rsoc: needs the two scalar rows");
  push_block(ConeKind::RSoc, std::move(rows), 0);
}

void ConicProgram::add_psd(int order, std::vector<LinExpr> rows) {
  require(static_cast<int>(rows.size()) == svec_dim(order),
          "add_psd: row count must equal svec_dim(order)");
  push_block(ConeKind::Psd, std::move(rows), order);
}

void ConicProgram::set_objective(Sense sense, LinExpr expr) {
  check_expr(expr);
  sense_ = sense;
  objective_ = std::move(expr);
}

namespace {

void format_expr(std::string& out, const LinExpr& expr,
                 const std::vector<VarBlock>& vars) {
  // Canonical order and coefficient merging keep the dump deterministic.
  std::map<std::pair<int, int>, double> merged;
  for (const Term& t : expr.terms) merged[{t.var, t.index}] += t.coef;
  char buf[64];
  bool first = true;
  for (const auto& [key, coef] : merged) {
    if (coef == 0.0) continue;
    std::snprintf(buf, sizeof(buf), "%.17g", coef);
    if (!first) out += " + ";
    out += buf;
    out += "*";
    out += vars[key.first].name;
    out += "[" + std::to_string(key.second) + "]";
    first = false;
  }
  if (expr.constant != 0.0 || first) {
    std::snprintf(buf, sizeof(buf), "%.17g", expr.constant);
    if (!first) out += " + ";
    out += buf;
  }
}

const char* cone_name(ConeKind k) {
  switch (k) {
    case ConeKind::Zero: return "eq";
    case ConeKind::NonNeg: return "nonneg";
    case ConeKind::Soc: return "soc";
    case ConeKind::RSoc: return "rsoc";
    case ConeKind::Psd: return "psd";
  }
  return "?";
}

}  // namespace

std::string ConicProgram::dump() const {
  std::string out;
  for (size_t v = 0; v < vars_.size(); ++v) {
    const VarBlock& b = vars_[v];
    out += "var " + b.name;
    switch (b.kind) {
      case VarKind::Scalar: out += " scalar"; break;
      case VarKind::Vector: out += " vector[" + std::to_string(b.dim) + "]"; break;
      case VarKind::Symmetric: out += " symmetric[" + std::to_string(b.dim) + "]"; break;
    }
    out += "\n";
  }
  out += (sense_ == Sense::Minimize) ? "minimize " : "maximize ";
  format_expr(out, objective_, vars_);
  out += "\n";
  for (const ConeBlock& c : cones_) {
    out += cone_name(c.kind);
    if (c.kind == ConeKind::Psd) out += "[" + std::to_string(c.order) + "]";
    out += ": ";
    for (int r = 0; r < c.dim; ++r) {
      if (r > 0) out += " ; ";
      format_expr(out, rows_[c.first_row + r], vars_);
    }
    switch (c.kind) {
      case ConeKind::Zero: out += " == 0"; break;
      case ConeKind::NonNeg: out += " >= 0"; break;
      default: break;
    }
    out += "\n";
  }
  return out;
}

}  // namespace polyest::conic
