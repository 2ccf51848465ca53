#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

namespace polyest::conic {

enum class VarKind { Scalar, Vector, Symmetric };

struct VarBlock {
  VarKind kind;
  std::string name;
  int dim;     // vector length, or matrix order for Symmetric
  int size;    // flat storage size (svec length for Symmetric)
  int offset;  // position in the flat variable vector
};

struct Term {
  int var;
  int index;  // index into the block's flat storage
  double coef;
};

struct LinExpr {
  double constant = 0.0;
  std::vector<Term> terms;

  LinExpr() = default;
  explicit LinExpr(double c) : constant(c) {}

  LinExpr& add(int var, int index, double coef) {
    if (coef != 0.0) terms.push_back({var, index, coef});
    return *this;
  }
  LinExpr& add(const LinExpr& e, double scale = 1.0) {
    constant += scale * e.constant;
    terms.reserve(terms.size() + e.terms.size());
    for (const Term& t : e.terms) add(t.var, t.index, scale * t.coef);
    return *this;
  }
};

enum class ConeKind { Zero, NonNeg, Soc, RSoc, Psd };

struct ConeBlock {
  ConeKind kind;
  int first_row;
  int dim;    // number of rows in the block
  int order;  // matrix order for Psd, otherwise 0
};

enum class Sense { Minimize, Maximize };

// Solver-agnostic conic program over named variable blocks:
//   optimize  obj(x)
//   s.t.      each registered row expression lies in its cone block.
// Symmetric blocks live in svec coordinates throughout.
class ConicProgram {
 public:
  int add_scalar(const std::string& name);
  int add_vector(const std::string& name, int n);
  int add_symmetric(const std::string& name, int order);

  // expr == 0
  void add_eq(LinExpr expr);
  // expr >= 0
  void add_nonneg(LinExpr expr);
  // rows[0] >= || rows[1..] ||_2
  void add_soc(std::vector<LinExpr> rows);
  // 2*rows[0]*rows[1] >= sum_i rows[2+i]^2, rows[0] >= 0, rows[1] >= 0
  void add_rsoc(std::vector<LinExpr> rows);
  // smat(rows) is PSD; rows.size() must equal svec_dim(order)
  void add_psd(int order, std::vector<LinExpr> rows);

  void set_objective(Sense sense, LinExpr expr);

  const std::vector<VarBlock>& variables() const { return vars_; }
  const VarBlock& variable(int v) const { return vars_.at(v); }
  const std::vector<LinExpr>& rows() const { return rows_; }
  const std::vector<ConeBlock>& cones() const { return cones_; }
  const LinExpr& objective() const { return objective_; }
  Sense sense() const { return sense_; }
  int flat_size() const { return flat_size_; }
  int row_count() const { return static_cast<int>(rows_.size()); }

  // Deterministic text form, one constraint per line.
  std::string dump() const;

 private:
  void check_expr(const LinExpr& expr) const;
  void push_block(ConeKind kind, std::vector<LinExpr> rows, int order);

  std::vector<VarBlock> vars_;
  std::vector<LinExpr> rows_;
  std::vector<ConeBlock> cones_;
  LinExpr objective_;
  Sense sense_ = Sense::Minimize;
  int flat_size_ = 0;
};

}  // namespace polyest::conic
