#pragma once

#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <Eigen/SparseCore>

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace agc::conic {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Sparse affine scalar expression sum_k coef_k x[var_k] + constant.
struct AffineExpr
{
  struct Term
  {
    int var;
    double coef;
  };

  std::vector<Term> terms;
  double constant = 0.0;

  AffineExpr() = default;
  explicit AffineExpr(double c) : constant(c) {}

  AffineExpr& add(int var, double coef)
  {
    if (coef != 0.0) { terms.push_back({var, coef}); }
    return *this;
  }
  AffineExpr& add(const AffineExpr& other, double scale = 1.0)
  {
    for (const auto& t : other.terms) { add(t.var, scale * t.coef); }
    constant += scale * other.constant;
    return *this;
  }

  /// Merges duplicate variables and drops exact zeros.
  AffineExpr& compress()
  {
    std::sort(terms.begin(), terms.end(), [](const Term& a, const Term& b) { return a.var < b.var; });
    std::vector<Term> merged;
    for (const auto& t : terms) {
      if (!merged.empty() && merged.back().var == t.var) {
        merged.back().coef += t.coef;
      } else {
        merged.push_back(t);
      }
    }
    std::erase_if(merged, [](const Term& t) { return t.coef == 0.0; });
    terms = std::move(merged);
    return *this;
  }

  [[nodiscard]] double evaluate(const VectorXd& x) const
  {
    double v = constant;
    for (const auto& t : terms) { v += t.coef * x(t.var); }
    return v;
  }
};

/// ||vector(x)||_2 <= bound(x). An empty vector part is a scalar inequality bound(x) >= 0.
struct SocConstraint
{
  std::vector<AffineExpr> vector;
  AffineExpr bound;
};

/**
 * Symmetric affine matrix map F(x) = F0 + sum_v x_v F_v required PSD.
 *
 * Each entry contributes coef * x[var] at (row, col) and (col, row); entries
 * are stored with row >= col. Repeated entries accumulate.
 */
struct LmiConstraint
{
  struct Entry
  {
    int var;
    int row;
    int col;
    double coef;
  };

  int dim = 0;
  MatrixXd constant;
  std::vector<Entry> entries;

  explicit LmiConstraint(int n = 0) : dim(n), constant(MatrixXd::Zero(n, n)) {}

  void add(int var, int row, int col, double coef)
  {
    if (coef == 0.0) { return; }
    if (row < col) { std::swap(row, col); }
    entries.push_back({var, row, col, coef});
  }

  void add_constant(int row, int col, double value)
  {
    constant(row, col) += value;
    if (row != col) { constant(col, row) += value; }
  }

  [[nodiscard]] MatrixXd evaluate(const VectorXd& x) const
  {
    MatrixXd F = constant;
    for (const auto& e : entries) {
      F(e.row, e.col) += e.coef * x(e.var);
      if (e.row != e.col) { F(e.col, e.row) += e.coef * x(e.var); }
    }
    return F;
  }
};

/**
 * minimize    x' Q x + q' x + r
 * subject to  a_k(x) = 0                      (equalities)
 *             ||v_k(x)|| <= b_k(x)            (second-order cones)
 *             F_k(x) PSD                      (linear matrix inequalities)
 *
 * Q must be symmetric positive semidefinite. Programs are immutable once handed
 * to a backend.
 */
struct ConicProgram
{
  int num_vars = 0;
  Eigen::SparseMatrix<double> quad;
  VectorXd linear;
  double constant = 0.0;
  std::vector<AffineExpr> equalities;
  std::vector<SocConstraint> socs;
  std::vector<LmiConstraint> lmis;

  int add_variables(int count)
  {
    const int first = num_vars;
    num_vars += count;
    return first;
  }

  /// Sizes the objective containers once all variables exist.
  void finalize_objective(const std::vector<Eigen::Triplet<double>>& quad_terms, const VectorXd& lin, double c0)
  {
    quad.resize(num_vars, num_vars);
    quad.setFromTriplets(quad_terms.begin(), quad_terms.end());
    linear = lin;
    constant = c0;
  }

  [[nodiscard]] double objective(const VectorXd& x) const
  {
    double v = constant;
    if (linear.size() == x.size()) { v += linear.dot(x); }
    if (quad.rows() == x.size()) { v += x.dot(quad * x); }
    return v;
  }
};

enum class SolveStatus { Optimal, Infeasible, Inaccurate, Failure };

inline std::string to_string(SolveStatus s)
{
  switch (s) {
  case SolveStatus::Optimal: return "optimal";
  case SolveStatus::Infeasible: return "infeasible";
  case SolveStatus::Inaccurate: return "inaccurate";
  case SolveStatus::Failure: return "failure";
  }
  return "failure";
}

inline SolveStatus status_from_string(const std::string& s)
{
  if (s == "optimal") { return SolveStatus::Optimal; }
  if (s == "infeasible") { return SolveStatus::Infeasible; }
  if (s == "inaccurate") { return SolveStatus::Inaccurate; }
  return SolveStatus::Failure;
}

struct SolverDiagnostics
{
  std::string backend;
  int iterations = 0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double gap = 0.0;
  double relative_gap = 0.0;
  std::string message;
};

struct ConicSolution
{
  SolveStatus status = SolveStatus::Failure;
  std::optional<VectorXd> primal;  // present iff optimal or inaccurate
  double objective = 0.0;
  SolverDiagnostics diagnostics;
};

/// Per-constraint residuals recomputed from the primal vector alone.
struct ResidualReport
{
  std::vector<double> equality;   // |a_k(x)|
  std::vector<double> soc_slack;  // b_k(x) - ||v_k(x)||
  std::vector<double> lmi_min_eig;
  std::vector<double> lmi_scale;  // 1 + ||F_k(x)||
  double tol = 1e-6;

  [[nodiscard]] int flagged() const
  {
    int n = 0;
    for (double r : equality) { n += r > tol ? 1 : 0; }
    for (double r : soc_slack) { n += r < -tol ? 1 : 0; }
    for (std::size_t k = 0; k < lmi_min_eig.size(); ++k) { n += lmi_min_eig[k] < -tol * lmi_scale[k] ? 1 : 0; }
    return n;
  }
  [[nodiscard]] bool ok() const { return flagged() == 0; }
  [[nodiscard]] bool empty() const { return equality.empty() && soc_slack.empty() && lmi_min_eig.empty(); }
  [[nodiscard]] double max_equality() const
  {
    return equality.empty() ? 0.0 : *std::max_element(equality.begin(), equality.end());
  }
  [[nodiscard]] double min_soc_slack() const
  {
    return soc_slack.empty() ? 0.0 : *std::min_element(soc_slack.begin(), soc_slack.end());
  }
};

inline ResidualReport verify_solution(const ConicProgram& prog, const VectorXd& x, double tol = 1e-6)
{
  if (x.size() != prog.num_vars) { throw std::invalid_argument("verify_solution: primal has wrong length"); }
  ResidualReport rep;
  rep.tol = tol;
  for (const auto& eq : prog.equalities) { rep.equality.push_back(std::abs(eq.evaluate(x))); }
  for (const auto& soc : prog.socs) {
    double nrm2 = 0.0;
    for (const auto& v : soc.vector) {
      const double e = v.evaluate(x);
      nrm2 += e * e;
    }
    rep.soc_slack.push_back(soc.bound.evaluate(x) - std::sqrt(nrm2));
  }
  for (const auto& lmi : prog.lmis) {
    const MatrixXd F = lmi.evaluate(x);
    if (F.rows() == 0) { continue; }
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(F, Eigen::EigenvaluesOnly);
    rep.lmi_min_eig.push_back(es.eigenvalues().minCoeff());
    rep.lmi_scale.push_back(1.0 + es.eigenvalues().cwiseAbs().maxCoeff());
  }
  return rep;
}

inline ResidualReport verify_solution(const ConicProgram& prog, const ConicSolution& sol, double tol = 1e-6)
{
  if (!sol.primal) { throw std::invalid_argument("verify_solution: solution has no primal vector"); }
  return verify_solution(prog, *sol.primal, tol);
}

}  // namespace agc::conic
