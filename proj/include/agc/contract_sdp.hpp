#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "agc/conic/backend.hpp"
#include "agc/infograph.hpp"
#include "agc/lifting.hpp"
#include "agc/model.hpp"

namespace agc {

/// Optimal decision variables of the policy-contract program, as dense matrices.
struct SdpVariables
{
  MatrixXd Qw;   // N_u x N_x, pattern Q_N
  MatrixXd Qxi;  // N_u x N_x, pattern Q_C
  MatrixXd Y;    // N_x x N_x, pattern Y(G_C)
  VectorXd ubar;
  VectorXd vbar;
  VectorXd xbar;
  MatrixXd Pw;
  MatrixXd Pxi;
  double lambda = 1.0;
  double beta = 0.0;
  VectorXd t1;
  VectorXd t2;
};

/// u = u_open + Qw w + Qv x_C-feedback, i.e. Qv acts on the (full-length) state trajectory.
struct AffinePolicy
{
  VectorXd u_open;
  MatrixXd Qw;
  MatrixXd Qv;
};

/// V_C = Pi_C(vbar + Z W), Z = lambda I - Y.
struct Contract
{
  VectorXd vbar;
  MatrixXd Z;
  VectorXd center;  // Pi_C vbar
  MatrixXd shape;   // Pi_C Z Sigma Z' Pi_C'

  [[nodiscard]] int dim() const { return static_cast<int>(center.size()); }
};

struct SynthesisResult
{
  conic::SolveStatus status = conic::SolveStatus::Failure;
  conic::SolverDiagnostics diagnostics;
  double objective = 0.0;
  std::optional<SdpVariables> variables;
  std::optional<AffinePolicy> policy;
  std::optional<Contract> contract;
  std::vector<double> row_slacks;  // g_i minus the worst case of row i over W x W
  double off_pattern = 0.0;        // max |Qv| outside Q_C before projection
  double max_equality_residual = 0.0;
  int lmi_dim = 0;
  int num_vars = 0;

  [[nodiscard]] bool solved() const
  {
    return status == conic::SolveStatus::Optimal || status == conic::SolveStatus::Inaccurate;
  }
};

/// Raised when the recovered feedback gain leaves its sparsity pattern.
class OffPatternError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

struct AssemblyOptions
{
  /// Restricts the contract to translation and scaling (Y = 0).
  bool fix_Y_zero = false;
};

/**
 * Scalar variable indices of the assembled program. Entries of -1 are fixed to
 * zero (outside a sparsity pattern, or not referenced by any constraint).
 */
struct SdpLayout
{
  Eigen::MatrixXi Qw;
  Eigen::MatrixXi Qxi;
  Eigen::MatrixXi Y;
  int ubar = 0;
  int vbar_C = 0;  // N_x^C entries, ordered as Pi_C
  int xbar = 0;
  int Pw = 0;      // column-major N_x x N_x
  int Pxi = -1;
  int lambda = -1;
  int beta = -1;
  int t1 = 0;
  int t2 = -1;
  int Nx = 0;
  int Nu = 0;
  int NxC = 0;
  int rows = 0;

  [[nodiscard]] bool has_contract() const { return NxC > 0; }
  [[nodiscard]] int pw(int r, int c) const { return Pw + r + c * Nx; }
  [[nodiscard]] int pxi(int r, int c) const { return Pxi + r + c * Nx; }
};

struct AssembledProgram
{
  conic::ConicProgram program;
  SdpLayout layout;
  int lmi_dim = 0;
};

namespace detail {

inline Eigen::MatrixXi allocate_pattern(conic::ConicProgram& prog, const SparsityPattern& p)
{
  Eigen::MatrixXi idx = Eigen::MatrixXi::Constant(p.rows(), p.cols(), -1);
  const auto mask = p.scalar_mask();
  for (Eigen::Index c = 0; c < idx.cols(); ++c) {
    for (Eigen::Index r = 0; r < idx.rows(); ++r) {
      if (mask(r, c)) { idx(r, c) = prog.add_variables(1); }
    }
  }
  return idx;
}

inline MatrixXd gather(const VectorXd& x, const Eigen::MatrixXi& idx)
{
  MatrixXd out = MatrixXd::Zero(idx.rows(), idx.cols());
  for (Eigen::Index c = 0; c < idx.cols(); ++c) {
    for (Eigen::Index r = 0; r < idx.rows(); ++r) {
      if (idx(r, c) >= 0) { out(r, c) = x(idx(r, c)); }
    }
  }
  return out;
}

/// Adds the quadratic form vec(X)' (M kron R) vec(X) = Tr(X' R X M) over the listed entries.
inline void add_trace_form(std::vector<Eigen::Triplet<double>>& trip, const Eigen::MatrixXi& idx, const MatrixXd& R,
                           const MatrixXd& M)
{
  std::vector<std::pair<Eigen::Index, Eigen::Index>> entries;
  for (Eigen::Index c = 0; c < idx.cols(); ++c) {
    for (Eigen::Index r = 0; r < idx.rows(); ++r) {
      if (idx(r, c) >= 0) { entries.emplace_back(r, c); }
    }
  }
  for (const auto& [r1, c1] : entries) {
    for (const auto& [r2, c2] : entries) {
      const double v = M(c1, c2) * R(r1, r2);
      if (v != 0.0) { trip.emplace_back(idx(r1, c1), idx(r2, c2), v); }
    }
  }
}

inline Eigen::MatrixXi dense_block(int first, Eigen::Index rows, Eigen::Index cols)
{
  Eigen::MatrixXi idx(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) { idx(r, c) = first + static_cast<int>(r + c * rows); }
  }
  return idx;
}

}  // namespace detail

/**
 * Builds the joint policy-contract semidefinite program.
 *
 * Sparsity patterns are enforced by only creating variables for free entries.
 * Rows of Y outside the coupled states and entries of vbar outside Pi_C enter
 * no constraint and no objective term, so they are fixed to zero. With no
 * coupled states the contract variables, the LMI and the second SOC family are
 * omitted altogether.
 */
inline AssembledProgram assemble(const ProblemInstance& inst, const InfoDecomposition& d, const LiftedSystem& sys,
                                 const AssemblyOptions& opts = {})
{
  const BlockIndex idx = inst.index();
  const int Nx = idx.Nx();
  const int Nu = idx.Nu();
  const int NxC = d.coupled_traj_dim;
  const int m = static_cast<int>(inst.constraints.g.size());
  const auto& Fx = inst.constraints.F_x;
  const auto& Fu = inst.constraints.F_u;
  const auto& Fw = inst.constraints.F_w;
  const MatrixXd& Sigma = inst.disturbance.Sigma;
  const MatrixXd& M = inst.disturbance.M;

  if (sys.Btil.rows() != Nx || sys.Btil.cols() != Nu || sys.Ltil.rows() != Nx || sys.Htil.cols() != NxC) {
    throw std::logic_error("assemble: lifted operators do not match the instance dimensions");
  }

  AssembledProgram out;
  auto& prog = out.program;
  auto& L = out.layout;
  L.Nx = Nx;
  L.Nu = Nu;
  L.NxC = NxC;
  L.rows = m;
  const bool contract = NxC > 0;

  L.Qw = detail::allocate_pattern(prog, pattern_QN(d, idx));
  L.ubar = prog.add_variables(Nu);
  L.xbar = prog.add_variables(Nx);
  L.Pw = prog.add_variables(Nx * Nx);
  L.t1 = prog.add_variables(m);
  L.Qxi = Eigen::MatrixXi::Constant(Nu, Nx, -1);
  L.Y = Eigen::MatrixXi::Constant(Nx, Nx, -1);
  if (contract) {
    L.Qxi = detail::allocate_pattern(prog, pattern_QC(d, idx));
    if (!opts.fix_Y_zero) {
      const auto mask = pattern_Y(d, idx).scalar_mask();
      std::vector<char> in_C(static_cast<std::size_t>(Nx), 0);
      for (int p : d.projection) { in_C[static_cast<std::size_t>(p)] = 1; }
      for (int c = 0; c < Nx; ++c) {
        for (int r = 0; r < Nx; ++r) {
          if (mask(r, c) && in_C[static_cast<std::size_t>(r)]) { L.Y(r, c) = prog.add_variables(1); }
        }
      }
    }
    L.vbar_C = prog.add_variables(NxC);
    L.Pxi = prog.add_variables(Nx * Nx);
    L.lambda = prog.add_variables(1);
    L.beta = prog.add_variables(1);
    L.t2 = prog.add_variables(m);
  }

  // xbar = Btil ubar + Htil vbar_C
  for (int r = 0; r < Nx; ++r) {
    conic::AffineExpr e;
    e.add(L.xbar + r, 1.0);
    for (int k = 0; k < Nu; ++k) { e.add(L.ubar + k, -sys.Btil(r, k)); }
    for (int a = 0; a < NxC; ++a) { e.add(L.vbar_C + a, -sys.Htil(r, a)); }
    prog.equalities.push_back(std::move(e));
  }
  // Pw = Btil Qw + Ltil
  for (int c = 0; c < Nx; ++c) {
    for (int r = 0; r < Nx; ++r) {
      conic::AffineExpr e(-sys.Ltil(r, c));
      e.add(L.pw(r, c), 1.0);
      for (int k = 0; k < Nu; ++k) {
        if (L.Qw(k, c) >= 0) { e.add(L.Qw(k, c), -sys.Btil(r, k)); }
      }
      prog.equalities.push_back(std::move(e));
    }
  }
  if (contract) {
    // Pxi = Btil Qxi + Htil (lambda Pi_C - Pi_C Y)
    for (int c = 0; c < Nx; ++c) {
      for (int r = 0; r < Nx; ++r) {
        conic::AffineExpr e;
        e.add(L.pxi(r, c), 1.0);
        for (int k = 0; k < Nu; ++k) {
          if (L.Qxi(k, c) >= 0) { e.add(L.Qxi(k, c), -sys.Btil(r, k)); }
        }
        for (int a = 0; a < NxC; ++a) {
          const double h = sys.Htil(r, a);
          if (h == 0.0) { continue; }
          if (d.projection[a] == c) { e.add(L.lambda, -h); }
          if (L.Y(d.projection[a], c) >= 0) { e.add(L.Y(d.projection[a], c), h); }
        }
        prog.equalities.push_back(e.compress());
      }
    }
    // Pi_C xbar = vbar_C
    for (int a = 0; a < NxC; ++a) {
      conic::AffineExpr e;
      e.add(L.xbar + d.projection[a], 1.0).add(L.vbar_C + a, -1.0);
      prog.equalities.push_back(std::move(e));
    }
    // lambda >= 1, beta >= 0, lambda - beta >= 0
    conic::SocConstraint lam1, beta0, gap;
    lam1.bound.add(L.lambda, 1.0).constant = -1.0;
    beta0.bound.add(L.beta, 1.0);
    gap.bound.add(L.lambda, 1.0).add(L.beta, -1.0);
    prog.socs.push_back(lam1);
    prog.socs.push_back(beta0);
    prog.socs.push_back(gap);
  }

  // Robust rows: ||G'(Fx Pw + Fu Qw + Fw)' e_i|| <= t1_i, ||G'(Fx Pxi + Fu Qxi)' e_i|| <= t2_i,
  // t1_i + t2_i <= g_i - Fx xbar - Fu ubar.
  const MatrixXd G = sigma_factor(Sigma);
  for (int i = 0; i < m; ++i) {
    // c_l as an affine expression in the variables, for the two disturbance channels.
    std::vector<conic::AffineExpr> cw(static_cast<std::size_t>(Nx));
    std::vector<conic::AffineExpr> cxi(static_cast<std::size_t>(Nx));
    for (int l = 0; l < Nx; ++l) {
      auto& a = cw[static_cast<std::size_t>(l)];
      auto& b = cxi[static_cast<std::size_t>(l)];
      a.constant = Fw(i, l);
      for (int r = 0; r < Nx; ++r) {
        if (Fx(i, r) == 0.0) { continue; }
        a.add(L.pw(r, l), Fx(i, r));
        if (contract) { b.add(L.pxi(r, l), Fx(i, r)); }
      }
      for (int k = 0; k < Nu; ++k) {
        if (Fu(i, k) == 0.0) { continue; }
        if (L.Qw(k, l) >= 0) { a.add(L.Qw(k, l), Fu(i, k)); }
        if (L.Qxi(k, l) >= 0) { b.add(L.Qxi(k, l), Fu(i, k)); }
      }
    }
    auto project = [&](const std::vector<conic::AffineExpr>& cvec) {
      std::vector<conic::AffineExpr> v(static_cast<std::size_t>(Nx));
      for (int k = 0; k < Nx; ++k) {
        for (int l = k; l < Nx; ++l) {
          if (G(l, k) != 0.0) { v[static_cast<std::size_t>(k)].add(cvec[static_cast<std::size_t>(l)], G(l, k)); }
        }
        v[static_cast<std::size_t>(k)].compress();
      }
      return v;
    };
    conic::SocConstraint s1;
    s1.vector = project(cw);
    s1.bound.add(L.t1 + i, 1.0);
    prog.socs.push_back(std::move(s1));
    conic::SocConstraint budget;
    budget.bound.constant = inst.constraints.g(i);
    budget.bound.add(L.t1 + i, -1.0);
    if (contract) {
      conic::SocConstraint s2;
      s2.vector = project(cxi);
      s2.bound.add(L.t2 + i, 1.0);
      prog.socs.push_back(std::move(s2));
      budget.bound.add(L.t2 + i, -1.0);
    }
    for (int r = 0; r < Nx; ++r) { budget.bound.add(L.xbar + r, -Fx(i, r)); }
    for (int k = 0; k < Nu; ++k) { budget.bound.add(L.ubar + k, -Fu(i, k)); }
    budget.bound.compress();
    prog.socs.push_back(std::move(budget));
  }

  // Containment LMI.
  if (contract) {
    const int dim = NxC + 2 * Nx;
    out.lmi_dim = dim;
    conic::LmiConstraint lmi(dim);
    const MatrixXd Sinv = Sigma.llt().solve(MatrixXd::Identity(Nx, Nx));
    const auto& P = d.projection;
    for (int a = 0; a < NxC; ++a) {
      for (int b = 0; b <= a; ++b) { lmi.add(L.lambda, a, b, Sigma(P[a], P[b])); }
      for (int q = 0; q < Nx; ++q) {
        const int y = L.Y(P[a], q);
        if (y < 0) { continue; }
        for (int b = 0; b < NxC; ++b) {
          const double s = Sigma(q, P[b]);
          if (s == 0.0) { continue; }
          lmi.add(y, a, b, a == b ? -2.0 * s : -s);
        }
      }
      for (int l = 0; l < Nx; ++l) {
        lmi.add(L.pw(P[a], l), NxC + l, a, 1.0);
        lmi.add(L.pxi(P[a], l), NxC + Nx + l, a, 1.0);
      }
    }
    for (int k = 0; k < Nx; ++k) {
      for (int l = 0; l <= k; ++l) {
        lmi.add(L.beta, NxC + k, NxC + l, Sinv(k, l));
        lmi.add(L.lambda, NxC + Nx + k, NxC + Nx + l, Sinv(k, l));
        lmi.add(L.beta, NxC + Nx + k, NxC + Nx + l, -Sinv(k, l));
      }
    }
    prog.lmis.push_back(std::move(lmi));
  }

  // Objective.
  std::vector<Eigen::Triplet<double>> trip;
  const auto& Rx = inst.cost.R_x;
  const auto& Ru = inst.cost.R_u;
  detail::add_trace_form(trip, detail::dense_block(L.Pw, Nx, Nx), Rx, M);
  detail::add_trace_form(trip, L.Qw, Ru, M);
  if (contract) {
    detail::add_trace_form(trip, detail::dense_block(L.Pxi, Nx, Nx), Rx, M);
    detail::add_trace_form(trip, L.Qxi, Ru, M);
  }
  const MatrixXd one = MatrixXd::Ones(1, 1);
  detail::add_trace_form(trip, detail::dense_block(L.xbar, Nx, 1), Rx, one);
  detail::add_trace_form(trip, detail::dense_block(L.ubar, Nu, 1), Ru, one);
  prog.finalize_objective(trip, VectorXd::Zero(prog.num_vars), 0.0);
  return out;
}

inline SdpVariables extract_variables(const SdpLayout& L, const InfoDecomposition& d, const VectorXd& x)
{
  SdpVariables v;
  v.Qw = detail::gather(x, L.Qw);
  v.Qxi = detail::gather(x, L.Qxi);
  v.Y = detail::gather(x, L.Y);
  v.ubar = x.segment(L.ubar, L.Nu);
  v.xbar = x.segment(L.xbar, L.Nx);
  v.Pw = Eigen::Map<const MatrixXd>(x.data() + L.Pw, L.Nx, L.Nx);
  v.vbar = VectorXd::Zero(L.Nx);
  v.t1 = x.segment(L.t1, L.rows);
  if (L.has_contract()) {
    for (int a = 0; a < L.NxC; ++a) { v.vbar(d.projection[a]) = x(L.vbar_C + a); }
    v.Pxi = Eigen::Map<const MatrixXd>(x.data() + L.Pxi, L.Nx, L.Nx);
    v.lambda = x(L.lambda);
    v.beta = x(L.beta);
    v.t2 = x.segment(L.t2, L.rows);
  } else {
    v.Pxi = MatrixXd::Zero(L.Nx, L.Nx);
    v.t2 = VectorXd::Zero(L.rows);
  }
  return v;
}

/// Tr(Pxi'RxPxi M) + Tr(Pw'RxPw M) + Tr(Qw'RuQw M) + Tr(Qxi'RuQxi M) + xbar'Rx xbar + ubar'Ru ubar.
inline double objective_value(const SdpVariables& v, const MatrixXd& M, const MatrixXd& Rx, const MatrixXd& Ru)
{
  double f = (v.Pw.transpose() * Rx * v.Pw * M).trace() + (v.Qw.transpose() * Ru * v.Qw * M).trace() +
             v.xbar.dot(Rx * v.xbar) + v.ubar.dot(Ru * v.ubar);
  if (v.Pxi.size() > 0) { f += (v.Pxi.transpose() * Rx * v.Pxi * M).trace(); }
  if (v.Qxi.size() > 0) { f += (v.Qxi.transpose() * Ru * v.Qxi * M).trace(); }
  return f;
}

/// Z = lambda I - Y.
inline MatrixXd contract_transform(const SdpVariables& v)
{
  return v.lambda * MatrixXd::Identity(v.Y.rows(), v.Y.cols()) - v.Y;
}

inline Contract make_contract(const SdpVariables& v, const InfoDecomposition& d, const MatrixXd& Sigma)
{
  Contract c;
  c.vbar = v.vbar;
  c.Z = contract_transform(v);
  const MatrixXd Pi = d.projection_matrix(static_cast<int>(v.vbar.size()));
  c.center = Pi * v.vbar;
  const MatrixXd PZ = Pi * c.Z;
  c.shape = PZ * Sigma * PZ.transpose();
  c.shape = 0.5 * (c.shape + c.shape.transpose()).eval();
  return c;
}

/**
 * Undoes the change of variables ubar = u_open + Qv vbar, Qxi = Qv Z with a
 * triangular solve against Z. Returns the largest off-pattern magnitude of Qv
 * before it is projected onto Q_C.
 */
inline std::pair<AffinePolicy, double> recover_policy(const SdpVariables& v, const SparsityPattern& QC)
{
  AffinePolicy p;
  p.Qw = v.Qw;
  const MatrixXd Z = contract_transform(v);
  // Qv Z = Qxi  <=>  Z' Qv' = Qxi'; Z' is upper triangular.
  MatrixXd Qv = Z.transpose().triangularView<Eigen::Upper>().solve(v.Qxi.transpose()).transpose();
  const double off = QC.max_off_pattern(Qv);
  p.Qv = QC.project(Qv);
  p.u_open = v.ubar - p.Qv * v.vbar;
  return {p, off};
}

/// Worst-case slack of each robust row: g_i - Fx xbar - Fu ubar - ||G'c1_i|| - ||G'c2_i||.
inline std::vector<double> robust_row_slacks(const ProblemInstance& inst, const SdpVariables& v)
{
  const auto& C = inst.constraints;
  const MatrixXd G = sigma_factor(inst.disturbance.Sigma);
  const MatrixXd c1 = (C.F_x * v.Pw + C.F_u * v.Qw + C.F_w) * G;
  const MatrixXd c2 = (C.F_x * v.Pxi + C.F_u * v.Qxi) * G;
  const VectorXd nominal = C.g - C.F_x * v.xbar - C.F_u * v.ubar;
  std::vector<double> out;
  for (Eigen::Index i = 0; i < C.g.size(); ++i) {
    out.push_back(nominal(i) - c1.row(i).norm() - c2.row(i).norm());
  }
  return out;
}

struct SynthesisOptions
{
  AssemblyOptions assembly;
  conic::BackendSettings backend;
  double pattern_tol = 1e-9;
};

inline SynthesisResult synthesize(const ProblemInstance& inst, const InfoDecomposition& d, const LiftedSystem& sys,
                                  const SynthesisOptions& opts = {})
{
  const AssembledProgram ap = assemble(inst, d, sys, opts.assembly);
  SynthesisResult res;
  res.lmi_dim = ap.lmi_dim;
  res.num_vars = ap.program.num_vars;
  const conic::ConicSolution sol = conic::solve(ap.program, opts.backend);
  res.status = sol.status;
  res.diagnostics = sol.diagnostics;
  if (!sol.primal) { return res; }

  res.objective = sol.objective;
  res.max_equality_residual = conic::verify_solution(ap.program, *sol.primal).max_equality();
  SdpVariables v = extract_variables(ap.layout, d, *sol.primal);
  if (!ap.layout.has_contract()) {
    v.lambda = 1.0;
    v.beta = 0.0;
  }
  const BlockIndex idx = inst.index();
  auto [policy, off] = recover_policy(v, pattern_QC(d, idx));
  res.off_pattern = off;
  if (off > opts.pattern_tol) {
    throw OffPatternError("off-pattern violation: recovered Qv has magnitude " + std::to_string(off) +
                          " outside its sparsity pattern");
  }
  res.row_slacks = robust_row_slacks(inst, v);
  res.contract = make_contract(v, d, inst.disturbance.Sigma);
  res.policy = std::move(policy);
  res.variables = std::move(v);
  return res;
}

inline SynthesisResult synthesize(const ProblemInstance& inst, const SynthesisOptions& opts = {})
{
  const InfoDecomposition d = compute_decomposition(inst, build_coupling_graphs(inst));
  return synthesize(inst, d, build_lifted(inst, d), opts);
}

}  // namespace agc
