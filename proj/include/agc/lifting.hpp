#pragma once

#include <Eigen/Core>

#include <stdexcept>
#include <tuple>
#include <utility>
#include <vector>

#include "agc/infograph.hpp"
#include "agc/model.hpp"

namespace agc {

/**
 * Trajectory-space operators.
 *
 *   x = B u + L w                         (true dynamics)
 *   x = Btil u + Ltil w + Htil Pi_C v     (surrogate dynamics, v in place of x_C)
 *
 * B, Btil, H are strictly block lower triangular in time; L, Ltil are block
 * lower triangular with identity diagonal blocks. Htil = H Pi_C' has N_x^C
 * columns (possibly zero).
 */
struct LiftedSystem
{
  MatrixXd B;
  MatrixXd L;
  MatrixXd Btil;
  MatrixXd Ltil;
  MatrixXd H;
  MatrixXd Htil;
  MatrixXd Pi_C;
  std::vector<MatrixXd> Atil;  // per-step surrogate transition
  std::vector<MatrixXd> Hstep; // per-step coupling part, A(t) - Atil(t)
};

/// Atil(t) keeps A_ij(t) for j outside C(i); Hstep(t) holds the remainder.
inline std::pair<std::vector<MatrixXd>, std::vector<MatrixXd>> surrogate_split(const ProblemInstance& inst,
                                                                               const InfoDecomposition& d)
{
  const BlockIndex idx = inst.index();
  std::vector<MatrixXd> Atil;
  std::vector<MatrixXd> Hstep;
  for (int t = 0; t < idx.horizon(); ++t) {
    const MatrixXd& A = inst.dynamics.A[t];
    MatrixXd At = A;
    for (int i = 0; i < idx.subsystems(); ++i) {
      for (int j : d.coupled[i]) {
        At.block(idx.state_offset(i), idx.state_offset(j), idx.state_dim(i), idx.state_dim(j)).setZero();
      }
    }
    Hstep.push_back(A - At);
    Atil.push_back(std::move(At));
  }
  return {std::move(Atil), std::move(Hstep)};
}

namespace detail {

/// Block (t, s) = Phi(t, s+1) E(s) for t > s, where Phi(t, r) = A(t-1)...A(r); zero elsewhere.
/// Column blocks beyond the last E(s) are left zero.
inline MatrixXd lift_inputs(const std::vector<MatrixXd>& A, const std::vector<MatrixXd>& E, int nx, int col_blocks)
{
  const int T = static_cast<int>(A.size());
  const int ne = E.empty() ? 0 : static_cast<int>(E.front().cols());
  MatrixXd out = MatrixXd::Zero(nx * (T + 1), static_cast<Eigen::Index>(ne) * col_blocks);
  for (int s = 0; s < static_cast<int>(E.size()); ++s) {
    MatrixXd block = E[s];
    for (int t = s + 1; t <= T; ++t) {
      if (t > s + 1) { block = A[t - 1] * block; }
      out.block(t * nx, s * ne, nx, ne) = block;
    }
  }
  return out;
}

/// Block (t, s) = Phi(t, s) for t >= s, s = 0..T.
inline MatrixXd lift_propagation(const std::vector<MatrixXd>& A, int nx)
{
  const int T = static_cast<int>(A.size());
  MatrixXd out = MatrixXd::Zero(nx * (T + 1), nx * (T + 1));
  for (int s = 0; s <= T; ++s) {
    MatrixXd block = MatrixXd::Identity(nx, nx);
    out.block(s * nx, s * nx, nx, nx) = block;
    for (int t = s + 1; t <= T; ++t) {
      block = A[t - 1] * block;
      out.block(t * nx, s * nx, nx, nx) = block;
    }
  }
  return out;
}

}  // namespace detail

inline std::pair<MatrixXd, MatrixXd> build_B_L(const ProblemInstance& inst)
{
  const BlockIndex idx = inst.index();
  return {detail::lift_inputs(inst.dynamics.A, inst.dynamics.B, idx.nx(), idx.horizon()),
          detail::lift_propagation(inst.dynamics.A, idx.nx())};
}

struct SurrogateOperators
{
  MatrixXd Btil;
  MatrixXd Ltil;
  MatrixXd H;
  MatrixXd Htil;
};

inline SurrogateOperators build_surrogate(const ProblemInstance& inst, const InfoDecomposition& d)
{
  const BlockIndex idx = inst.index();
  const auto [Atil, Hstep] = surrogate_split(inst, d);
  SurrogateOperators op;
  op.Btil = detail::lift_inputs(Atil, inst.dynamics.B, idx.nx(), idx.horizon());
  op.Ltil = detail::lift_propagation(Atil, idx.nx());
  op.H = detail::lift_inputs(Atil, Hstep, idx.nx(), idx.horizon() + 1);
  op.Htil = op.H * d.projection_matrix(idx.Nx()).transpose();
  return op;
}

inline LiftedSystem build_lifted(const ProblemInstance& inst, const InfoDecomposition& d)
{
  const BlockIndex idx = inst.index();
  LiftedSystem sys;
  std::tie(sys.B, sys.L) = build_B_L(inst);
  auto sur = build_surrogate(inst, d);
  sys.Btil = std::move(sur.Btil);
  sys.Ltil = std::move(sur.Ltil);
  sys.H = std::move(sur.H);
  sys.Htil = std::move(sur.Htil);
  sys.Pi_C = d.projection_matrix(idx.Nx());
  std::tie(sys.Atil, sys.Hstep) = surrogate_split(inst, d);
  return sys;
}

/// x = B u + L w.
inline VectorXd trajectory(const LiftedSystem& sys, const VectorXd& u, const VectorXd& w)
{
  if (u.size() != sys.B.cols() || w.size() != sys.L.cols()) {
    throw std::invalid_argument("trajectory: expected u of length " + std::to_string(sys.B.cols()) +
                                " and w of length " + std::to_string(sys.L.cols()));
  }
  return sys.B * u + sys.L * w;
}

}  // namespace agc
