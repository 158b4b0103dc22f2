#pragma once

#include <Eigen/Core>
#include <unsupported/Eigen/KroneckerProduct>

#include <limits>

#include <random>
#include <string>
#include <vector>

#include "agc/conic/backend.hpp"
#include "agc/infograph.hpp"
#include "agc/lifting.hpp"
#include "agc/model.hpp"

namespace agc::testing {

inline std::string data_path(const std::string& name) { return std::string(AGC_DATA_DIR) + "/" + name; }

/// The two-subsystem chain of the fixtures, built in code.
inline ProblemInstance chain2(bool nested, double sigma_scale = 0.01, double x_bound = 5.0, double u_bound = 1.0)
{
  ProblemInstance p;
  p.dims = {{1, 1}, {1, 1}};
  p.dynamics.horizon = 2;
  MatrixXd A(2, 2);
  A << 0.5, nested ? 0.0 : 0.2, 0.3, 0.5;
  p.dynamics.A = {A};
  p.dynamics.B = {MatrixXd::Identity(2, 2)};
  p.info_graph.edges = {{0, 0}, {1, 1}, {0, 1}};
  p.disturbance.Sigma = sigma_scale * MatrixXd::Identity(6, 6);
  p.constraints = box_constraints(BlockIndex(p.dims, 2), x_bound, u_bound);
  p.cost.R_x = MatrixXd::Identity(6, 6);
  p.cost.R_u = MatrixXd::Identity(4, 4);
  return validate_instance(p);
}

struct RandomInstanceOptions
{
  int max_subsystems = 3;
  int max_horizon = 4;
  int max_state_dim = 2;
  int max_input_dim = 2;
  double coupling_density = 0.5;
  double info_density = 0.4;
};

inline MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double scale = 1.0)
{
  std::normal_distribution<double> nd(0.0, scale);
  MatrixXd m(r, c);
  for (Eigen::Index j = 0; j < c; ++j) {
    for (Eigen::Index i = 0; i < r; ++i) { m(i, j) = nd(rng); }
  }
  return m;
}

inline MatrixXd random_spd(Eigen::Index n, std::mt19937_64& rng, double floor = 0.2)
{
  const MatrixXd a = random_matrix(n, n, rng, 1.0 / std::sqrt(static_cast<double>(n)));
  return a * a.transpose() + floor * MatrixXd::Identity(n, n);
}

/// Random validated instance with sparse, possibly time-varying coupling and a random information graph.
inline ProblemInstance random_instance(std::mt19937_64& rng, const RandomInstanceOptions& o = {})
{
  std::uniform_int_distribution<int> pickN(1, o.max_subsystems);
  std::uniform_int_distribution<int> pickT(1, o.max_horizon);
  std::uniform_int_distribution<int> pickX(1, o.max_state_dim);
  std::uniform_int_distribution<int> pickU(1, o.max_input_dim);
  std::bernoulli_distribution couple(o.coupling_density);
  std::bernoulli_distribution observe(o.info_density);
  std::bernoulli_distribution varying(0.3);

  ProblemInstance p;
  const int N = pickN(rng);
  p.dynamics.horizon = pickT(rng);
  for (int i = 0; i < N; ++i) { p.dims.push_back({pickX(rng), pickU(rng)}); }
  const BlockIndex idx(p.dims, p.dynamics.horizon);
  std::vector<std::vector<char>> a_mask(N, std::vector<char>(N, 0)), b_mask(N, std::vector<char>(N, 0));
  for (int i = 0; i < N; ++i) {
    for (int j = 0; j < N; ++j) {
      a_mask[i][j] = (i == j) || couple(rng);
      b_mask[i][j] = (i == j) || couple(rng) ? 1 : 0;
    }
  }
  const int copies = varying(rng) ? p.dynamics.horizon : 1;
  for (int t = 0; t < copies; ++t) {
    MatrixXd A = MatrixXd::Zero(idx.nx(), idx.nx());
    MatrixXd B = MatrixXd::Zero(idx.nx(), idx.nu());
    for (int i = 0; i < N; ++i) {
      for (int j = 0; j < N; ++j) {
        if (a_mask[i][j]) {
          A.block(idx.state_offset(i), idx.state_offset(j), idx.state_dim(i), idx.state_dim(j)) =
            random_matrix(idx.state_dim(i), idx.state_dim(j), rng, 0.5);
        }
        if (b_mask[i][j]) {
          B.block(idx.state_offset(i), idx.input_offset(j), idx.state_dim(i), idx.input_dim(j)) =
            random_matrix(idx.state_dim(i), idx.input_dim(j), rng, 0.5);
        }
      }
    }
    p.dynamics.A.push_back(A);
    p.dynamics.B.push_back(B);
  }
  for (int i = 0; i < N; ++i) {
    for (int j = 0; j < N; ++j) {
      if (i == j || observe(rng)) { p.info_graph.edges.push_back({j, i}); }
    }
  }
  p.disturbance.Sigma = random_spd(idx.Nx(), rng);
  p.constraints = box_constraints(idx, 10.0, 5.0);
  p.cost.R_x = MatrixXd::Identity(idx.Nx(), idx.Nx());
  p.cost.R_u = MatrixXd::Identity(idx.Nu(), idx.Nu());
  return validate_instance(p);
}

/// Step-by-step rollout of x(t+1) = A(t) x(t) + B(t) u(t) + w(t), x(0) = w(-1).
inline VectorXd rollout(const ProblemInstance& p, const VectorXd& u, const VectorXd& w)
{
  const BlockIndex idx = p.index();
  const int nx = idx.nx();
  const int nu = idx.nu();
  VectorXd x(idx.Nx());
  x.head(nx) = w.head(nx);
  for (int t = 0; t < idx.horizon(); ++t) {
    x.segment((t + 1) * nx, nx) = p.dynamics.A[t] * x.segment(t * nx, nx) + p.dynamics.B[t] * u.segment(t * nu, nu) +
                                  w.segment((t + 1) * nx, nx);
  }
  return x;
}


/**
 * Affine disturbance feedback u = ubar + Qw w, Qw in Q_N, assembled directly on the true
 * dynamics with P^w = B Qw + L substituted out. No surrogate, no contract, one norm per row.
 * Returns the optimal objective, or NaN if the solve did not succeed.
 */
inline double direct_disturbance_feedback(const ProblemInstance& p, const InfoDecomposition& d,
                                          const conic::BackendSettings& settings = {})
{
  const BlockIndex idx = p.index();
  const int Nx = idx.Nx();
  const int Nu = idx.Nu();
  const auto [B, L] = build_B_L(p);
  const auto& C = p.constraints;
  const auto mask = pattern_QN(d, idx).scalar_mask();

  conic::ConicProgram prog;
  const int ubar = prog.add_variables(Nu);
  Eigen::MatrixXi q = Eigen::MatrixXi::Constant(Nu, Nx, -1);
  for (int c = 0; c < Nx; ++c) {
    for (int r = 0; r < Nu; ++r) {
      if (mask(r, c)) { q(r, c) = prog.add_variables(1); }
    }
  }
  const int n = prog.num_vars;

  // vec(B Qw) = S z and vec(Qw) = E z, column-major.
  MatrixXd S = MatrixXd::Zero(Nx * Nx, n);
  MatrixXd E = MatrixXd::Zero(Nu * Nx, n);
  for (int c = 0; c < Nx; ++c) {
    for (int k = 0; k < Nu; ++k) {
      if (q(k, c) < 0) { continue; }
      S.block(c * Nx, q(k, c), Nx, 1) = B.col(k);
      E(c * Nu + k, q(k, c)) = 1.0;
    }
  }
  MatrixXd Ub = MatrixXd::Zero(Nu, n);
  Ub.block(0, ubar, Nu, Nu).setIdentity();
  const MatrixXd& M = p.disturbance.M;
  const MatrixXd KX = Eigen::kroneckerProduct(M, p.cost.R_x);
  const MatrixXd KU = Eigen::kroneckerProduct(M, p.cost.R_u);
  const VectorXd vecL = Eigen::Map<const VectorXd>(L.data(), Nx * Nx);
  const MatrixXd BU = B * Ub;
  MatrixXd Q = S.transpose() * KX * S + E.transpose() * KU * E + BU.transpose() * p.cost.R_x * BU +
               Ub.transpose() * p.cost.R_u * Ub;
  Q = 0.5 * (Q + Q.transpose()).eval();
  const VectorXd lin = 2.0 * S.transpose() * KX * vecL;
  const double c0 = vecL.dot(KX * vecL);
  std::vector<Eigen::Triplet<double>> trip;
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      if (Q(i, j) != 0.0) { trip.emplace_back(i, j, Q(i, j)); }
    }
  }
  prog.finalize_objective(trip, lin, c0);

  // ||G'(Fx (B Qw + L) + Fu Qw + Fw)' e_i|| <= g_i - (Fx B + Fu) ubar
  const MatrixXd G = sigma_factor(p.disturbance.Sigma);
  for (Eigen::Index i = 0; i < C.g.size(); ++i) {
    // Row i of Fx B Qw + Fu Qw as a linear map of z, one column of the row vector per state.
    const MatrixXd fb = C.F_x.row(i) * B + C.F_u.row(i);
    const VectorXd c0row = (C.F_x.row(i) * L + C.F_w.row(i)).transpose();
    MatrixXd Crow = MatrixXd::Zero(Nx, n);
    for (int c = 0; c < Nx; ++c) {
      for (int k = 0; k < Nu; ++k) {
        if (q(k, c) >= 0) { Crow(c, q(k, c)) += fb(0, k); }
      }
    }
    const MatrixXd GC = G.transpose() * Crow;
    const VectorXd Gc0 = G.transpose() * c0row;
    conic::SocConstraint s;
    for (int r = 0; r < Nx; ++r) {
      conic::AffineExpr e(Gc0(r));
      for (int j = 0; j < n; ++j) {
        if (GC(r, j) != 0.0) { e.add(j, GC(r, j)); }
      }
      s.vector.push_back(e);
    }
    s.bound.constant = C.g(i);
    for (int k = 0; k < Nu; ++k) {
      if (fb(0, k) != 0.0) { s.bound.add(ubar + k, -fb(0, k)); }
    }
    prog.socs.push_back(std::move(s));
  }
  const auto sol = conic::solve(prog, settings);
  if (sol.status != conic::SolveStatus::Optimal || !sol.primal) { return std::numeric_limits<double>::quiet_NaN(); }
  return prog.objective(*sol.primal);
}

}  // namespace agc::testing
