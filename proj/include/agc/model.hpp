#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <compare>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "agc/block_index.hpp"

namespace agc {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Raised when a problem instance violates a structural or numerical invariant.
class ValidationError : public std::invalid_argument
{
public:
  using std::invalid_argument::invalid_argument;
};

enum class DisturbanceLaw { UniformEllipsoid };

inline std::string to_string(DisturbanceLaw law)
{
  switch (law) {
  case DisturbanceLaw::UniformEllipsoid: return "uniform_ellipsoid";
  }
  return "unknown";
}

/// Directed edge (from, to) between 0-based subsystem indices.
struct Edge
{
  int from = 0;
  int to = 0;

  friend auto operator<=>(const Edge&, const Edge&) = default;
};

/// Time-varying block dynamics x(t+1) = A(t) x(t) + B(t) u(t) + w(t).
struct Dynamics
{
  std::vector<MatrixXd> A;  // T entries after canonicalization (one entry = constant)
  std::vector<MatrixXd> B;
  int horizon = 1;
};

/// Ellipsoidal support {z : z' Sigma^{-1} z <= 1} plus second moment of w.
struct DisturbanceModel
{
  MatrixXd Sigma;
  MatrixXd M;  // empty before canonicalization means "derive from the law"
  DisturbanceLaw law = DisturbanceLaw::UniformEllipsoid;
};

/// Robust polyhedral constraints F_x x + F_u u + F_w w <= g for all w in W.
struct ConstraintData
{
  MatrixXd F_x;
  MatrixXd F_u;
  MatrixXd F_w;  // empty before canonicalization means zero
  VectorXd g;

  [[nodiscard]] int rows() const { return static_cast<int>(g.size()); }
};

struct CostData
{
  MatrixXd R_x;
  MatrixXd R_u;
};

/// Information graph G_I: edge (j, i) means subsystem i measures x_j.
struct InfoGraph
{
  std::vector<Edge> edges;

  [[nodiscard]] bool has_edge(int from, int to) const
  {
    return std::binary_search(edges.begin(), edges.end(), Edge{from, to});
  }

  /// V_I^-(i), ascending.
  [[nodiscard]] std::vector<int> in_neighbors(int i) const
  {
    std::vector<int> out;
    for (const auto& e : edges) {
      if (e.to == i) { out.push_back(e.from); }
    }
    std::sort(out.begin(), out.end());
    return out;
  }
};

struct ProblemInstance
{
  std::vector<SubsystemDims> dims;
  Dynamics dynamics;
  DisturbanceModel disturbance;
  ConstraintData constraints;
  CostData cost;
  InfoGraph info_graph;

  [[nodiscard]] int subsystems() const { return static_cast<int>(dims.size()); }
  [[nodiscard]] int horizon() const { return dynamics.horizon; }
  [[nodiscard]] BlockIndex index() const { return BlockIndex(dims, dynamics.horizon); }
};

namespace detail {

inline std::string shape_str(const MatrixXd& m)
{
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

inline void require_shape(const MatrixXd& m, Eigen::Index rows, Eigen::Index cols, const std::string& what)
{
  if (m.rows() != rows || m.cols() != cols) {
    std::ostringstream os;
    os << "dimension mismatch: " << what << " is " << shape_str(m) << ", expected " << rows << "x" << cols;
    throw ValidationError(os.str());
  }
}

inline bool nearly_symmetric(const MatrixXd& m)
{
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  return (m - m.transpose()).cwiseAbs().maxCoeff() <= 1e-9 * scale;
}

}  // namespace detail

/// PSD test with a floor relative to the largest eigenvalue.
inline bool is_psd(const MatrixXd& m, double rel_tol = 1e-9)
{
  if (m.size() == 0) { return true; }
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
  const double hi = es.eigenvalues().maxCoeff();
  const double lo = es.eigenvalues().minCoeff();
  return lo >= -rel_tol * std::max(hi, 0.0);
}

inline bool is_positive_definite(const MatrixXd& m)
{
  if (m.rows() == 0) { return true; }
  Eigen::LLT<MatrixXd> llt(m);
  return llt.info() == Eigen::Success;
}

/// Lower-triangular G with G G' = Sigma.
inline MatrixXd sigma_factor(const MatrixXd& Sigma)
{
  Eigen::LLT<MatrixXd> llt(Sigma);
  if (llt.info() != Eigen::Success) { throw ValidationError("Sigma not positive definite"); }
  return llt.matrixL();
}

/// Second moment of the uniform law on {z : z' Sigma^{-1} z <= 1}: Sigma / (N_x + 2).
inline MatrixXd default_second_moment(const MatrixXd& Sigma, int Nx)
{
  return Sigma / static_cast<double>(Nx + 2);
}

/**
 * Checks every invariant of a raw instance and returns its canonical form:
 * dynamics expanded to T explicit matrices, M filled from the disturbance law
 * when absent, F_w zero-filled, symmetric data symmetrized, edges sorted.
 */
inline ProblemInstance validate_instance(ProblemInstance raw)
{
  const int N = raw.subsystems();
  if (N < 1) { throw ValidationError("instance must have at least one subsystem"); }
  if (raw.dynamics.horizon < 1) { throw ValidationError("horizon must be at least 1"); }
  for (int i = 0; i < N; ++i) {
    if (raw.dims[i].state_dim < 1 || raw.dims[i].input_dim < 1) {
      throw ValidationError("subsystem " + std::to_string(i + 1) + " has non-positive dimensions");
    }
  }
  const BlockIndex idx = raw.index();
  const int T = idx.horizon();
  const int nx = idx.nx();
  const int nu = idx.nu();
  const int Nx = idx.Nx();
  const int Nu = idx.Nu();

  auto broadcast = [T](std::vector<MatrixXd>& seq, const char* name) {
    if (seq.size() == 1) {
      seq.assign(static_cast<std::size_t>(T), MatrixXd(seq.front()));
    } else if (seq.size() != static_cast<std::size_t>(T)) {
      throw ValidationError(std::string("dimension mismatch: ") + name + " must be one matrix or a list of " +
                            std::to_string(T) + " matrices, got " + std::to_string(seq.size()));
    }
  };
  broadcast(raw.dynamics.A, "A");
  broadcast(raw.dynamics.B, "B");
  for (int t = 0; t < T; ++t) {
    detail::require_shape(raw.dynamics.A[t], nx, nx, "A(" + std::to_string(t) + ")");
    detail::require_shape(raw.dynamics.B[t], nx, nu, "B(" + std::to_string(t) + ")");
  }

  auto& edges = raw.info_graph.edges;
  for (const auto& e : edges) {
    if (e.from < 0 || e.from >= N || e.to < 0 || e.to >= N) {
      throw ValidationError("information graph edge (" + std::to_string(e.from + 1) + "," + std::to_string(e.to + 1) +
                            ") references a missing subsystem");
    }
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  for (int i = 0; i < N; ++i) {
    if (!raw.info_graph.has_edge(i, i)) {
      throw ValidationError("information graph must contain (" + std::to_string(i + 1) + "," + std::to_string(i + 1) +
                            "): every subsystem observes its own state");
    }
  }

  auto& dist = raw.disturbance;
  detail::require_shape(dist.Sigma, Nx, Nx, "Sigma");
  if (!detail::nearly_symmetric(dist.Sigma)) { throw ValidationError("Sigma not symmetric"); }
  dist.Sigma = 0.5 * (dist.Sigma + dist.Sigma.transpose());
  if (!is_positive_definite(dist.Sigma)) { throw ValidationError("Sigma not positive definite"); }
  if (dist.M.size() == 0) { dist.M = default_second_moment(dist.Sigma, Nx); }
  detail::require_shape(dist.M, Nx, Nx, "M");
  if (!detail::nearly_symmetric(dist.M)) { throw ValidationError("M not symmetric"); }
  dist.M = 0.5 * (dist.M + dist.M.transpose());
  if (!is_positive_definite(dist.M)) { throw ValidationError("M not positive definite"); }

  auto& con = raw.constraints;
  const auto m = con.g.size();
  if (con.F_x.size() == 0) { con.F_x.setZero(m, Nx); }
  if (con.F_u.size() == 0) { con.F_u.setZero(m, Nu); }
  if (con.F_w.size() == 0) { con.F_w.setZero(m, Nx); }
  detail::require_shape(con.F_x, m, Nx, "F_x");
  detail::require_shape(con.F_u, m, Nu, "F_u");
  detail::require_shape(con.F_w, m, Nx, "F_w");

  auto& cost = raw.cost;
  detail::require_shape(cost.R_x, Nx, Nx, "R_x");
  detail::require_shape(cost.R_u, Nu, Nu, "R_u");
  if (!detail::nearly_symmetric(cost.R_x)) { throw ValidationError("R_x not symmetric"); }
  if (!detail::nearly_symmetric(cost.R_u)) { throw ValidationError("R_u not symmetric"); }
  cost.R_x = 0.5 * (cost.R_x + cost.R_x.transpose());
  cost.R_u = 0.5 * (cost.R_u + cost.R_u.transpose());
  if (!is_psd(cost.R_x)) { throw ValidationError("R_x not positive semidefinite"); }
  if (!is_psd(cost.R_u)) { throw ValidationError("R_u not positive semidefinite"); }

  return raw;
}

/// Exact (bitwise) equality of canonical instances.
inline bool identical(const ProblemInstance& a, const ProblemInstance& b)
{
  auto same = [](const MatrixXd& x, const MatrixXd& y) {
    return x.rows() == y.rows() && x.cols() == y.cols() && (x.size() == 0 || x == y);
  };
  auto same_seq = [&](const std::vector<MatrixXd>& x, const std::vector<MatrixXd>& y) {
    if (x.size() != y.size()) { return false; }
    for (std::size_t k = 0; k < x.size(); ++k) {
      if (!same(x[k], y[k])) { return false; }
    }
    return true;
  };
  return a.dims == b.dims && a.dynamics.horizon == b.dynamics.horizon && same_seq(a.dynamics.A, b.dynamics.A) &&
         same_seq(a.dynamics.B, b.dynamics.B) && same(a.disturbance.Sigma, b.disturbance.Sigma) &&
         same(a.disturbance.M, b.disturbance.M) && a.disturbance.law == b.disturbance.law &&
         same(a.constraints.F_x, b.constraints.F_x) && same(a.constraints.F_u, b.constraints.F_u) &&
         same(a.constraints.F_w, b.constraints.F_w) && same(a.constraints.g, b.constraints.g) &&
         same(a.cost.R_x, b.cost.R_x) && same(a.cost.R_u, b.cost.R_u) && a.info_graph.edges == b.info_graph.edges;
}

/// Box constraints |x_k(t)| <= x_bound (t = 0..T) and |u_k(t)| <= u_bound.
inline ConstraintData box_constraints(const BlockIndex& idx, double x_bound, double u_bound)
{
  const int Nx = idx.Nx();
  const int Nu = idx.Nu();
  const int m = 2 * (Nx + Nu);
  ConstraintData c;
  c.F_x.setZero(m, Nx);
  c.F_u.setZero(m, Nu);
  c.F_w.setZero(m, Nx);
  c.g.resize(m);
  int r = 0;
  for (int k = 0; k < Nx; ++k) {
    c.F_x(r, k) = 1.0;
    c.g(r++) = x_bound;
    c.F_x(r, k) = -1.0;
    c.g(r++) = x_bound;
  }
  for (int k = 0; k < Nu; ++k) {
    c.F_u(r, k) = 1.0;
    c.g(r++) = u_bound;
    c.F_u(r, k) = -1.0;
    c.g(r++) = u_bound;
  }
  return c;
}

}  // namespace agc
