#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/LU>

#include <cmath>
#include <cstdint>
#include <limits>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "agc/contract_sdp.hpp"
#include "agc/infograph.hpp"
#include "agc/lifting.hpp"
#include "agc/model.hpp"

namespace agc {

using Rng = std::mt19937_64;

/// Raised when the fixed-point and step-by-step rollouts disagree.
class CausalityError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

/// Raised when a disturbance is requested from a subsystem outside N(i).
class NotLocallyNestedError : public std::invalid_argument
{
public:
  using std::invalid_argument::invalid_argument;
};

/// Point d uniform on the unit sphere of dimension n.
inline VectorXd sample_sphere(int n, Rng& rng)
{
  std::normal_distribution<double> nd(0.0, 1.0);
  VectorXd d(n);
  double norm = 0.0;
  do {
    for (int k = 0; k < n; ++k) { d(k) = nd(rng); }
    norm = d.norm();
  } while (norm == 0.0);
  return d / norm;
}

/// w = G (r d), r = U^(1/n): uniform on {w : w' Sigma^-1 w <= 1} for G G' = Sigma.
inline VectorXd sample_disturbance(const MatrixXd& G, Rng& rng)
{
  const auto n = static_cast<int>(G.rows());
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  const VectorXd d = sample_sphere(n, rng);
  const double r = std::pow(ud(rng), 1.0 / n);
  return G * (r * d);
}

/// Point on the boundary of the ellipsoid, w' Sigma^-1 w = 1.
inline VectorXd sample_disturbance_boundary(const MatrixXd& G, Rng& rng)
{
  return G * sample_sphere(static_cast<int>(G.rows()), rng);
}

struct Rollout
{
  VectorXd x;
  VectorXd u;
};

/// Closed loop under u = u_open + Qw w + Qv x: (I - B Qv) x = B u_open + (B Qw + L) w.
inline Rollout closed_loop_fixed_point(const LiftedSystem& sys, const AffinePolicy& p, const VectorXd& w)
{
  const auto Nx = sys.B.rows();
  const MatrixXd K = MatrixXd::Identity(Nx, Nx) - sys.B * p.Qv;
  Rollout r;
  r.x = K.partialPivLu().solve(sys.B * p.u_open + (sys.B * p.Qw + sys.L) * w);
  r.u = p.u_open + p.Qw * w + p.Qv * r.x;
  return r;
}

/**
 * w_j(t-1) = x_j(t) - sum_{k in V_A^-(j)} A_jk(t-1) x_k(t-1) - sum_{k in V_B^-(j)} B_jk(t-1) u_k(t-1),
 * with w_j(-1) = x_j(0). Only inputs up to time t-1 are read.
 */
inline VectorXd reconstruct_disturbance(const ProblemInstance& inst, const CouplingGraphs& graphs,
                                        const InfoDecomposition& d, const VectorXd& x, const VectorXd& u, int i, int j,
                                        int t)
{
  if (!d.is_nested(i, j)) {
    throw NotLocallyNestedError("not locally nested: subsystem " + std::to_string(j + 1) + " is not in N(" +
                                std::to_string(i + 1) + ")");
  }
  const BlockIndex idx = inst.index();
  if (t < 0 || t > idx.horizon()) { throw std::out_of_range("reconstruct_disturbance: time out of range"); }
  const int nj = idx.state_dim(j);
  VectorXd w = x.segment(idx.state_pos(t, j), nj);
  if (t == 0) { return w; }
  const MatrixXd& A = inst.dynamics.A[t - 1];
  const MatrixXd& B = inst.dynamics.B[t - 1];
  for (int k : graphs.in_A(j)) {
    w -= A.block(idx.state_offset(j), idx.state_offset(k), nj, idx.state_dim(k)) *
         x.segment(idx.state_pos(t - 1, k), idx.state_dim(k));
  }
  for (int k : graphs.in_B(j)) {
    w -= B.block(idx.state_offset(j), idx.input_offset(k), nj, idx.input_dim(k)) *
         u.segment(idx.input_pos(t - 1, k), idx.input_dim(k));
  }
  return w;
}

struct RecursiveRollout
{
  Rollout rollout;
  double max_reconstruction_error = 0.0;
};

/**
 * Step-by-step rollout in which controller i only uses what it can observe:
 * disturbances of N(i) rebuilt from the state and input history, and its
 * information-coupling states directly.
 */
inline RecursiveRollout closed_loop_recursive(const ProblemInstance& inst, const CouplingGraphs& graphs,
                                              const InfoDecomposition& d, const AffinePolicy& p, const VectorXd& w)
{
  const BlockIndex idx = inst.index();
  const int T = idx.horizon();
  const int N = idx.subsystems();
  const int nx = idx.nx();
  RecursiveRollout out;
  VectorXd x = VectorXd::Zero(idx.Nx());
  VectorXd u = VectorXd::Zero(idx.Nu());
  x.head(nx) = w.head(nx);
  for (int t = 0; t < T; ++t) {
    for (int i = 0; i < N; ++i) {
      const int ri = idx.input_pos(t, i);
      const int mi = idx.input_dim(i);
      VectorXd ui = p.u_open.segment(ri, mi);
      for (int j : d.nested[i]) {
        const int nj = idx.state_dim(j);
        for (int s = 0; s <= t; ++s) {
          const VectorXd wj = reconstruct_disturbance(inst, graphs, d, x, u, i, j, s);
          const double err = (wj - w.segment(idx.disturbance_pos(s - 1, j), nj)).cwiseAbs().maxCoeff();
          out.max_reconstruction_error = std::max(out.max_reconstruction_error, err);
          ui += p.Qw.block(ri, idx.disturbance_pos(s - 1, j), mi, nj) * wj;
        }
      }
      for (int j : d.coupled[i]) {
        const int nj = idx.state_dim(j);
        for (int s = 0; s <= t; ++s) {
          ui += p.Qv.block(ri, idx.state_pos(s, j), mi, nj) * x.segment(idx.state_pos(s, j), nj);
        }
      }
      u.segment(ri, mi) = ui;
    }
    x.segment((t + 1) * nx, nx) = inst.dynamics.A[t] * x.segment(t * nx, nx) +
                                  inst.dynamics.B[t] * u.segment(t * idx.nu(), idx.nu()) +
                                  w.segment((t + 1) * nx, nx);
  }
  out.rollout = {std::move(x), std::move(u)};
  return out;
}

struct CheckedRollout
{
  Rollout rollout;
  double disagreement = 0.0;
  double max_reconstruction_error = 0.0;
};

/// Fixed-point rollout cross-checked against the recursive one.
inline CheckedRollout closed_loop(const ProblemInstance& inst, const CouplingGraphs& graphs, const InfoDecomposition& d,
                                  const LiftedSystem& sys, const AffinePolicy& p, const VectorXd& w,
                                  double tol = 1e-8)
{
  CheckedRollout out;
  out.rollout = closed_loop_fixed_point(sys, p, w);
  const RecursiveRollout rec = closed_loop_recursive(inst, graphs, d, p, w);
  out.max_reconstruction_error = rec.max_reconstruction_error;
  const double scale = 1.0 + out.rollout.x.cwiseAbs().maxCoeff();
  out.disagreement = std::max((out.rollout.x - rec.rollout.x).cwiseAbs().maxCoeff(),
                              (out.rollout.u - rec.rollout.u).cwiseAbs().maxCoeff());
  if (out.disagreement > tol * scale) {
    throw CausalityError("causality violation: fixed-point and recursive rollouts differ by " +
                         std::to_string(out.disagreement));
  }
  return out;
}

/// (x_C - c)' S_C^-1 (x_C - c) for the contract ellipsoid.
inline double check_contract(const Contract& c, const VectorXd& x_C)
{
  if (c.dim() == 0) { throw std::invalid_argument("check_contract: contract has no coupled states"); }
  if (x_C.size() != c.dim()) { throw std::invalid_argument("check_contract: coupled state has wrong length"); }
  Eigen::LLT<MatrixXd> llt(c.shape);
  if (llt.info() != Eigen::Success) { throw std::domain_error("degenerate contract shape: S_C is not positive definite"); }
  const VectorXd r = llt.matrixL().solve(x_C - c.center);
  return r.squaredNorm();
}

/// Neumaier-compensated running sums of a sample and its square.
class MomentAccumulator
{
public:
  void add(double v)
  {
    sum_.add(v);
    sq_.add(v * v);
    ++n_;
  }
  [[nodiscard]] long count() const { return n_; }
  [[nodiscard]] double mean() const { return n_ ? sum_.value() / static_cast<double>(n_) : 0.0; }
  [[nodiscard]] double std_error() const
  {
    if (n_ < 2) { return 0.0; }
    const double m = mean();
    const auto n = static_cast<double>(n_);
    const double var = std::max(0.0, (sq_.value() - n * m * m) / (n - 1.0));
    return std::sqrt(var / n);
  }

private:
  struct Sum
  {
    double s = 0.0;
    double c = 0.0;
    void add(double v)
    {
      const double t = s + v;
      c += std::abs(s) >= std::abs(v) ? (s - t) + v : (v - t) + s;
      s = t;
    }
    [[nodiscard]] double value() const { return s + c; }
  };
  Sum sum_;
  Sum sq_;
  long n_ = 0;
};

struct SimulationConfig
{
  long samples = 10000;
  std::uint64_t seed = 1;
  double abs_tol = 1e-6;
  double rel_tol = 1e-6;
  double membership_tol = 1e-6;
  double rollout_tol = 1e-8;
  bool keep_table = false;
};

struct SampleRow
{
  long index = 0;
  double max_excess = 0.0;  // max_i (row_i - g_i)
  double membership = 0.0;
  double actual_cost = 0.0;
  double surrogate_cost = 0.0;
};

struct SimulationReport
{
  long samples = 0;
  std::uint64_t seed = 0;
  long constraint_violations = 0;
  double worst_slack = std::numeric_limits<double>::infinity();  // min over samples and rows of g_i - row_i
  long contract_violations = 0;
  double worst_membership = 0.0;
  double max_reconstruction_error = 0.0;
  double max_rollout_disagreement = 0.0;
  double surrogate_cost_mean = 0.0;
  double surrogate_cost_se = 0.0;
  double actual_cost_mean = 0.0;
  double actual_cost_se = 0.0;
  /// Only meaningful when M is the second moment of the sampling law.
  bool cost_check_applicable = false;
  std::vector<SampleRow> table;

  [[nodiscard]] bool clean() const { return constraint_violations == 0 && contract_violations == 0; }
};

inline double quadratic_cost(const VectorXd& x, const VectorXd& u, const MatrixXd& Rx, const MatrixXd& Ru)
{
  return x.dot(Rx * x) + u.dot(Ru * u);
}

/// Surrogate trajectories xt = xbar + Pw w + Pxi xi, ut = ubar + Qw w + Qxi xi.
inline Rollout surrogate_rollout(const SdpVariables& v, const VectorXd& w, const VectorXd& xi)
{
  return {v.xbar + v.Pw * w + v.Pxi * xi, v.ubar + v.Qw * w + v.Qxi * xi};
}

inline bool second_moment_matches_law(const ProblemInstance& inst, double tol = 1e-12)
{
  const MatrixXd ref = default_second_moment(inst.disturbance.Sigma, inst.index().Nx());
  return (inst.disturbance.M - ref).cwiseAbs().maxCoeff() <= tol * std::max(1.0, ref.cwiseAbs().maxCoeff());
}

inline SimulationReport run(const ProblemInstance& inst, const InfoDecomposition& d, const LiftedSystem& sys,
                            const SynthesisResult& result, const SimulationConfig& cfg)
{
  if (cfg.samples < 1) { throw std::invalid_argument("sample count must be at least 1"); }
  if (!result.policy || !result.variables || !result.contract) {
    throw std::invalid_argument("simulation needs a solved synthesis result");
  }
  const CouplingGraphs graphs = build_coupling_graphs(inst);
  const MatrixXd G = sigma_factor(inst.disturbance.Sigma);
  const auto& C = inst.constraints;
  const auto& Rx = inst.cost.R_x;
  const auto& Ru = inst.cost.R_u;
  const bool has_contract = result.contract->dim() > 0;

  // Separate deterministic streams for the true and the primitive disturbance.
  std::seed_seq seq_w{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32), 0u};
  std::seed_seq seq_xi{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32), 1u};
  Rng rng_w(seq_w);
  Rng rng_xi(seq_xi);

  SimulationReport rep;
  rep.samples = cfg.samples;
  rep.seed = cfg.seed;
  rep.cost_check_applicable = second_moment_matches_law(inst);
  const VectorXd limit = C.g.array() + cfg.abs_tol + cfg.rel_tol * C.g.array().abs();
  MomentAccumulator surrogate;
  MomentAccumulator actual;

  for (long k = 0; k < cfg.samples; ++k) {
    const VectorXd w = sample_disturbance(G, rng_w);
    const VectorXd xi = sample_disturbance(G, rng_xi);
    const CheckedRollout cl = closed_loop(inst, graphs, d, sys, *result.policy, w, cfg.rollout_tol);
    rep.max_reconstruction_error = std::max(rep.max_reconstruction_error, cl.max_reconstruction_error);
    rep.max_rollout_disagreement = std::max(rep.max_rollout_disagreement, cl.disagreement);

    const VectorXd rows = C.F_x * cl.rollout.x + C.F_u * cl.rollout.u + C.F_w * w;
    SampleRow row;
    row.index = k;
    if (rows.size() > 0) {
      row.max_excess = (rows - C.g).maxCoeff();
      rep.worst_slack = std::min(rep.worst_slack, -row.max_excess);
      if (((rows - limit).array() > 0.0).any()) { ++rep.constraint_violations; }
    }
    if (has_contract) {
      row.membership = check_contract(*result.contract, d.project(cl.rollout.x));
      rep.worst_membership = std::max(rep.worst_membership, row.membership);
      if (row.membership > 1.0 + cfg.membership_tol) { ++rep.contract_violations; }
    }
    row.actual_cost = quadratic_cost(cl.rollout.x, cl.rollout.u, Rx, Ru);
    const Rollout s = surrogate_rollout(*result.variables, w, xi);
    row.surrogate_cost = quadratic_cost(s.x, s.u, Rx, Ru);
    actual.add(row.actual_cost);
    surrogate.add(row.surrogate_cost);
    if (cfg.keep_table) { rep.table.push_back(row); }
  }
  if (C.g.size() == 0) { rep.worst_slack = 0.0; }
  rep.surrogate_cost_mean = surrogate.mean();
  rep.surrogate_cost_se = surrogate.std_error();
  rep.actual_cost_mean = actual.mean();
  rep.actual_cost_se = actual.std_error();
  return rep;
}

inline SimulationReport run(const ProblemInstance& inst, const SynthesisResult& result, const SimulationConfig& cfg)
{
  const InfoDecomposition d = compute_decomposition(inst, build_coupling_graphs(inst));
  return run(inst, d, build_lifted(inst, d), result, cfg);
}

/// Flat per-sample table for external plotting.
inline void write_table(std::ostream& os, const SimulationReport& rep)
{
  os << "sample,max_excess,membership,actual_cost,surrogate_cost\n";
  os.precision(17);
  for (const auto& r : rep.table) {
    os << r.index << ',' << r.max_excess << ',' << r.membership << ',' << r.actual_cost << ',' << r.surrogate_cost
       << '\n';
  }
}

/// Analytic maximizers of row i over W x W: w* = Sigma c1 / sqrt(c1' Sigma c1), likewise xi*.
struct RowMaximizer
{
  VectorXd w;
  VectorXd xi;
  double nominal = 0.0;  // Fx xbar + Fu ubar
  double bound = 0.0;    // nominal + ||G'c1|| + ||G'c2||
};

inline RowMaximizer row_maximizer(const ProblemInstance& inst, const SdpVariables& v, int i)
{
  const auto& C = inst.constraints;
  const MatrixXd& Sigma = inst.disturbance.Sigma;
  const MatrixXd G = sigma_factor(Sigma);
  const VectorXd c1 = (C.F_x.row(i) * v.Pw + C.F_u.row(i) * v.Qw + C.F_w.row(i)).transpose();
  const VectorXd c2 = (C.F_x.row(i) * v.Pxi + C.F_u.row(i) * v.Qxi).transpose();
  auto argmax = [&](const VectorXd& c) -> VectorXd {
    const double n = std::sqrt(c.dot(Sigma * c));
    return n > 0.0 ? VectorXd(Sigma * c / n) : VectorXd::Zero(c.size());
  };
  RowMaximizer m;
  m.w = argmax(c1);
  m.xi = argmax(c2);
  m.nominal = C.F_x.row(i).dot(v.xbar) + C.F_u.row(i).dot(v.ubar);
  m.bound = m.nominal + (G.transpose() * c1).norm() + (G.transpose() * c2).norm();
  return m;
}

/// Row i of F_x xt + F_u ut + F_w w along the surrogate trajectories.
inline double surrogate_row(const ProblemInstance& inst, const SdpVariables& v, int i, const VectorXd& w,
                            const VectorXd& xi)
{
  const auto& C = inst.constraints;
  const Rollout s = surrogate_rollout(v, w, xi);
  return C.F_x.row(i).dot(s.x) + C.F_u.row(i).dot(s.u) + C.F_w.row(i).dot(w);
}

}  // namespace agc
