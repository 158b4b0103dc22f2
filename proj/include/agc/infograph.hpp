#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <numeric>
#include <vector>

#include "agc/block_index.hpp"
#include "agc/model.hpp"

namespace agc {

/// Physical coupling graphs: (j, i) in E_A iff some A_ij(t) != 0; likewise E_B.
struct CouplingGraphs
{
  int subsystems = 0;
  std::vector<Edge> E_A;
  std::vector<Edge> E_B;

  /// V_A^-(i)
  [[nodiscard]] std::vector<int> in_A(int i) const { return in_of(E_A, i); }
  /// V_B^-(i)
  [[nodiscard]] std::vector<int> in_B(int i) const { return in_of(E_B, i); }

private:
  static std::vector<int> in_of(const std::vector<Edge>& edges, int i)
  {
    std::vector<int> out;
    for (const auto& e : edges) {
      if (e.to == i) { out.push_back(e.from); }
    }
    return out;
  }
};

inline CouplingGraphs build_coupling_graphs(const ProblemInstance& inst)
{
  const BlockIndex idx = inst.index();
  const int N = idx.subsystems();
  CouplingGraphs g;
  g.subsystems = N;
  for (int i = 0; i < N; ++i) {
    for (int j = 0; j < N; ++j) {
      bool a = false;
      bool b = false;
      for (int t = 0; t < idx.horizon(); ++t) {
        const auto& A = inst.dynamics.A[t];
        const auto& B = inst.dynamics.B[t];
        a = a || (A.block(idx.state_offset(i), idx.state_offset(j), idx.state_dim(i), idx.state_dim(j)).array() != 0.0).any();
        b = b || (B.block(idx.state_offset(i), idx.input_offset(j), idx.state_dim(i), idx.input_dim(j)).array() != 0.0).any();
      }
      if (a) { g.E_A.push_back({j, i}); }
      if (b) { g.E_B.push_back({j, i}); }
    }
  }
  std::sort(g.E_A.begin(), g.E_A.end());
  std::sort(g.E_B.begin(), g.E_B.end());
  return g;
}

/// Split of each in-neighborhood V_I^-(i) into locally nested N(i) and information-coupling C(i).
struct InfoDecomposition
{
  int subsystems = 0;
  std::vector<std::vector<int>> nested;   // N(i), ascending
  std::vector<std::vector<int>> coupled;  // C(i), ascending
  std::vector<int> coupled_set;           // C = union of C(i), ascending
  std::vector<Edge> E_C;                  // {(j, i) in E_I : j in C(i)}
  int coupled_state_dim = 0;              // n_x^C
  int coupled_traj_dim = 0;               // N_x^C
  std::vector<int> projection;            // rows of Pi_C as positions in x, time-major

  [[nodiscard]] bool is_nested(int i, int j) const
  {
    return std::binary_search(nested[i].begin(), nested[i].end(), j);
  }
  [[nodiscard]] bool is_coupled(int i, int j) const
  {
    return std::binary_search(coupled[i].begin(), coupled[i].end(), j);
  }
  [[nodiscard]] bool in_coupled_set(int j) const
  {
    return std::binary_search(coupled_set.begin(), coupled_set.end(), j);
  }
  /// V_C^+(j): subsystems whose coupled set contains j.
  [[nodiscard]] std::vector<int> out_C(int j) const
  {
    std::vector<int> out;
    for (const auto& e : E_C) {
      if (e.from == j) { out.push_back(e.to); }
    }
    return out;
  }

  /// Pi_C as a dense 0/1 selection matrix (N_x^C x N_x).
  [[nodiscard]] MatrixXd projection_matrix(int Nx) const
  {
    MatrixXd P = MatrixXd::Zero(coupled_traj_dim, Nx);
    for (int r = 0; r < coupled_traj_dim; ++r) { P(r, projection[r]) = 1.0; }
    return P;
  }

  [[nodiscard]] VectorXd project(const VectorXd& x) const
  {
    VectorXd out(coupled_traj_dim);
    for (int r = 0; r < coupled_traj_dim; ++r) { out(r) = x(projection[r]); }
    return out;
  }
};

namespace detail {

inline bool subset(const std::vector<int>& a, const std::vector<int>& b)
{
  return std::includes(b.begin(), b.end(), a.begin(), a.end());
}

}  // namespace detail

/// Applies the local-nesting conditions to every in-neighbor of every subsystem.
inline InfoDecomposition compute_decomposition(const BlockIndex& idx, const InfoGraph& info, const CouplingGraphs& graphs)
{
  const int N = idx.subsystems();
  InfoDecomposition d;
  d.subsystems = N;
  d.nested.resize(N);
  d.coupled.resize(N);

  std::vector<std::vector<int>> in_I(N);
  for (int i = 0; i < N; ++i) { in_I[i] = info.in_neighbors(i); }

  for (int i = 0; i < N; ++i) {
    for (int j : in_I[i]) {
      std::vector<int> a = graphs.in_A(j);
      std::sort(a.begin(), a.end());
      bool ok = detail::subset(a, in_I[i]);
      for (int k : graphs.in_B(j)) {
        if (!ok) { break; }
        ok = detail::subset(in_I[k], in_I[i]);
      }
      (ok ? d.nested[i] : d.coupled[i]).push_back(j);
    }
  }

  for (int i = 0; i < N; ++i) {
    for (int j : d.coupled[i]) {
      d.coupled_set.push_back(j);
      d.E_C.push_back({j, i});
    }
  }
  std::sort(d.coupled_set.begin(), d.coupled_set.end());
  d.coupled_set.erase(std::unique(d.coupled_set.begin(), d.coupled_set.end()), d.coupled_set.end());
  std::sort(d.E_C.begin(), d.E_C.end());

  for (int j : d.coupled_set) { d.coupled_state_dim += idx.state_dim(j); }
  d.coupled_traj_dim = d.coupled_state_dim * (idx.horizon() + 1);
  for (int t = 0; t <= idx.horizon(); ++t) {
    for (int j : d.coupled_set) {
      for (int k = 0; k < idx.state_dim(j); ++k) { d.projection.push_back(idx.state_pos(t, j) + k); }
    }
  }
  return d;
}

inline InfoDecomposition compute_decomposition(const ProblemInstance& inst, const CouplingGraphs& graphs)
{
  return compute_decomposition(inst.index(), inst.info_graph, graphs);
}

/// Partially nested iff no information-coupling states exist.
inline bool is_partially_nested(const InfoDecomposition& d) { return d.coupled_set.empty(); }

/**
 * Block-level zero/free mask over a (time x subsystem) block grid.
 *
 * Block (t, s, i, j) covers rows of subsystem i at time block t and columns of
 * subsystem j at time block s. Scalar sizes come from the per-subsystem row and
 * column dimensions.
 */
class SparsityPattern
{
public:
  SparsityPattern() = default;

  SparsityPattern(int row_times, int col_times, std::vector<int> row_sizes, std::vector<int> col_sizes)
      : row_times_(row_times), col_times_(col_times), row_sizes_(std::move(row_sizes)), col_sizes_(std::move(col_sizes)),
        mask_(static_cast<std::size_t>(row_times_ * col_times_) * row_sizes_.size() * col_sizes_.size(), 0)
  {
    row_offsets_.assign(1, 0);
    col_offsets_.assign(1, 0);
    for (int r : row_sizes_) { row_offsets_.push_back(row_offsets_.back() + r); }
    for (int c : col_sizes_) { col_offsets_.push_back(col_offsets_.back() + c); }
  }

  [[nodiscard]] int row_times() const { return row_times_; }
  [[nodiscard]] int col_times() const { return col_times_; }
  [[nodiscard]] int subsystems() const { return static_cast<int>(row_sizes_.size()); }
  [[nodiscard]] int rows() const { return row_times_ * row_offsets_.back(); }
  [[nodiscard]] int cols() const { return col_times_ * col_offsets_.back(); }

  [[nodiscard]] bool is_free(int t, int s, int i, int j) const { return mask_[flat(t, s, i, j)] != 0; }
  void set_free(int t, int s, int i, int j, bool free = true) { mask_[flat(t, s, i, j)] = free ? 1 : 0; }

  /// Scalar row/column where block (t, i) / (s, j) starts, and its extent.
  [[nodiscard]] int row_start(int t, int i) const { return t * row_offsets_.back() + row_offsets_[i]; }
  [[nodiscard]] int col_start(int s, int j) const { return s * col_offsets_.back() + col_offsets_[j]; }
  [[nodiscard]] int row_size(int i) const { return row_sizes_[i]; }
  [[nodiscard]] int col_size(int j) const { return col_sizes_[j]; }

  [[nodiscard]] int free_blocks() const { return static_cast<int>(std::count(mask_.begin(), mask_.end(), 1)); }
  [[nodiscard]] bool all_zero() const { return free_blocks() == 0; }

  /// Scalar-level mask (true = free entry).
  [[nodiscard]] Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> scalar_mask() const
  {
    Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> m =
      Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(rows(), cols(), false);
    for_each_free([&](int t, int s, int i, int j) {
      m.block(row_start(t, i), col_start(s, j), row_sizes_[i], col_sizes_[j]).setConstant(true);
    });
    return m;
  }

  /// Largest |entry| of X outside the free blocks.
  [[nodiscard]] double max_off_pattern(const MatrixXd& X) const
  {
    const auto m = scalar_mask();
    double worst = 0.0;
    for (Eigen::Index c = 0; c < X.cols(); ++c) {
      for (Eigen::Index r = 0; r < X.rows(); ++r) {
        if (!m(r, c)) { worst = std::max(worst, std::abs(X(r, c))); }
      }
    }
    return worst;
  }

  /// X with every off-pattern entry set to zero.
  [[nodiscard]] MatrixXd project(const MatrixXd& X) const
  {
    return scalar_mask().select(X, MatrixXd::Zero(X.rows(), X.cols()));
  }

  template<typename F>
  void for_each_free(F&& f) const
  {
    const int N = subsystems();
    const int M = static_cast<int>(col_sizes_.size());
    for (int t = 0; t < row_times_; ++t) {
      for (int s = 0; s < col_times_; ++s) {
        for (int i = 0; i < N; ++i) {
          for (int j = 0; j < M; ++j) {
            if (is_free(t, s, i, j)) { f(t, s, i, j); }
          }
        }
      }
    }
  }

private:
  [[nodiscard]] std::size_t flat(int t, int s, int i, int j) const
  {
    const auto N = row_sizes_.size();
    const auto M = col_sizes_.size();
    return ((static_cast<std::size_t>(t) * col_times_ + s) * N + i) * M + j;
  }

  int row_times_ = 0;
  int col_times_ = 0;
  std::vector<int> row_sizes_;
  std::vector<int> col_sizes_;
  std::vector<int> row_offsets_;
  std::vector<int> col_offsets_;
  std::vector<char> mask_;
};

namespace detail {

inline std::vector<int> input_sizes(const BlockIndex& idx)
{
  std::vector<int> out;
  for (const auto& d : idx.dims()) { out.push_back(d.input_dim); }
  return out;
}

inline std::vector<int> state_sizes(const BlockIndex& idx)
{
  std::vector<int> out;
  for (const auto& d : idx.dims()) { out.push_back(d.state_dim); }
  return out;
}

template<typename Pred>
SparsityPattern gain_pattern(const BlockIndex& idx, Pred&& member)
{
  const int T = idx.horizon();
  SparsityPattern p(T, T + 1, input_sizes(idx), state_sizes(idx));
  for (int t = 0; t < T; ++t) {
    for (int s = 0; s <= t; ++s) {
      for (int i = 0; i < idx.subsystems(); ++i) {
        for (int j = 0; j < idx.subsystems(); ++j) {
          if (member(i, j)) { p.set_free(t, s, i, j); }
        }
      }
    }
  }
  return p;
}

}  // namespace detail

/// Q_N: disturbance-feedback gains, block (t, s, i, j) free iff j in N(i) and t >= s.
inline SparsityPattern pattern_QN(const InfoDecomposition& d, const BlockIndex& idx)
{
  return detail::gain_pattern(idx, [&](int i, int j) { return d.is_nested(i, j); });
}

/// Q_C: fictitious-disturbance gains, block (t, s, i, j) free iff j in C(i) and t >= s.
inline SparsityPattern pattern_QC(const InfoDecomposition& d, const BlockIndex& idx)
{
  return detail::gain_pattern(idx, [&](int i, int j) { return d.is_coupled(i, j); });
}

/// Y(G_C): strictly block lower triangular in time, block (i, j) free iff V_C^+(i) is a subset of V_C^+(j).
inline SparsityPattern pattern_Y(const InfoDecomposition& d, const BlockIndex& idx)
{
  const int T = idx.horizon();
  const int N = idx.subsystems();
  SparsityPattern p(T + 1, T + 1, detail::state_sizes(idx), detail::state_sizes(idx));
  std::vector<std::vector<int>> out(N);
  for (int i = 0; i < N; ++i) {
    out[i] = d.out_C(i);
    std::sort(out[i].begin(), out[i].end());
  }
  for (int t = 0; t <= T; ++t) {
    for (int s = 0; s < t; ++s) {
      for (int i = 0; i < N; ++i) {
        for (int j = 0; j < N; ++j) {
          if (detail::subset(out[i], out[j])) { p.set_free(t, s, i, j); }
        }
      }
    }
  }
  return p;
}

}  // namespace agc
