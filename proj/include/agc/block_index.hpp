#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

namespace agc {

/// Local dimensions of one subsystem.
struct SubsystemDims
{
  int state_dim = 1;
  int input_dim = 1;

  friend bool operator==(const SubsystemDims&, const SubsystemDims&) = default;
};

/**
 * Index arithmetic for stacked trajectories.
 *
 * State trajectory     x = (x(0), ..., x(T))         length N_x = n_x (T+1)
 * Input trajectory     u = (u(0), ..., u(T-1))       length N_u = n_u T
 * Disturbance          w = (w(-1), w(0), ..., w(T-1)) length N_x
 *
 * Within a time block, subsystems are stacked in ascending order. Column block
 * s of any matrix acting on w multiplies w(s-1); column block s of a matrix
 * acting on x (or on the fictitious disturbance v) multiplies x(s).
 */
class BlockIndex
{
public:
  BlockIndex() = default;

  BlockIndex(std::vector<SubsystemDims> dims, int horizon) : dims_(std::move(dims)), horizon_(horizon)
  {
    if (horizon_ < 1) { throw std::invalid_argument("horizon must be at least 1"); }
    state_offset_.reserve(dims_.size() + 1);
    input_offset_.reserve(dims_.size() + 1);
    state_offset_.push_back(0);
    input_offset_.push_back(0);
    for (const auto& d : dims_) {
      if (d.state_dim < 1 || d.input_dim < 1) { throw std::invalid_argument("subsystem dimensions must be positive"); }
      state_offset_.push_back(state_offset_.back() + d.state_dim);
      input_offset_.push_back(input_offset_.back() + d.input_dim);
    }
  }

  [[nodiscard]] int subsystems() const { return static_cast<int>(dims_.size()); }
  [[nodiscard]] int horizon() const { return horizon_; }
  [[nodiscard]] const std::vector<SubsystemDims>& dims() const { return dims_; }

  /// n_x, n_u: per-time-step dimensions.
  [[nodiscard]] int nx() const { return state_offset_.back(); }
  [[nodiscard]] int nu() const { return input_offset_.back(); }
  /// N_x, N_u: trajectory dimensions.
  [[nodiscard]] int Nx() const { return nx() * (horizon_ + 1); }
  [[nodiscard]] int Nu() const { return nu() * horizon_; }

  [[nodiscard]] int state_dim(int i) const { return dims_.at(i).state_dim; }
  [[nodiscard]] int input_dim(int i) const { return dims_.at(i).input_dim; }
  /// Offset of subsystem i inside a single time block.
  [[nodiscard]] int state_offset(int i) const { return state_offset_.at(i); }
  [[nodiscard]] int input_offset(int i) const { return input_offset_.at(i); }

  /// Position of x_i(t) (first component) in the state trajectory, t = 0..T.
  [[nodiscard]] int state_pos(int t, int i) const { return t * nx() + state_offset(i); }
  /// Position of u_i(t) in the input trajectory, t = 0..T-1.
  [[nodiscard]] int input_pos(int t, int i) const { return t * nu() + input_offset(i); }
  /// Position of w_i(t) in the disturbance trajectory, t = -1..T-1.
  [[nodiscard]] int disturbance_pos(int t, int i) const { return (t + 1) * nx() + state_offset(i); }

private:
  std::vector<SubsystemDims> dims_;
  int horizon_ = 1;
  std::vector<int> state_offset_;
  std::vector<int> input_offset_;
};

}  // namespace agc
