#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <vector>

namespace pomc {

/// Piecewise-constant open-loop control on [0, inf). Segment k covers
/// [breakpoints[k], breakpoints[k+1]); the last segment never ends. Time is
/// measured from the start of the current inter-observation-jump segment.
class PiecewiseConstantControl {
 public:
  PiecewiseConstantControl() : breakpoints_{0.0}, actions_{0} {}

  PiecewiseConstantControl(std::vector<double> breakpoints, std::vector<std::size_t> actions)
      : breakpoints_(std::move(breakpoints)), actions_(std::move(actions)) {
    if (breakpoints_.empty() || breakpoints_.size() != actions_.size())
      throw std::invalid_argument("control needs one action per segment");
    if (breakpoints_.front() != 0.0) throw std::invalid_argument("control breakpoints must start at 0");
    for (std::size_t k = 1; k < breakpoints_.size(); ++k)
      if (!(breakpoints_[k] > breakpoints_[k - 1]) || !std::isfinite(breakpoints_[k]))
        throw std::invalid_argument("control breakpoints must be strictly increasing");
  }

  static PiecewiseConstantControl constant(std::size_t action) { return {{0.0}, {action}}; }

  std::size_t segment_at(double t) const {
    auto it = std::upper_bound(breakpoints_.begin(), breakpoints_.end(), t);
    return it == breakpoints_.begin() ? 0 : static_cast<std::size_t>(it - breakpoints_.begin()) - 1;
  }

  std::size_t action_at(double t) const { return actions_[segment_at(t)]; }

  /// End of segment k; +inf for the last one.
  double segment_end(std::size_t k) const {
    return k + 1 < breakpoints_.size() ? breakpoints_[k + 1] : std::numeric_limits<double>::infinity();
  }

  std::size_t n_segments() const noexcept { return actions_.size(); }
  const std::vector<double>& breakpoints() const noexcept { return breakpoints_; }
  const std::vector<std::size_t>& actions() const noexcept { return actions_; }

  bool operator==(const PiecewiseConstantControl&) const = default;

 private:
  std::vector<double> breakpoints_;
  std::vector<std::size_t> actions_;
};

}  // namespace pomc
