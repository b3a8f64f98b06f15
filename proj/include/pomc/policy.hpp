#pragma once

#include <cstddef>
#include <memory>
#include <stdexcept>
#include <variant>
#include <vector>

#include "pomc/belief.hpp"
#include "pomc/control.hpp"
#include "pomc/grid.hpp"

namespace pomc {

/// Default dwell between feedback refreshes.
inline constexpr double kDefaultDwell = 0.01;

/// Stationary belief feedback: one action per grid node. Executed as a
/// piecewise-constant control refreshed every `dwell` time units from the
/// start of each inter-jump segment, using the belief at the refresh time.
struct FeedbackPolicy {
  std::shared_ptr<const SimplexGrid> grid;
  std::vector<std::size_t> actions;
  double dwell = kDefaultDwell;

  std::size_t action_at(const Belief& b) const { return actions[grid->nearest_node(b)]; }
};

/// Either a fixed open-loop control (restarted after every observation jump)
/// or a belief feedback.
using Policy = std::variant<PiecewiseConstantControl, FeedbackPolicy>;

inline void validate_policy(const ModelSpec& model, const Policy& policy) {
  if (const auto* c = std::get_if<PiecewiseConstantControl>(&policy)) {
    for (std::size_t u : c->actions())
      if (u >= model.n_actions()) throw std::invalid_argument("control refers to an unknown action");
  } else {
    const auto& f = std::get<FeedbackPolicy>(policy);
    if (!f.grid || f.actions.size() != f.grid->n_nodes())
      throw std::invalid_argument("feedback policy needs one action per grid node");
    if (!(f.dwell > 0.0)) throw std::invalid_argument("feedback dwell must be > 0");
    for (std::size_t u : f.actions)
      if (u >= model.n_actions()) throw std::invalid_argument("feedback policy refers to an unknown action");
  }
}

}  // namespace pomc
