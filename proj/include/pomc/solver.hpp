#pragma once

// Value function of the filtered problem as the fixed point of a
// discretized one-stage Bellman operator on the simplex grid.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "pomc/belief.hpp"
#include "pomc/control.hpp"
#include "pomc/errors.hpp"
#include "pomc/filter.hpp"
#include "pomc/grid.hpp"
#include "pomc/model.hpp"
#include "pomc/policy.hpp"

namespace pomc {

inline constexpr double kDefaultBellmanStep = 0.02;
inline constexpr double kDefaultTolerance = 1e-6;

/// Semi-Lagrangian discretization of the one-stage operator with step h:
///
///   (Gw)(nu) = min_u  nu.f(u) (1 - e^{-beta h}) / beta
///                   + e^{-beta h} [ e^{-r h} w(Phi_h(nu,u)) + (1 - e^{-r h}) int w dR(nu,u;.) ]
///
/// with r = r(nu,u) frozen over the step, Phi_h one RK4 flow step and w
/// interpolated on the grid. Coefficients are nonnegative and the
/// continuation weights sum to e^{-beta h}, so G is monotone and a
/// contraction with factor e^{-beta h}.
///
/// apply_split() separates the continuation without a jump ("carry") from
/// the post-jump one; iterating it with a fixed post-jump table gives the
/// discrete counterpart of the operator in which w enters only at the next
/// jump (see composed_stage()).
class DiscreteBellman {
 public:
  DiscreteBellman(const ModelSpec& model, std::shared_ptr<const SimplexGrid> grid, double step)
      : model_(&model), grid_(std::move(grid)), step_(step) {
    if (!(step > 0.0)) throw std::invalid_argument("Bellman step must be > 0");
    const double beta = model.beta();
    const double disc = std::exp(-beta * step);
    const double run_weight = -std::expm1(-beta * step) / beta;
    const std::size_t na = model.n_actions();
    entries_.reserve(grid_->n_nodes() * na);

    for (std::size_t node = 0; node < grid_->n_nodes(); ++node) {
      const Belief nu = grid_->node_belief(node);
      FlowStepper stepper(model, nu.face);
      for (std::size_t u = 0; u < na; ++u) {
        Entry e;
        e.running = detail::face_cost(model, nu.face, nu.weights, u) * run_weight;
        const double r = std::max(0.0, jump_rate(model, nu, u));
        const double survive = std::exp(-r * step);

        FlowState st{nu.weights, 0.0, 0.0};
        stepper.step(st, 0.0, step, u);
        if (stepper.clipped()) ++boundary_events_;
        e.carry_begin = terms_.size();
        for (const auto& [k, w] : grid_->stencil(nu.face, st.z).terms) terms_.push_back({k, disc * survive * w});
        e.carry_end = terms_.size();

        e.jump_begin = terms_.size();
        const double jump_weight = disc * (1.0 - survive);
        if (jump_weight > 0.0)
          for (const auto& t : jump_kernel(model, nu, u))
            for (const auto& [k, w] : grid_->stencil(t.target).terms) terms_.push_back({k, jump_weight * t.prob * w});
        e.jump_end = terms_.size();
        entries_.push_back(e);
      }
    }
  }

  const ModelSpec& model() const noexcept { return *model_; }
  const std::shared_ptr<const SimplexGrid>& grid() const noexcept { return grid_; }
  double step() const noexcept { return step_; }
  /// Nodes/actions whose advected point had to be clipped back onto the face.
  std::size_t boundary_events() const noexcept { return boundary_events_; }

  /// Objective of action u at a node.
  double objective(std::size_t node, std::size_t u, std::span<const double> carry,
                   std::span<const double> jump) const {
    const Entry& e = entries_[node * model_->n_actions() + u];
    double s = e.running;
    for (std::size_t k = e.carry_begin; k < e.carry_end; ++k) s += terms_[k].coef * carry[terms_[k].node];
    for (std::size_t k = e.jump_begin; k < e.jump_end; ++k) s += terms_[k].coef * jump[terms_[k].node];
    return s;
  }

  /// One sweep with separate carry and post-jump tables. Ties go to the lowest action index.
  void apply_split(std::span<const double> carry, std::span<const double> jump, std::span<double> out,
                   std::vector<std::size_t>* argmin = nullptr) const {
    const std::size_t na = model_->n_actions();
    if (argmin) argmin->assign(grid_->n_nodes(), 0);
    for (std::size_t node = 0; node < grid_->n_nodes(); ++node) {
      double best = objective(node, 0, carry, jump);
      std::size_t best_u = 0;
      for (std::size_t u = 1; u < na; ++u) {
        const double v = objective(node, u, carry, jump);
        if (v < best) {
          best = v;
          best_u = u;
        }
      }
      out[node] = best;
      if (argmin) (*argmin)[node] = best_u;
    }
  }

  void apply(std::span<const double> w, std::span<double> out, std::vector<std::size_t>* argmin = nullptr) const {
    apply_split(w, w, out, argmin);
  }

 private:
  struct Term {
    std::size_t node;
    double coef;
  };
  struct Entry {
    double running = 0.0;
    std::size_t carry_begin = 0, carry_end = 0, jump_begin = 0, jump_end = 0;
  };

  const ModelSpec* model_;
  std::shared_ptr<const SimplexGrid> grid_;
  double step_;
  std::vector<Entry> entries_;
  std::vector<Term> terms_;
  std::size_t boundary_events_ = 0;
};

/// One application of the discrete operator; metadata.residual holds the sup-norm change.
inline ValueTable bellman_step(const ModelSpec& model, const ValueTable& w, double step = kDefaultBellmanStep) {
  DiscreteBellman op(model, w.grid, step);
  ValueTable out{w.grid, std::vector<double>(w.values.size()), {}};
  op.apply(w.values, out.values);
  out.metadata.iterations = 1;
  out.metadata.residual = sup_distance(out, w);
  out.metadata.boundary_events = op.boundary_events();
  return out;
}

/// Default horizon of composed_stage(): long enough that e^{-beta H} <= 1e-8.
inline double default_stage_horizon(const ModelSpec& model) { return std::log(1e8) / model.beta(); }

/// Discrete counterpart of the operator in which w enters only at the next
/// observation jump: iterates the sweep over `horizon` with carry starting
/// from 0 and post-jump values fixed to w. Its Lipschitz constant is bounded
/// by e^{-beta h}(1 - e^{-C_r h}) / (1 - e^{-(beta + C_r) h}) < C_r / (beta + C_r).
inline std::vector<double> composed_stage(const DiscreteBellman& op, std::span<const double> w, double horizon) {
  const std::size_t steps = steps_for(horizon, op.step());
  std::vector<double> z(w.size(), 0.0), next(w.size(), 0.0);
  for (std::size_t k = 0; k < steps; ++k) {
    op.apply_split(z, w, next);
    z.swap(next);
  }
  return z;
}

/// Largest ratio ||S w1 - S w2|| / ||w1 - w2|| of composed_stage() over the given pairs.
inline double composed_contraction(const DiscreteBellman& op,
                                   std::span<const std::pair<std::vector<double>, std::vector<double>>> pairs,
                                   double horizon) {
  double factor = 0.0;
  for (const auto& [a, b] : pairs) {
    const auto sa = composed_stage(op, a, horizon);
    const auto sb = composed_stage(op, b, horizon);
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
      num = std::max(num, std::abs(sa[k] - sb[k]));
      den = std::max(den, std::abs(a[k] - b[k]));
    }
    if (den > 0.0) factor = std::max(factor, num / den);
  }
  return factor;
}

struct SolveOptions {
  double bellman_step = kDefaultBellmanStep;
  double tol = kDefaultTolerance;
  std::size_t max_iter = 1'000'000;
  /// Constant initial table; 0 when absent.
  std::optional<double> initial_value;
};

/// Iterates the discrete operator to its fixed point. Stops when the
/// sup-norm change d satisfies d <= tol (1 - g) / g with g = e^{-beta h},
/// which bounds the distance to the fixed point by tol. metadata.residual
/// is that a-posteriori bound g d / (1 - g); metadata.step_contraction is
/// the last ratio of successive changes.
inline ValueTable solve_value(const DiscreteBellman& op, const SolveOptions& opt = {}) {
  if (!(opt.tol > 0.0)) throw std::invalid_argument("tolerance must be > 0");
  const ModelSpec& model = op.model();
  const auto& grid = op.grid();
  const double gamma = std::exp(-model.beta() * op.step());
  const double threshold = opt.tol * (1.0 - gamma) / gamma;

  ValueTable v = ValueTable::constant(grid, opt.initial_value.value_or(0.0));
  std::vector<double> next(v.values.size());
  std::vector<double> history;
  double prev_change = std::numeric_limits<double>::infinity();
  double ratio = 0.0;
  bool converged = false;
  std::size_t it = 0;
  while (it < opt.max_iter) {
    op.apply(v.values, next);
    ++it;
    double change = 0.0;
    for (std::size_t k = 0; k < next.size(); ++k) change = std::max(change, std::abs(next[k] - v.values[k]));
    v.values.swap(next);
    history.push_back(change);
    if (std::isfinite(prev_change) && prev_change > 0.0) ratio = change / prev_change;
    prev_change = change;
    if (change <= threshold) {
      converged = true;
      break;
    }
  }
  if (!converged)
    throw NonConvergenceError("value iteration did not converge in " + std::to_string(opt.max_iter) + " iterations",
                              std::move(history));

  v.metadata.iterations = it;
  v.metadata.residual = history.empty() ? 0.0 : gamma * history.back() / (1.0 - gamma);
  v.metadata.step_contraction = ratio;
  v.metadata.boundary_events = op.boundary_events();
  v.metadata.history = std::move(history);

  // Contraction of the jump-to-jump operator, probed at the solution with a
  // constant shift and against the zero table.
  const double shift = std::max(1.0, model.cost_bound() / model.beta());
  std::vector<std::pair<std::vector<double>, std::vector<double>>> pairs;
  std::vector<double> shifted = v.values;
  for (auto& x : shifted) x += shift;
  pairs.emplace_back(v.values, shifted);
  pairs.emplace_back(v.values, std::vector<double>(v.values.size(), 0.0));
  v.metadata.contraction_estimate = composed_contraction(op, pairs, default_stage_horizon(model));
  return v;
}

inline ValueTable solve_value(const ModelSpec& model, std::shared_ptr<const SimplexGrid> grid,
                              const SolveOptions& opt = {}) {
  DiscreteBellman op(model, std::move(grid), opt.bellman_step);
  return solve_value(op, opt);
}

/// Per-node argmin of the discrete operator at v (ties to the lowest action index).
inline FeedbackPolicy extract_policy(const DiscreteBellman& op, const ValueTable& v, double dwell = kDefaultDwell) {
  FeedbackPolicy p{op.grid(), {}, dwell};
  std::vector<double> scratch(v.values.size());
  op.apply(v.values, scratch, &p.actions);
  return p;
}

inline FeedbackPolicy extract_policy(const ModelSpec& model, const ValueTable& v,
                                     double bellman_step = kDefaultBellmanStep, double dwell = kDefaultDwell) {
  DiscreteBellman op(model, v.grid, bellman_step);
  return extract_policy(op, v, dwell);
}

/// V(mu) = sum_a mu(h^{-1}(a)) v(H_a[mu]).
inline double assemble_V(const ModelSpec& model, const ValueTable& v, const InitialLaw& mu) {
  validate_initial_law(model, mu);
  double total = 0.0;
  for (std::size_t a = 0; a < model.n_observations(); ++a) {
    double mass = 0.0;
    for (std::size_t i : model.face(a)) mass += mu.mu[i];
    if (mass == 0.0) continue;
    total += mass * v.interpolate(h_jump(model, mu.mu, a));
  }
  return total;
}

// ---------------------------------------------------------------------------
// Stage evaluation along the true flow
// ---------------------------------------------------------------------------

struct StageValue {
  double running = 0.0;
  double carry = 0.0;
};

/// running = int_0^T e^{-beta t} chi(t) [phi(t).f(u) + r(phi,u) int w dR(phi,u;.)] dt
/// (composite Simpson on the flow grid, 3/8 rule for an odd tail),
/// carry = e^{-beta T} chi(T) w(phi(T)).
inline StageValue evaluate_stage(const ModelSpec& model, const Belief& nu, const PiecewiseConstantControl& alpha,
                                 const ValueTable& w, double horizon, double h = 1e-3) {
  const FlowResult flow = integrate_flow(model, nu, alpha, horizon, h);
  const double beta = model.beta();
  const std::size_t count = flow.times.size();

  // A sample at a control breakpoint is shared by both neighbouring
  // segments and evaluated once with each segment's action.
  auto lagrangian = [&](std::size_t k, std::size_t u) {
    const Belief b = flow.belief(k);
    const double r = std::max(0.0, jump_rate(model, b, u));
    const double jump = r > 0.0 ? r * expected_post_jump(model, b, u, w) : 0.0;
    return std::exp(-beta * flow.times[k]) * flow.survival[k] * (detail::face_cost(model, b.face, b.weights, u) + jump);
  };

  StageValue out;
  std::size_t start = 0;
  for (std::size_t seg = 0; seg < alpha.n_segments(); ++seg) {
    const double s0 = alpha.breakpoints()[seg];
    if (s0 >= horizon) break;
    const double s1 = std::min(alpha.segment_end(seg), horizon);
    const std::size_t m = steps_for(s1 - s0, h);
    const std::size_t u = alpha.actions()[seg];
    const double dt = (s1 - s0) / static_cast<double>(m);
    std::vector<double> y(m + 1);
    for (std::size_t k = 0; k <= m; ++k) y[k] = lagrangian(start + k, u);
    double s = 0.0;
    if (m == 1) {
      s = 0.5 * dt * (y[0] + y[1]);
    } else {
      const std::size_t simpson_end = (m % 2 == 0) ? m : m - 3;
      for (std::size_t k = 0; k + 2 <= simpson_end; k += 2) s += dt / 3.0 * (y[k] + 4.0 * y[k + 1] + y[k + 2]);
      if (simpson_end != m) {
        const std::size_t k = simpson_end;
        s += 3.0 * dt / 8.0 * (y[k] + 3.0 * y[k + 1] + 3.0 * y[k + 2] + y[k + 3]);
      }
    }
    out.running += s;
    start += m;
  }
  const std::size_t last = count - 1;
  out.carry = std::exp(-beta * flow.times[last]) * flow.survival[last] * w.interpolate(flow.belief(last));
  return out;
}

struct DppReport {
  double horizon = 0.0;
  std::vector<double> mismatch;
  std::vector<bool> interior;
  double max_interior = 0.0;
  double max_all = 0.0;
};

/// |v(nu) - min_u {running + carry}| over constant actions, at every node.
inline DppReport check_dpp(const ModelSpec& model, const ValueTable& v, double horizon, double h = 1e-3) {
  DppReport rep;
  rep.horizon = horizon;
  const auto& grid = *v.grid;
  for (std::size_t node = 0; node < grid.n_nodes(); ++node) {
    const Belief nu = grid.node_belief(node);
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t u = 0; u < model.n_actions(); ++u) {
      const auto sv = evaluate_stage(model, nu, PiecewiseConstantControl::constant(u), v, horizon, h);
      best = std::min(best, sv.running + sv.carry);
    }
    const double mm = std::abs(v.values[node] - best);
    rep.mismatch.push_back(mm);
    rep.interior.push_back(grid.is_interior(node));
    rep.max_all = std::max(rep.max_all, mm);
    if (grid.is_interior(node)) rep.max_interior = std::max(rep.max_interior, mm);
  }
  return rep;
}

/// Sup over the coarse nodes of |coarse - fine| (fine interpolated at coarse nodes).
inline double refinement_delta(const ValueTable& coarse, const ValueTable& fine) {
  double d = 0.0;
  for (std::size_t node = 0; node < coarse.grid->n_nodes(); ++node)
    d = std::max(d, std::abs(coarse.values[node] - fine.interpolate(coarse.grid->node_belief(node))));
  return d;
}

}  // namespace pomc
