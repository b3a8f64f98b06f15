#pragma once

// Monte Carlo for the controlled chain and for the belief PDP, plus the
// statistics that compare the two.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "pomc/belief.hpp"
#include "pomc/control.hpp"
#include "pomc/errors.hpp"
#include "pomc/filter.hpp"
#include "pomc/model.hpp"
#include "pomc/parallel.hpp"
#include "pomc/policy.hpp"
#include "pomc/stats.hpp"

namespace pomc {

/// Jump budget per trajectory before the explosion guard fires.
inline constexpr std::size_t kMaxJumps = 1'000'000;

struct SimulationOptions {
  /// RK4 step for filter and PDP flows.
  double flow_step = 1e-3;
  std::size_t max_jumps = kMaxJumps;
  /// Worker count for replicate loops (0 = default_thread_count()).
  std::size_t threads = 0;
};

/// Smallest T with C_f e^{-beta T} / beta <= tail.
inline double default_horizon(const ModelSpec& model, double tail = 1e-4) {
  const double cf = model.cost_bound();
  if (cf == 0.0) return 1.0;
  return std::max(1.0, std::log(cf / (model.beta() * tail)) / model.beta());
}

/// Upper bound on |cost beyond T|.
inline double truncation_tail(const ModelSpec& model, double horizon) {
  return model.cost_bound() * std::exp(-model.beta() * horizon) / model.beta();
}

struct MarkedPoint {
  double time = 0.0;
  std::size_t mark = 0;

  bool operator==(const MarkedPoint&) const = default;
};

/// One chain path on [0, T]. Entry 0 of x_jumps and y_jumps is the time-0
/// state and observation, so y_jumps can be fed to replay_filter directly.
struct ChainTrajectory {
  std::vector<MarkedPoint> x_jumps;
  std::vector<MarkedPoint> y_jumps;
  /// Realized open-loop control of each inter-observation-jump segment.
  std::vector<PiecewiseConstantControl> segment_controls;
  double discounted_cost = 0.0;
  double horizon = 0.0;

  std::vector<ObservationEvent> observation_path() const {
    std::vector<ObservationEvent> out;
    for (const auto& p : y_jumps) out.push_back({p.time, p.mark});
    return out;
  }
};

struct PdpJump {
  double time = 0.0;
  Belief belief;
};

/// One PDP path: the jump chain starting with (0, nu), the stage cost of
/// each stage truncated at the horizon, and sum_n e^{-beta tau_n} g_n.
struct PdpTrajectory {
  std::vector<PdpJump> jump_chain;
  std::vector<double> stage_costs;
  double discounted_sum = 0.0;
  double horizon = 0.0;
};

namespace detail {

/// Draws an index with probability proportional to mu restricted to states.
inline std::size_t sample_state(ReplicateRng& rng, std::span<const double> mu) {
  double total = 0.0;
  for (double p : mu) total += p;
  return rng.categorical(mu, total);
}

/// Executes a policy inside one inter-observation-jump segment of the
/// chain, tracking the filter only when the policy needs it.
class ChainController {
 public:
  ChainController(const ModelSpec& model, const Policy& policy, double h)
      : model_(&model), policy_(&policy), h_(h) {}

  void begin(const Belief& b) {
    k_ = 0;
    breaks_.clear();
    acts_.clear();
    if (const auto* c = std::get_if<PiecewiseConstantControl>(policy_)) {
      fixed_segment_ = 0;
      u_ = c->actions()[0];
    } else {
      snap_ = b;
      u_ = std::get<FeedbackPolicy>(*policy_).action_at(snap_);
      breaks_.push_back(0.0);
      acts_.push_back(u_);
    }
  }

  std::size_t action() const { return u_; }

  /// Segment-relative time of the next action refresh.
  double next_switch() const {
    if (const auto* c = std::get_if<PiecewiseConstantControl>(policy_)) return c->segment_end(fixed_segment_);
    return static_cast<double>(k_ + 1) * std::get<FeedbackPolicy>(*policy_).dwell;
  }

  void advance() {
    if (const auto* c = std::get_if<PiecewiseConstantControl>(policy_)) {
      ++fixed_segment_;
      u_ = c->actions()[fixed_segment_];
      return;
    }
    const auto& fb = std::get<FeedbackPolicy>(*policy_);
    snap_ = belief_at(next_switch());
    ++k_;
    u_ = fb.action_at(snap_);
    breaks_.push_back(static_cast<double>(k_) * fb.dwell);
    acts_.push_back(u_);
  }

  /// Filter at segment-relative time s within the current dwell.
  Belief belief_at(double s) const {
    const double s0 = static_cast<double>(k_) * std::get<FeedbackPolicy>(*policy_).dwell;
    FlowStepper stepper(*model_, snap_.face);
    FlowState st{snap_.weights, 0.0, 0.0};
    const std::size_t m = steps_for(s - s0, h_);
    const double dt = m ? (s - s0) / static_cast<double>(m) : 0.0;
    for (std::size_t k = 0; k < m; ++k) stepper.step(st, 0.0, dt, u_);
    return {snap_.face, std::move(st.z)};
  }

  bool tracks_belief() const { return std::holds_alternative<FeedbackPolicy>(*policy_); }

  PiecewiseConstantControl realized() const {
    if (const auto* c = std::get_if<PiecewiseConstantControl>(policy_)) return *c;
    return {breaks_, acts_};
  }

 private:
  const ModelSpec* model_;
  const Policy* policy_;
  double h_;
  std::size_t fixed_segment_ = 0;
  std::size_t k_ = 0;
  std::size_t u_ = 0;
  Belief snap_;
  std::vector<double> breaks_;
  std::vector<std::size_t> acts_;
};

}  // namespace detail

/// Simulates X on [0, T] with exact exponential holding times, recording
/// X-jumps, Y-jumps and the discounted cost accrued in closed form per
/// constant piece.
inline ChainTrajectory simulate_chain(const ModelSpec& model, const InitialLaw& mu, const Policy& policy,
                                      double horizon, ReplicateRng& rng, const SimulationOptions& opt = {}) {
  if (!(horizon > 0.0)) throw std::invalid_argument("horizon must be > 0");
  const double beta = model.beta();
  ChainTrajectory traj;
  traj.horizon = horizon;

  std::size_t x = detail::sample_state(rng, mu.mu);
  std::size_t face = model.observation_of(x);
  traj.x_jumps.push_back({0.0, x});
  traj.y_jumps.push_back({0.0, face});

  detail::ChainController ctl(model, policy, opt.flow_step);
  ctl.begin(ctl.tracks_belief() ? h_jump(model, mu.mu, face) : Belief{});

  double t = 0.0, seg_start = 0.0, cost = 0.0;
  std::vector<double> row(model.n_states());
  while (t < horizon) {
    const std::size_t u = ctl.action();
    const double piece_end = std::min(seg_start + ctl.next_switch(), horizon);
    const double rate = model.exit_rate(u, x);
    const double hold = rate > 0.0 ? rng.exponential(rate) : std::numeric_limits<double>::infinity();
    if (t + hold < piece_end) {
      const double tj = t + hold;
      cost += model.cost(u, x) * detail::discounted_integral(beta, t, tj);
      for (std::size_t j = 0; j < row.size(); ++j) row[j] = j == x ? 0.0 : model.rate(u, x, j);
      const std::size_t next = rng.categorical(row, rate);
      traj.x_jumps.push_back({tj, next});
      if (traj.x_jumps.size() > opt.max_jumps)
        throw ExplosionError("more than " + std::to_string(opt.max_jumps) + " jumps before the horizon");
      const std::size_t next_face = model.observation_of(next);
      if (next_face != face) {
        Belief post;
        if (ctl.tracks_belief()) {
          const Belief pre = ctl.belief_at(tj - seg_start);
          post = h_jump(model, left_multiply(model, pre.weights, u), next_face);
        }
        traj.segment_controls.push_back(ctl.realized());
        face = next_face;
        seg_start = tj;
        traj.y_jumps.push_back({tj, face});
        ctl.begin(post);
      }
      x = next;
      t = tj;
    } else {
      cost += model.cost(u, x) * detail::discounted_integral(beta, t, piece_end);
      t = piece_end;
      if (t >= horizon) break;
      ctl.advance();
    }
  }
  traj.segment_controls.push_back(ctl.realized());
  traj.discounted_cost = cost;
  return traj;
}

inline ChainTrajectory simulate_chain(const ModelSpec& model, const InitialLaw& mu, const Policy& policy,
                                      double horizon, std::uint64_t seed, const SimulationOptions& opt = {}) {
  ReplicateRng rng(seed, 0);
  return simulate_chain(model, mu, policy, horizon, rng, opt);
}

namespace detail {

/// Lazily integrated flow, hazard and running cost of one PDP stage started
/// at a fixed belief. Knot i is the state at time s_i; piece i advances
/// knot i under one action, either by one RK4 step or, at a rest point of
/// the flow, in closed form (possibly over an unbounded interval).
class StageTrack {
 public:
  StageTrack(const ModelSpec& model, const Policy& policy, const Belief& start, double h)
      : model_(&model), policy_(&policy), h_(h), face_(start.face), n_(model.n_states()), stepper_(model, start.face) {
    knots_.push_back({0.0, 0.0, 0.0});
    z_.insert(z_.end(), start.weights.begin(), start.weights.end());
  }

  /// Stage cost over [0, L].
  double cost_until(double L) {
    while (knots_.back().s < L && extend()) {
    }
    const std::size_t i = knot_at(L);
    if (knots_[i].s == L || i >= pieces_.size()) return knots_[i].C;
    return partial(i, L - knots_[i].s).cost;
  }

  /// First time s <= limit at which the hazard reaches E. On success also
  /// returns the pre-jump belief and the action in force.
  bool sojourn(double E, double limit, double& s, std::vector<double>& z_pre, std::size_t& u_pre) {
    while (knots_.back().H < E && knots_.back().s < limit && extend()) {
    }
    auto it = std::find_if(knots_.begin(), knots_.end(), [&](const Knot& k) { return k.H >= E; });
    std::size_t i;
    double tau;
    if (it == knots_.begin()) {
      s = 0.0;
      z_pre.assign(z_.begin(), z_.begin() + static_cast<std::ptrdiff_t>(n_));
      u_pre = pieces_.empty() ? first_action() : pieces_[0].u;
      return true;
    }
    if (it == knots_.end()) {
      i = knots_.size() - 1;
      if (i >= pieces_.size() || !pieces_[i].stationary) return false;  // horizon reached first
    } else {
      i = static_cast<std::size_t>(it - knots_.begin()) - 1;
    }
    const Knot& k = knots_[i];
    const Piece& p = pieces_[i];
    if (p.stationary) {
      const double r = std::max(0.0, rate_on_face(*model_, face_, zview(i), p.u));
      if (!(r > 0.0)) return false;
      tau = (E - k.H) / r;
      s = k.s + tau;
      if (s > limit) return false;
      z_pre.assign(zview(i).begin(), zview(i).end());
    } else {
      double lo = 0.0, hi = p.dt;
      while (hi - lo > 1e-9) {
        const double mid = 0.5 * (lo + hi);
        (partial(i, mid).hazard < E ? lo : hi) = mid;
      }
      tau = hi;
      s = k.s + tau;
      if (s > limit) return false;
      z_pre = partial(i, tau).z;
    }
    u_pre = p.u;
    return true;
  }

 private:
  struct Knot {
    double s, H, C;
  };
  struct Piece {
    std::size_t u;
    double dt;
    bool stationary;
  };

  std::span<const double> zview(std::size_t i) const { return {z_.data() + i * n_, n_}; }

  std::size_t knot_at(double s) const {
    auto it = std::upper_bound(knots_.begin(), knots_.end(), s, [](double v, const Knot& k) { return v < k.s; });
    return static_cast<std::size_t>(it - knots_.begin()) - 1;
  }

  std::size_t first_action() const {
    if (const auto* c = std::get_if<PiecewiseConstantControl>(policy_)) return c->actions()[0];
    return std::get<FeedbackPolicy>(*policy_).action_at(Belief{face_, {z_.begin(), z_.begin() + static_cast<std::ptrdiff_t>(n_)}});
  }

  FlowState partial(std::size_t i, double tau) {
    FlowState st{{zview(i).begin(), zview(i).end()}, knots_[i].H, knots_[i].C};
    if (pieces_[i].stationary)
      stepper_.step_stationary(st, knots_[i].s, tau, pieces_[i].u);
    else
      stepper_.step(st, knots_[i].s, tau, pieces_[i].u);
    return st;
  }

  /// Opens the next control segment at the last knot.
  void open_segment() {
    const double s0 = knots_.back().s;
    double s1;
    if (const auto* c = std::get_if<PiecewiseConstantControl>(policy_)) {
      seg_u_ = c->actions()[seg_];
      s1 = c->segment_end(seg_);
    } else {
      const auto& fb = std::get<FeedbackPolicy>(*policy_);
      seg_u_ = fb.action_at(Belief{face_, {zview(knots_.size() - 1).begin(), zview(knots_.size() - 1).end()}});
      s1 = static_cast<double>(seg_ + 1) * fb.dwell;
    }
    ++seg_;
    seg_end_ = s1;
    seg_stationary_ = stepper_.stationary(zview(knots_.size() - 1), seg_u_);
    if (seg_stationary_) {
      seg_steps_ = 1;
      seg_dt_ = s1 - s0;
    } else if (std::isinf(s1)) {
      seg_steps_ = std::numeric_limits<std::size_t>::max();
      seg_dt_ = h_;
    } else {
      seg_steps_ = steps_for(s1 - s0, h_);
      seg_dt_ = (s1 - s0) / static_cast<double>(seg_steps_);
    }
    seg_start_ = s0;
    seg_done_ = 0;
  }

  /// Appends one piece. Returns false once the track ends in an unbounded
  /// stationary piece.
  bool extend() {
    if (terminal_) return false;
    if (seg_done_ == seg_steps_) open_segment();
    const std::size_t i = knots_.size() - 1;
    pieces_.push_back({seg_u_, seg_dt_, seg_stationary_});
    if (seg_stationary_ && std::isinf(seg_dt_)) {
      terminal_ = true;
      return false;
    }
    FlowState st{{zview(i).begin(), zview(i).end()}, knots_[i].H, knots_[i].C};
    if (seg_stationary_) {
      stepper_.step_stationary(st, knots_[i].s, seg_dt_, seg_u_);
    } else {
      drift_ += stepper_.step(st, knots_[i].s, seg_dt_, seg_u_);
    }
    ++seg_done_;
    const double s = seg_done_ == seg_steps_ ? seg_end_ : seg_start_ + seg_dt_ * static_cast<double>(seg_done_);
    knots_.push_back({s, st.hazard, st.cost});
    z_.insert(z_.end(), st.z.begin(), st.z.end());
    if (s > 1.0 && drift_ / s > kMaxDriftRate)
      throw FlowAccuracyError("PDP flow renormalization drift exceeds tolerance; use a smaller step");
    return true;
  }

  const ModelSpec* model_;
  const Policy* policy_;
  double h_;
  std::size_t face_;
  std::size_t n_;
  FlowStepper stepper_;
  std::vector<Knot> knots_;
  std::vector<double> z_;
  std::vector<Piece> pieces_;
  std::size_t seg_ = 0, seg_u_ = 0, seg_steps_ = 0, seg_done_ = 0;
  double seg_start_ = 0.0, seg_end_ = 0.0, seg_dt_ = 0.0, drift_ = 0.0;
  bool seg_stationary_ = false, terminal_ = false;
};

}  // namespace detail

/// Stage tracks keyed by their exact starting belief. Post-jump beliefs
/// often repeat (every jump into a one-point face lands on the same
/// vertex), so stages are integrated once per worker. Not thread-safe.
class StageCache {
 public:
  StageCache(const ModelSpec& model, const Policy& policy, double h, std::size_t capacity = 64)
      : model_(&model), policy_(&policy), h_(h), capacity_(capacity) {}

  detail::StageTrack& get(const Belief& b) {
    auto key = std::make_pair(b.face, b.weights);
    auto it = tracks_.find(key);
    if (it != tracks_.end()) return *it->second;
    if (tracks_.size() >= capacity_) tracks_.clear();
    auto track = std::make_unique<detail::StageTrack>(*model_, *policy_, b, h_);
    return *tracks_.emplace(std::move(key), std::move(track)).first->second;
  }

  bool compatible(const ModelSpec& model, const Policy& policy, double h) const {
    return &model == model_ && &policy == policy_ && h == h_;
  }

 private:
  const ModelSpec* model_;
  const Policy* policy_;
  double h_;
  std::size_t capacity_;
  std::map<std::pair<std::size_t, std::vector<double>>, std::unique_ptr<detail::StageTrack>> tracks_;
};

/// Simulates the belief PDP from nu on [0, T]: sojourns by inverting the
/// survival function, post-jump beliefs from the jump kernel, and stage
/// costs integrated along the flow up to the remaining horizon.
inline PdpTrajectory simulate_pdp(const ModelSpec& model, const Belief& nu, const Policy& policy, double horizon,
                                  ReplicateRng& rng, const SimulationOptions& opt = {}, StageCache* cache = nullptr) {
  if (!(horizon > 0.0)) throw std::invalid_argument("horizon must be > 0");
  if (!is_valid_belief(model, nu)) throw std::invalid_argument("initial belief is not on its face");
  std::optional<StageCache> local;
  if (!cache || !cache->compatible(model, policy, opt.flow_step)) {
    local.emplace(model, policy, opt.flow_step);
    cache = &*local;
  }
  PdpTrajectory traj;
  traj.horizon = horizon;
  Belief b = nu;
  double tau = 0.0;
  std::vector<double> z_pre;
  while (true) {
    auto& track = cache->get(b);
    const double remaining = horizon - tau;
    const double g = track.cost_until(remaining);
    traj.jump_chain.push_back({tau, b});
    traj.stage_costs.push_back(g);
    traj.discounted_sum += std::exp(-model.beta() * tau) * g;

    const double E = rng.exponential(1.0);
    double s = 0.0;
    std::size_t u = 0;
    if (!track.sojourn(E, remaining, s, z_pre, u)) break;
    if (traj.jump_chain.size() >= opt.max_jumps)
      throw ExplosionError("more than " + std::to_string(opt.max_jumps) + " jumps before the horizon");
    const auto targets = jump_kernel(model, Belief{b.face, z_pre}, u);
    std::vector<double> probs;
    for (const auto& t : targets) probs.push_back(t.prob);
    b = targets[rng.categorical(probs, 1.0)].target;
    tau += s;
    if (tau >= horizon) break;
  }
  return traj;
}

inline PdpTrajectory simulate_pdp(const ModelSpec& model, const Belief& nu, const Policy& policy, double horizon,
                                  std::uint64_t seed, const SimulationOptions& opt = {}) {
  ReplicateRng rng(seed, 0);
  return simulate_pdp(model, nu, policy, horizon, rng, opt);
}

// ---------------------------------------------------------------------------
// Replicate statistics
// ---------------------------------------------------------------------------

struct CostEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  double ci95_low = 0.0;
  double ci95_high = 0.0;
  /// C_f e^{-beta T} / beta, the bound on the truncated tail.
  double tail_bound = 0.0;
  std::size_t replicates = 0;
  double horizon = 0.0;
};

namespace detail {

inline void mean_and_se(const std::vector<double>& xs, double& mean, double& se) {
  const double n = static_cast<double>(xs.size());
  mean = pairwise_sum(xs) / n;
  std::vector<double> sq(xs.size());
  for (std::size_t k = 0; k < xs.size(); ++k) sq[k] = (xs[k] - mean) * (xs[k] - mean);
  se = xs.size() > 1 ? std::sqrt(pairwise_sum(sq) / (n - 1.0) / n) : 0.0;
}

inline std::size_t worker_count(const SimulationOptions& opt) {
  return opt.threads ? opt.threads : default_thread_count();
}

}  // namespace detail

/// Mean discounted cost of N chain replicates; replicate k uses the
/// stream (seed, k).
inline CostEstimate estimate_cost(const ModelSpec& model, const InitialLaw& mu, const Policy& policy,
                                  std::size_t replicates, double horizon, std::uint64_t seed,
                                  const SimulationOptions& opt = {}) {
  if (replicates < 2) throw std::invalid_argument("at least two replicates are required");
  validate_initial_law(model, mu);
  validate_policy(model, policy);
  std::vector<double> costs(replicates);
  parallel_for(replicates, detail::worker_count(opt), [&](std::size_t k) {
    ReplicateRng rng(seed, k);
    costs[k] = simulate_chain(model, mu, policy, horizon, rng, opt).discounted_cost;
  });
  CostEstimate est;
  detail::mean_and_se(costs, est.mean, est.std_error);
  est.ci95_low = est.mean - 1.959963984540054 * est.std_error;
  est.ci95_high = est.mean + 1.959963984540054 * est.std_error;
  est.tail_bound = truncation_tail(model, horizon);
  est.replicates = replicates;
  est.horizon = horizon;
  return est;
}

/// The initial law Q of the PDP: mass mu(h^{-1}(a)) at H_a[mu].
inline std::vector<std::pair<Belief, double>> pdp_initial_law(const ModelSpec& model, const InitialLaw& mu) {
  std::vector<std::pair<Belief, double>> out;
  for (std::size_t a = 0; a < model.n_observations(); ++a) {
    double mass = 0.0;
    for (std::size_t i : model.face(a)) mass += mu.mu[i];
    if (mass > 0.0) out.emplace_back(h_jump(model, mu.mu, a), mass);
  }
  return out;
}

struct LawComparison {
  double ks_tau1 = 0.0;
  double ks_tau1_pvalue = 1.0;
  double face_chi2 = 0.0;
  double face_chi2_pvalue = 1.0;
  std::size_t face_chi2_dof = 0;
  double mean_cost_delta = 0.0;
  double pooled_se = 0.0;
  double chain_mean = 0.0;
  double pdp_mean = 0.0;
  std::size_t replicates = 0;
  double horizon = 0.0;
  /// First post-jump face counts; the last category is "no jump before T".
  std::vector<double> chain_face_counts;
  std::vector<double> pdp_face_counts;
};

/// Compares the chain-side and PDP-side laws of (tau_1, first post-jump
/// face) and the two mean discounted costs. Chain replicate k uses stream
/// (seed, 2k); PDP replicate k uses (seed, 2k+1).
inline LawComparison compare_laws(const ModelSpec& model, const InitialLaw& mu, const Policy& policy,
                                  std::size_t replicates, double horizon, std::uint64_t seed,
                                  const SimulationOptions& opt = {}) {
  if (replicates < 2) throw std::invalid_argument("at least two replicates are required");
  validate_initial_law(model, mu);
  validate_policy(model, policy);
  const std::size_t m = model.n_observations();
  const double inf = std::numeric_limits<double>::infinity();
  const auto q = pdp_initial_law(model, mu);
  std::vector<double> q_mass;
  for (const auto& e : q) q_mass.push_back(e.second);

  std::vector<double> tau_c(replicates), tau_p(replicates), cost_c(replicates), cost_p(replicates);
  std::vector<std::size_t> face_c(replicates), face_p(replicates);

  const std::size_t workers = detail::worker_count(opt);
  const std::size_t chunk = (replicates + workers - 1) / workers;
  parallel_for(workers, workers, [&](std::size_t w) {
    StageCache cache(model, policy, opt.flow_step);
    for (std::size_t k = w * chunk; k < std::min(replicates, (w + 1) * chunk); ++k) {
      ReplicateRng rc(seed, 2 * k);
      const auto ct = simulate_chain(model, mu, policy, horizon, rc, opt);
      cost_c[k] = ct.discounted_cost;
      tau_c[k] = ct.y_jumps.size() > 1 ? ct.y_jumps[1].time : inf;
      face_c[k] = ct.y_jumps.size() > 1 ? ct.y_jumps[1].mark : m;

      ReplicateRng rp(seed, 2 * k + 1);
      double total = 0.0;
      for (double v : q_mass) total += v;
      const Belief& nu = q[rp.categorical(q_mass, total)].first;
      const auto pt = simulate_pdp(model, nu, policy, horizon, rp, opt, &cache);
      cost_p[k] = pt.discounted_sum;
      tau_p[k] = pt.jump_chain.size() > 1 ? pt.jump_chain[1].time : inf;
      face_p[k] = pt.jump_chain.size() > 1 ? pt.jump_chain[1].belief.face : m;
    }
  });

  LawComparison rep;
  rep.replicates = replicates;
  rep.horizon = horizon;
  const auto ks = stats::ks_two_sample(tau_c, tau_p);
  rep.ks_tau1 = ks.statistic;
  rep.ks_tau1_pvalue = ks.p_value;
  rep.chain_face_counts.assign(m + 1, 0.0);
  rep.pdp_face_counts.assign(m + 1, 0.0);
  for (std::size_t k = 0; k < replicates; ++k) {
    rep.chain_face_counts[face_c[k]] += 1.0;
    rep.pdp_face_counts[face_p[k]] += 1.0;
  }
  const auto chi = stats::chi_square_homogeneity(rep.chain_face_counts, rep.pdp_face_counts);
  rep.face_chi2 = chi.statistic;
  rep.face_chi2_pvalue = chi.p_value;
  rep.face_chi2_dof = chi.dof;
  double se_c = 0.0, se_p = 0.0;
  detail::mean_and_se(cost_c, rep.chain_mean, se_c);
  detail::mean_and_se(cost_p, rep.pdp_mean, se_p);
  rep.mean_cost_delta = rep.chain_mean - rep.pdp_mean;
  rep.pooled_se = std::sqrt(se_c * se_c + se_p * se_p);
  return rep;
}

}  // namespace pomc
