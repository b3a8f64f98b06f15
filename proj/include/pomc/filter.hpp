#pragma once

// Exact noise-free filter of the partially observed chain and its
// piecewise-deterministic characteristics (F, r, R).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "pomc/belief.hpp"
#include "pomc/control.hpp"
#include "pomc/errors.hpp"
#include "pomc/grid.hpp"
#include "pomc/model.hpp"

namespace pomc {

/// Mass below which H_a and q fall back to their degenerate branches.
inline constexpr double kMassEps = 1e-12;
/// Largest admissible renormalization drift per unit time.
inline constexpr double kMaxDriftRate = 1e-6;

/// H_a[mu]: restriction of a nonnegative row vector to h^{-1}(a), renormalized.
/// Falls back to the uniform law on the face when the restricted mass vanishes.
inline Belief h_jump(const ModelSpec& model, std::span<const double> mu, std::size_t a) {
  if (a >= model.n_observations()) throw std::out_of_range("unknown observation index");
  if (mu.size() != model.n_states()) throw std::invalid_argument("measure has wrong dimension");
  double mass = 0.0;
  for (std::size_t i : model.face(a)) mass += mu[i];
  if (!(mass > kMassEps)) return uniform_belief(model, a);
  Belief b{a, std::vector<double>(model.n_states(), 0.0)};
  for (std::size_t i : model.face(a)) b.weights[i] = std::max(0.0, mu[i]) / mass;
  return b;
}

/// Row vector nu * Lambda(u).
inline std::vector<double> left_multiply(const ModelSpec& model, std::span<const double> nu, std::size_t u) {
  const std::size_t n = model.n_states();
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (nu[i] == 0.0) continue;
    for (std::size_t j = 0; j < n; ++j) out[j] += nu[i] * model.rate(u, i, j);
  }
  return out;
}

namespace detail {

/// Writes F(z,u) into `dz` (zero off the face) and returns r(z,u).
/// Only face states are read from z.
inline double field_and_rate(const ModelSpec& model, std::size_t face, std::span<const double> z, std::size_t u,
                             std::span<double> dz) {
  const auto states = model.face(face);
  double inflow_total = 0.0;
  for (std::size_t j : states) {
    double s = 0.0;
    for (std::size_t i : states) s += z[i] * model.rate(u, i, j);
    dz[j] = s;
    inflow_total += s;
  }
  const double r = -inflow_total;
  for (std::size_t j : states) dz[j] += r * z[j];
  return r;
}

inline double rate_on_face(const ModelSpec& model, std::size_t face, std::span<const double> z, std::size_t u) {
  const auto states = model.face(face);
  double r = 0.0;
  for (std::size_t i : states) {
    if (z[i] == 0.0) continue;
    double out = 0.0;
    for (std::size_t j = 0; j < model.n_states(); ++j)
      if (model.observation_of(j) != face) out += model.rate(u, i, j);
    r += z[i] * out;
  }
  return r;
}

inline double face_cost(const ModelSpec& model, std::size_t face, std::span<const double> z, std::size_t u) {
  double c = 0.0;
  for (std::size_t i : model.face(face)) c += z[i] * model.cost(u, i);
  return c;
}

/// (e^{-k a} - e^{-k b}) / k, the integral of e^{-k t} over [a, b]; k >= 0.
inline double discounted_integral(double k, double a, double b) {
  if (k == 0.0) return b - a;
  return (std::exp(-k * a) - std::exp(-k * b)) / k;
}

}  // namespace detail

/// F(nu, u): the filter's drift on the face of nu.
inline std::vector<double> vector_field(const ModelSpec& model, const Belief& nu, std::size_t u) {
  std::vector<double> dz(model.n_states(), 0.0);
  detail::field_and_rate(model, nu.face, nu.weights, u, dz);
  return dz;
}

/// r(rho, u) = -rho Lambda(u) 1_{h^{-1}(a)}: intensity of the next observation jump.
inline double jump_rate(const ModelSpec& model, const Belief& rho, std::size_t u) {
  return detail::rate_on_face(model, rho.face, rho.weights, u);
}

struct JumpTarget {
  Belief target;
  double prob = 0.0;
};

/// Post-jump law R(rho, u; .) as a finite list of atoms on faces b != a.
inline std::vector<JumpTarget> jump_kernel(const ModelSpec& model, const Belief& rho, std::size_t u) {
  const std::size_t a = rho.face;
  const std::size_t m = model.n_observations();
  std::vector<JumpTarget> out;
  const double r = jump_rate(model, rho, u);
  const auto flux = left_multiply(model, rho.weights, u);
  if (r > kMassEps) {
    for (std::size_t b = 0; b < m; ++b) {
      if (b == a) continue;
      double mass = 0.0;
      for (std::size_t j : model.face(b)) mass += flux[j];
      const double q = mass / r;
      if (q > 0.0) out.push_back({h_jump(model, flux, b), q});
    }
    // Renormalize away rounding so the atoms form a probability vector.
    double total = 0.0;
    for (const auto& t : out) total += t.prob;
    for (auto& t : out) t.prob /= total;
  } else {
    const double q = 1.0 / static_cast<double>(m - 1);
    for (std::size_t b = 0; b < m; ++b)
      if (b != a) out.push_back({h_jump(model, flux, b), q});
  }
  return out;
}

/// Integral of a table against R(rho, u; .), computed through the jump kernel.
inline double expected_post_jump(const ModelSpec& model, const Belief& rho, std::size_t u, const ValueTable& w) {
  double s = 0.0;
  for (const auto& t : jump_kernel(model, rho, u)) s += t.prob * w.interpolate(t.target);
  return s;
}

// ---------------------------------------------------------------------------
// Deterministic flow
// ---------------------------------------------------------------------------

/// State carried by the flow integrator: the belief on one face, the
/// cumulative hazard H (so chi = exp(-H)) and the discounted running cost
/// C(t) = int_0^t e^{-beta s} chi(s) phi(s) f(u(s)) ds.
struct FlowState {
  std::vector<double> z;
  double hazard = 0.0;
  double cost = 0.0;
};

/// Fixed-step classical RK4 on (z, H, C) for one face, with per-step
/// renormalization of z onto the face.
class FlowStepper {
 public:
  FlowStepper(const ModelSpec& model, std::size_t face)
      : model_(&model), face_(face), k_(4, std::vector<double>(model.n_states(), 0.0)), tmp_(model.n_states(), 0.0) {}

  std::size_t face() const noexcept { return face_; }

  /// Whether z is an exact rest point of F(., u); then the flow is constant.
  bool stationary(std::span<const double> z, std::size_t u) {
    detail::field_and_rate(*model_, face_, z, u, tmp_);
    for (std::size_t j : model_->face(face_))
      if (tmp_[j] != 0.0) return false;
    return true;
  }

  /// Whether the last step had to clip negative components.
  bool clipped() const noexcept { return clipped_; }

  /// Advances `st` from time t by dt under action u. Returns the drift removed
  /// by renormalization (clipped negative mass plus |sum - 1|).
  double step(FlowState& st, double t, double dt, std::size_t u) {
    const auto states = model_->face(face_);
    const double beta = model_->beta();
    double r[4], c[4];
    const double stage_dt[4] = {0.0, 0.5 * dt, 0.5 * dt, dt};
    for (int s = 0; s < 4; ++s) {
      for (std::size_t j : states) tmp_[j] = st.z[j] + (s == 0 ? 0.0 : stage_dt[s] * k_[s - 1][j]);
      const double hz = st.hazard + (s == 0 ? 0.0 : stage_dt[s] * r[s - 1]);
      r[s] = std::max(0.0, detail::field_and_rate(*model_, face_, tmp_, u, k_[s]));
      c[s] = std::exp(-beta * (t + stage_dt[s]) - hz) * detail::face_cost(*model_, face_, tmp_, u);
    }
    for (std::size_t j : states) st.z[j] += dt / 6.0 * (k_[0][j] + 2.0 * k_[1][j] + 2.0 * k_[2][j] + k_[3][j]);
    st.hazard += dt / 6.0 * (r[0] + 2.0 * r[1] + 2.0 * r[2] + r[3]);
    st.cost += dt / 6.0 * (c[0] + 2.0 * c[1] + 2.0 * c[2] + c[3]);
    return renormalize(st.z);
  }

  /// Advances a stationary state exactly: z fixed, r constant.
  void step_stationary(FlowState& st, double t, double dt, std::size_t u) const {
    const double r = std::max(0.0, detail::rate_on_face(*model_, face_, st.z, u));
    const double beta = model_->beta();
    st.cost += std::exp(-beta * t - st.hazard) * detail::face_cost(*model_, face_, st.z, u) *
               detail::discounted_integral(beta + r, 0.0, dt);
    st.hazard += r * dt;
  }

  double renormalize(std::vector<double>& z) {
    double drift = 0.0, total = 0.0;
    clipped_ = false;
    for (std::size_t j : model_->face(face_)) {
      if (z[j] < 0.0) {
        drift += -z[j];
        z[j] = 0.0;
        clipped_ = true;
      }
      total += z[j];
    }
    drift += std::abs(total - 1.0);
    if (total > 0.0)
      for (std::size_t j : model_->face(face_)) z[j] /= total;
    return drift;
  }

 private:
  const ModelSpec* model_;
  std::size_t face_;
  std::vector<std::vector<double>> k_;
  std::vector<double> tmp_;
  bool clipped_ = false;
};

/// Uniform step count for an interval of length `len` with nominal step h.
inline std::size_t steps_for(double len, double h) {
  if (len <= 0.0) return 0;
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(len / h - 1e-9)));
}

struct FlowResult {
  std::size_t face = 0;
  std::vector<double> times;
  std::vector<std::vector<double>> weights;
  std::vector<double> survival;
  /// Action in force on the step ending at each sample (entry 0 repeats entry 1).
  std::vector<std::size_t> actions;
  double step = 0.0;
  double max_drift = 0.0;

  Belief belief(std::size_t k) const { return {face, weights[k]}; }
};

/// Integrates the flow and survival of the next jump from nu under the
/// open-loop control alpha up to time T with nominal step h. Control
/// breakpoints are forced sample points; each control segment uses equal
/// steps no longer than h.
inline FlowResult integrate_flow(const ModelSpec& model, const Belief& nu, const PiecewiseConstantControl& alpha,
                                 double horizon, double h) {
  if (!(horizon >= 0.0)) throw std::invalid_argument("horizon must be >= 0");
  if (!(h > 0.0)) throw std::invalid_argument("step must be > 0");
  FlowResult out;
  out.face = nu.face;
  out.step = h;
  FlowStepper stepper(model, nu.face);
  FlowState st{nu.weights, 0.0, 0.0};
  out.times.push_back(0.0);
  out.weights.push_back(st.z);
  out.survival.push_back(1.0);
  out.actions.push_back(alpha.action_at(0.0));

  double total_drift = 0.0;
  for (std::size_t seg = 0; seg < alpha.n_segments(); ++seg) {
    const double s0 = alpha.breakpoints()[seg];
    if (s0 >= horizon) break;
    const double s1 = std::min(alpha.segment_end(seg), horizon);
    const std::size_t u = alpha.actions()[seg];
    const std::size_t m = steps_for(s1 - s0, h);
    const double dt = (s1 - s0) / static_cast<double>(m);
    for (std::size_t k = 0; k < m; ++k) {
      const double t = s0 + dt * static_cast<double>(k);
      total_drift += stepper.step(st, t, dt, u);
      out.times.push_back(k + 1 == m ? s1 : s0 + dt * static_cast<double>(k + 1));
      out.weights.push_back(st.z);
      out.survival.push_back(std::exp(-st.hazard));
      out.actions.push_back(u);
    }
  }
  if (out.actions.size() > 1) out.actions[0] = out.actions[1];
  out.max_drift = total_drift;
  if (horizon > 0.0 && total_drift / horizon > kMaxDriftRate)
    throw FlowAccuracyError("flow renormalization drift " + std::to_string(total_drift / horizon) +
                            " per unit time exceeds tolerance; use a smaller step");
  return out;
}

// ---------------------------------------------------------------------------
// Filter replay along an observed path
// ---------------------------------------------------------------------------

struct ObservationEvent {
  double time = 0.0;
  std::size_t face = 0;
};

struct BeliefSample {
  double t = 0.0;
  Belief belief;
  /// Survival of the current inter-jump segment at t.
  double chi = 1.0;
};

struct BeliefTrajectory {
  std::vector<BeliefSample> samples;

  /// Last sample at or before t.
  const BeliefSample& at(double t) const {
    auto it = std::upper_bound(samples.begin(), samples.end(), t,
                               [](double v, const BeliefSample& s) { return v < s.t; });
    if (it == samples.begin()) return samples.front();
    return *(it - 1);
  }
};

/// Reconstructs the filter pi_t on [0, T] from the initial law and the
/// observed path. Segment n (after the n-th observation jump) is driven by
/// controls[min(n, size-1)] with time measured from the segment start.
inline BeliefTrajectory replay_filter(const ModelSpec& model, const InitialLaw& mu,
                                      std::span<const ObservationEvent> obs_path,
                                      std::span<const PiecewiseConstantControl> controls, double horizon,
                                      double h = 1e-3) {
  validate_initial_law(model, mu);
  if (obs_path.empty() || obs_path.front().time != 0.0)
    throw InconsistentPathError("observation path must start with the time-0 observation");
  if (controls.empty()) throw std::invalid_argument("at least one control is required");
  for (std::size_t n = 1; n < obs_path.size(); ++n) {
    if (!(obs_path[n].time > obs_path[n - 1].time))
      throw InconsistentPathError("observation times must be strictly increasing");
    if (obs_path[n].face == obs_path[n - 1].face)
      throw InconsistentPathError("observation at jump " + std::to_string(n) + " repeats the previous face");
  }
  for (const auto& ev : obs_path)
    if (ev.face >= model.n_observations()) throw std::out_of_range("unknown observation index");

  BeliefTrajectory traj;
  Belief pi = h_jump(model, mu.mu, obs_path.front().face);
  traj.samples.push_back({0.0, pi, 1.0});

  for (std::size_t n = 0; n < obs_path.size(); ++n) {
    const double start = obs_path[n].time;
    if (start > horizon) break;
    const double end = n + 1 < obs_path.size() ? std::min(obs_path[n + 1].time, horizon) : horizon;
    const auto& alpha = controls[std::min(n, controls.size() - 1)];
    FlowStepper stepper(model, pi.face);
    FlowState st{pi.weights, 0.0, 0.0};
    std::size_t last_action = alpha.action_at(0.0);
    for (std::size_t seg = 0; seg < alpha.n_segments(); ++seg) {
      const double s0 = start + alpha.breakpoints()[seg];
      if (s0 >= end) break;
      const double s1 = std::min(start + alpha.segment_end(seg), end);
      const std::size_t u = alpha.actions()[seg];
      last_action = u;
      const std::size_t m = steps_for(s1 - s0, h);
      const double dt = (s1 - s0) / static_cast<double>(m);
      for (std::size_t k = 0; k < m; ++k) {
        stepper.step(st, s0 - start + dt * static_cast<double>(k), dt, u);
        const double t = k + 1 == m ? s1 : s0 + dt * static_cast<double>(k + 1);
        traj.samples.push_back({t, Belief{pi.face, st.z}, std::exp(-st.hazard)});
      }
    }
    if (n + 1 < obs_path.size() && obs_path[n + 1].time <= horizon) {
      // pi_{tau} = H_{Y_tau}[pi_{tau-} Lambda(u_{tau-})]
      const auto flux = left_multiply(model, st.z, last_action);
      pi = h_jump(model, flux, obs_path[n + 1].face);
      traj.samples.push_back({obs_path[n + 1].time, pi, 1.0});
    }
  }
  return traj;
}

// ---------------------------------------------------------------------------
// Continuity of the jump operator
// ---------------------------------------------------------------------------

struct ContinuityRow {
  double radius = 0.0;
  double deviation = 0.0;
};

/// Probes rho -> r(rho,u) * int w dR(rho,u;.) near rho: for every radius,
/// the max over same-face sample points at Euclidean distance `radius` and
/// over all actions of the change from rho. Samples move along the edge
/// directions (e_i - e_j)/sqrt(2) of the face and are skipped when they
/// would leave it.
inline std::vector<ContinuityRow> continuity_probe(const ModelSpec& model, const ValueTable& w, const Belief& rho,
                                                   std::span<const double> radii) {
  auto jump_term = [&](const Belief& p, std::size_t u) {
    return jump_rate(model, p, u) * expected_post_jump(model, p, u, w);
  };
  std::vector<double> base(model.n_actions());
  for (std::size_t u = 0; u < model.n_actions(); ++u) base[u] = jump_term(rho, u);

  const auto states = model.face(rho.face);
  std::vector<ContinuityRow> rows;
  for (double delta : radii) {
    ContinuityRow row{delta, 0.0};
    if (delta > 0.0) {
      const double step = delta / std::sqrt(2.0);
      for (std::size_t i : states)
        for (std::size_t j : states) {
          if (i == j) continue;
          Belief p = rho;
          p.weights[i] += step;
          p.weights[j] -= step;
          if (p.weights[j] < 0.0 || p.weights[i] > 1.0) continue;
          for (std::size_t u = 0; u < model.n_actions(); ++u)
            row.deviation = std::max(row.deviation, std::abs(jump_term(p, u) - base[u]));
        }
    }
    rows.push_back(row);
  }
  return rows;
}

}  // namespace pomc
