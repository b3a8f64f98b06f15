#pragma once

// Controlled finite-state model: states, observation map, action grid,
// per-action rate matrices and cost vectors, discount rate.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "pomc/errors.hpp"

namespace pomc {

/// Tolerance on Q-matrix row sums.
inline constexpr double kRowSumTolerance = 1e-12;

struct Action {
  std::string id;
  std::optional<double> coord;

  bool operator==(const Action&) const = default;
};

/// Unvalidated model description. `rates[u]` is row-major |I|x|I|,
/// `h[i]` is the observation index of state i.
struct ModelData {
  std::vector<std::string> states;
  std::vector<std::string> observations;
  std::vector<std::size_t> h;
  std::vector<Action> actions;
  std::vector<std::vector<double>> rates;
  std::vector<std::vector<double>> cost;
  double beta = 1.0;

  bool operator==(const ModelData&) const = default;
};

/// Validated, immutable controlled model.
class ModelSpec {
 public:
  /// Validates `data` and computes the derived constants C_f, C_r, L_r.
  /// Throws ModelError.
  static ModelSpec create(ModelData data);

  std::size_t n_states() const noexcept { return data_.states.size(); }
  std::size_t n_observations() const noexcept { return data_.observations.size(); }
  std::size_t n_actions() const noexcept { return data_.actions.size(); }

  const std::vector<std::string>& states() const noexcept { return data_.states; }
  const std::vector<std::string>& observations() const noexcept { return data_.observations; }
  const std::vector<Action>& actions() const noexcept { return data_.actions; }
  double beta() const noexcept { return data_.beta; }

  std::size_t observation_of(std::size_t state) const { return data_.h.at(state); }

  /// States of h^{-1}(a), in state order.
  std::span<const std::size_t> face(std::size_t a) const { return faces_.at(a); }
  std::size_t face_size(std::size_t a) const { return faces_.at(a).size(); }

  double rate(std::size_t u, std::size_t i, std::size_t j) const {
    return data_.rates[u][i * n_states() + j];
  }
  std::span<const double> rates(std::size_t u) const { return data_.rates.at(u); }

  /// Total jump intensity of state i: -lambda_ii(u).
  double exit_rate(std::size_t u, std::size_t i) const { return -rate(u, i, i); }

  double cost(std::size_t u, std::size_t i) const { return data_.cost[u][i]; }
  std::span<const double> costs(std::size_t u) const { return data_.cost.at(u); }

  /// C_f = max |f(i,u)|.
  double cost_bound() const noexcept { return cost_bound_; }
  /// C_r = max over faces, actions and face vertices of the jump rate r.
  double rate_bound() const noexcept { return rate_bound_; }
  /// L_r = sum_i max_u lambda_i(u).
  double rate_lipschitz() const noexcept { return rate_lipschitz_; }

  std::optional<std::size_t> find_action(std::string_view id) const;
  std::optional<std::size_t> find_observation(std::string_view id) const;
  std::optional<std::size_t> find_state(std::string_view id) const;

  const ModelData& data() const noexcept { return data_; }

  bool operator==(const ModelSpec&) const = default;

 private:
  ModelData data_;
  std::vector<std::vector<std::size_t>> faces_;
  double cost_bound_ = 0.0;
  double rate_bound_ = 0.0;
  double rate_lipschitz_ = 0.0;
};

/// Initial law of X_0.
struct InitialLaw {
  std::vector<double> mu;
};

/// Checks that `law` is a probability vector over the model's states.
inline void validate_initial_law(const ModelSpec& model, const InitialLaw& law) {
  if (law.mu.size() != model.n_states())
    throw std::invalid_argument("initial law has wrong dimension");
  double total = 0.0;
  for (double p : law.mu) {
    if (!(p >= 0.0) || !std::isfinite(p))
      throw std::invalid_argument("initial law has a negative or non-finite entry");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-12)
    throw std::invalid_argument("initial law does not sum to 1");
}

namespace detail {

inline std::string fmt_action(const ModelData& d, std::size_t u) {
  return "action '" + d.actions[u].id + "'";
}

}  // namespace detail

inline ModelSpec ModelSpec::create(ModelData data) {
  using K = ModelError::Kind;
  const std::size_t n = data.states.size();
  const std::size_t m = data.observations.size();

  if (n < 2) throw ModelError(K::Schema, "model needs at least 2 states");
  if (m < 2) throw ModelError(K::Schema, "model needs at least 2 observations");
  if (data.actions.empty()) throw ModelError(K::Schema, "model needs at least 1 action");
  if (std::set<std::string>(data.states.begin(), data.states.end()).size() != n)
    throw ModelError(K::Schema, "duplicate state id");
  if (std::set<std::string>(data.observations.begin(), data.observations.end()).size() != m)
    throw ModelError(K::Schema, "duplicate observation id");
  {
    std::set<std::string> ids;
    for (const auto& a : data.actions) {
      if (!ids.insert(a.id).second) throw ModelError(K::Schema, "duplicate action id '" + a.id + "'");
      if (a.coord && !std::isfinite(*a.coord))
        throw ModelError(K::Schema, "non-finite coordinate for action '" + a.id + "'");
    }
  }
  if (data.h.size() != n) throw ModelError(K::Schema, "h must map every state");
  for (std::size_t o : data.h)
    if (o >= m) throw ModelError(K::Schema, "h maps to an unknown observation");
  if (std::all_of(data.h.begin(), data.h.end(), [&](std::size_t o) { return o == data.h[0]; }))
    throw ModelError(K::Observation, "h is constant: every state maps to observation '" +
                                         data.observations[data.h[0]] + "'");
  {
    std::vector<bool> hit(m, false);
    for (std::size_t o : data.h) hit[o] = true;
    for (std::size_t a = 0; a < m; ++a)
      if (!hit[a])
        throw ModelError(K::Observation,
                         "h is not surjective: observation '" + data.observations[a] + "' has no state");
  }
  if (!(data.beta > 0.0) || !std::isfinite(data.beta))
    throw ModelError(K::Value, "beta must be a positive finite number");

  const std::size_t na = data.actions.size();
  if (data.rates.size() != na) throw ModelError(K::Schema, "rates must be given for every action");
  if (data.cost.size() != na) throw ModelError(K::Schema, "cost must be given for every action");
  for (std::size_t u = 0; u < na; ++u) {
    const auto& q = data.rates[u];
    if (q.size() != n * n)
      throw ModelError(K::Schema, "rates for " + detail::fmt_action(data, u) + " must be |I|x|I|");
    if (data.cost[u].size() != n)
      throw ModelError(K::Schema, "cost for " + detail::fmt_action(data, u) + " must have |I| entries");
    for (double c : data.cost[u])
      if (!std::isfinite(c)) throw ModelError(K::Value, "non-finite cost for " + detail::fmt_action(data, u));
    for (std::size_t i = 0; i < n; ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double l = q[i * n + j];
        if (!std::isfinite(l))
          throw ModelError(K::QMatrix, "non-finite rate in " + detail::fmt_action(data, u));
        if (i != j && l < 0.0) {
          std::ostringstream os;
          os << "Q-matrix violation in " << detail::fmt_action(data, u) << ": negative off-diagonal rate "
             << l << " at (" << data.states[i] << ", " << data.states[j] << ")";
          throw ModelError(K::QMatrix, os.str());
        }
        row += l;
      }
      if (std::abs(row) > kRowSumTolerance) {
        std::ostringstream os;
        os << "Q-matrix violation in " << detail::fmt_action(data, u) << ": row '" << data.states[i]
           << "' sums to " << row;
        throw ModelError(K::QMatrix, os.str());
      }
    }
  }

  ModelSpec spec;
  spec.faces_.assign(m, {});
  for (std::size_t i = 0; i < n; ++i) spec.faces_[data.h[i]].push_back(i);

  double cf = 0.0;
  for (const auto& c : data.cost)
    for (double x : c) cf = std::max(cf, std::abs(x));

  // r at a face vertex e_i is the total rate out of the face.
  double cr = 0.0;
  for (std::size_t u = 0; u < na; ++u)
    for (std::size_t i = 0; i < n; ++i) {
      double out = 0.0;
      for (std::size_t j = 0; j < n; ++j)
        if (data.h[j] != data.h[i]) out += data.rates[u][i * n + j];
      cr = std::max(cr, out);
    }

  double lr = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double sup = 0.0;
    for (std::size_t u = 0; u < na; ++u) sup = std::max(sup, -data.rates[u][i * n + i]);
    lr += sup;
  }

  spec.cost_bound_ = cf;
  spec.rate_bound_ = cr;
  spec.rate_lipschitz_ = lr;
  spec.data_ = std::move(data);
  return spec;
}

inline std::optional<std::size_t> ModelSpec::find_action(std::string_view id) const {
  for (std::size_t u = 0; u < data_.actions.size(); ++u)
    if (data_.actions[u].id == id) return u;
  return std::nullopt;
}

inline std::optional<std::size_t> ModelSpec::find_observation(std::string_view id) const {
  for (std::size_t a = 0; a < data_.observations.size(); ++a)
    if (data_.observations[a] == id) return a;
  return std::nullopt;
}

inline std::optional<std::size_t> ModelSpec::find_state(std::string_view id) const {
  for (std::size_t i = 0; i < data_.states.size(); ++i)
    if (data_.states[i] == id) return i;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// JSON model files
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::string> string_array(const nlohmann::json& doc, const char* key) {
  using K = ModelError::Kind;
  if (!doc.contains(key) || !doc[key].is_array())
    throw ModelError(K::Schema, std::string("field '") + key + "' must be an array of strings");
  std::vector<std::string> out;
  for (const auto& v : doc[key]) {
    if (!v.is_string()) throw ModelError(K::Schema, std::string("field '") + key + "' must contain strings");
    out.push_back(v.get<std::string>());
  }
  return out;
}

inline double number(const nlohmann::json& v, const std::string& where) {
  if (!v.is_number()) throw ModelError(ModelError::Kind::Schema, where + " must be a number");
  return v.get<double>();
}

}  // namespace detail

/// Parses and validates a model document. Accepts `rates` entries either as
/// a flat row-major array of |I|^2 numbers or as |I| rows of |I| numbers.
inline ModelSpec load_model_json(const nlohmann::json& doc) {
  using K = ModelError::Kind;
  if (!doc.is_object()) throw ModelError(K::Schema, "model document must be a JSON object");

  ModelData d;
  d.states = detail::string_array(doc, "states");
  d.observations = detail::string_array(doc, "observations");
  const std::size_t n = d.states.size();

  if (!doc.contains("h") || !doc["h"].is_object())
    throw ModelError(K::Schema, "field 'h' must be an object state->observation");
  const auto& hj = doc["h"];
  d.h.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!hj.contains(d.states[i]) || !hj[d.states[i]].is_string())
      throw ModelError(K::Schema, "h has no observation for state '" + d.states[i] + "'");
    const auto obs = hj[d.states[i]].get<std::string>();
    auto it = std::find(d.observations.begin(), d.observations.end(), obs);
    if (it == d.observations.end())
      throw ModelError(K::Schema, "h maps state '" + d.states[i] + "' to unknown observation '" + obs + "'");
    d.h[i] = static_cast<std::size_t>(it - d.observations.begin());
  }
  if (hj.size() != n) throw ModelError(K::Schema, "h has entries for unknown states");

  if (!doc.contains("actions") || !doc["actions"].is_array())
    throw ModelError(K::Schema, "field 'actions' must be an array");
  for (const auto& a : doc["actions"]) {
    if (!a.is_object() || !a.contains("id") || !a["id"].is_string())
      throw ModelError(K::Schema, "every action needs a string 'id'");
    Action act{a["id"].get<std::string>(), std::nullopt};
    if (a.contains("coord") && !a["coord"].is_null())
      act.coord = detail::number(a["coord"], "coord of action '" + act.id + "'");
    d.actions.push_back(std::move(act));
  }

  if (!doc.contains("rates") || !doc["rates"].is_object())
    throw ModelError(K::Schema, "field 'rates' must be an object action->matrix");
  if (!doc.contains("cost") || !doc["cost"].is_object())
    throw ModelError(K::Schema, "field 'cost' must be an object action->vector");

  for (const auto& act : d.actions) {
    if (!doc["rates"].contains(act.id))
      throw ModelError(K::Schema, "rates missing for action '" + act.id + "'");
    const auto& rj = doc["rates"][act.id];
    if (!rj.is_array()) throw ModelError(K::Schema, "rates for action '" + act.id + "' must be an array");
    std::vector<double> q;
    if (!rj.empty() && rj[0].is_array()) {
      if (rj.size() != n) throw ModelError(K::Schema, "rates for action '" + act.id + "' must have |I| rows");
      for (const auto& row : rj) {
        if (!row.is_array() || row.size() != n)
          throw ModelError(K::Schema, "rates for action '" + act.id + "' must have |I| columns");
        for (const auto& v : row) q.push_back(detail::number(v, "rate entry"));
      }
    } else {
      if (rj.size() != n * n)
        throw ModelError(K::Schema, "rates for action '" + act.id + "' must have |I|^2 entries");
      for (const auto& v : rj) q.push_back(detail::number(v, "rate entry"));
    }
    d.rates.push_back(std::move(q));

    if (!doc["cost"].contains(act.id))
      throw ModelError(K::Schema, "cost missing for action '" + act.id + "'");
    const auto& cj = doc["cost"][act.id];
    if (!cj.is_array() || cj.size() != n)
      throw ModelError(K::Schema, "cost for action '" + act.id + "' must have |I| entries");
    std::vector<double> c;
    for (const auto& v : cj) c.push_back(detail::number(v, "cost entry"));
    d.cost.push_back(std::move(c));
  }
  for (const auto& [key, _] : doc["rates"].items())
    if (std::none_of(d.actions.begin(), d.actions.end(), [&](const Action& a) { return a.id == key; }))
      throw ModelError(K::Schema, "rates given for unknown action '" + key + "'");

  if (!doc.contains("beta")) throw ModelError(K::Schema, "field 'beta' is required");
  d.beta = detail::number(doc["beta"], "beta");

  return ModelSpec::create(std::move(d));
}

/// Parses a model document from text.
inline ModelSpec load_model(std::string_view document) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(document);
  } catch (const nlohmann::json::parse_error& e) {
    throw ModelError(ModelError::Kind::Schema, std::string("malformed JSON: ") + e.what());
  }
  return load_model_json(doc);
}

/// Reads and parses a model file. Throws std::ios_base::failure if unreadable.
inline ModelSpec load_model_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::ios_base::failure("cannot open model file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return load_model(buf.str());
}

/// Serializes a model back to the file schema (nested rate rows).
inline nlohmann::json to_json(const ModelSpec& model) {
  nlohmann::json doc;
  doc["states"] = model.states();
  doc["observations"] = model.observations();
  nlohmann::json h = nlohmann::json::object();
  for (std::size_t i = 0; i < model.n_states(); ++i)
    h[model.states()[i]] = model.observations()[model.observation_of(i)];
  doc["h"] = h;
  nlohmann::json acts = nlohmann::json::array();
  nlohmann::json rates = nlohmann::json::object();
  nlohmann::json cost = nlohmann::json::object();
  const std::size_t n = model.n_states();
  for (std::size_t u = 0; u < model.n_actions(); ++u) {
    const auto& a = model.actions()[u];
    nlohmann::json aj{{"id", a.id}};
    if (a.coord) aj["coord"] = *a.coord;
    acts.push_back(aj);
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t i = 0; i < n; ++i) {
      nlohmann::json row = nlohmann::json::array();
      for (std::size_t j = 0; j < n; ++j) row.push_back(model.rate(u, i, j));
      rows.push_back(row);
    }
    rates[a.id] = rows;
    cost[a.id] = std::vector<double>(model.costs(u).begin(), model.costs(u).end());
  }
  doc["actions"] = acts;
  doc["rates"] = rates;
  doc["cost"] = cost;
  doc["beta"] = model.beta();
  return doc;
}

// ---------------------------------------------------------------------------
// Structural probes on the action grid
// ---------------------------------------------------------------------------

/// Each field is empty ("unknown") when some action has no coordinate.
struct ConvexityReport {
  std::optional<bool> interval_u;
  std::optional<bool> rates_linear;
  std::optional<bool> cost_convex;
};

/// Checks whether the tabulated model has the structure under which the
/// relaxed and ordinary minimizations coincide: an interval action set,
/// rates affine in the action and costs convex in it.
inline ConvexityReport check_convexity_conditions(const ModelSpec& model) {
  ConvexityReport report;
  const auto& acts = model.actions();
  if (std::any_of(acts.begin(), acts.end(), [](const Action& a) { return !a.coord.has_value(); }))
    return report;

  const std::size_t na = acts.size();
  bool interval = true;
  for (std::size_t u = 0; u < na; ++u) {
    const double x = *acts[u].coord;
    if (x < 0.0 || x > 1.0) interval = false;
    if (u > 0 && !(x > *acts[u - 1].coord)) interval = false;
  }
  report.interval_u = interval;

  std::vector<std::size_t> order(na);
  for (std::size_t u = 0; u < na; ++u) order[u] = u;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return *acts[a].coord < *acts[b].coord; });

  // Second divided differences over consecutive grid triples; repeated
  // coordinates make the probe meaningless, so report those as non-linear.
  auto second_diff = [&](auto&& value, std::size_t k) -> std::optional<double> {
    const double x0 = *acts[order[k]].coord, x1 = *acts[order[k + 1]].coord, x2 = *acts[order[k + 2]].coord;
    if (!(x1 > x0) || !(x2 > x1)) return std::nullopt;
    const double y0 = value(order[k]), y1 = value(order[k + 1]), y2 = value(order[k + 2]);
    return (y2 - y1) / (x2 - x1) - (y1 - y0) / (x1 - x0);
  };

  const std::size_t n = model.n_states();
  bool linear = true;
  bool convex = true;
  for (std::size_t k = 0; k + 2 < na; ++k) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        auto d2 = second_diff([&](std::size_t u) { return model.rate(u, i, j); }, k);
        if (!d2 || std::abs(*d2) > 1e-9) linear = false;
      }
      auto c2 = second_diff([&](std::size_t u) { return model.cost(u, i); }, k);
      if (!c2 || *c2 < -1e-12) convex = false;
    }
  }
  report.rates_linear = linear;
  report.cost_convex = convex;
  return report;
}

}  // namespace pomc
