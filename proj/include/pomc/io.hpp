#pragma once

// CSV tables and trajectories, JSON reports, and the config hash that
// heads every output file.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <memory>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "pomc/filter.hpp"
#include "pomc/grid.hpp"
#include "pomc/hjb.hpp"
#include "pomc/model.hpp"
#include "pomc/policy.hpp"
#include "pomc/simulate.hpp"
#include "pomc/solver.hpp"

namespace pomc::io {

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Hex digest of the run configuration together with the raw model bytes.
inline std::string config_hash(const nlohmann::json& config, std::string_view model_bytes) {
  std::uint64_t h = fnv1a(config.dump());
  h = fnv1a("\n", h);
  h = fnv1a(model_bytes, h);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

/// Shortest text that round-trips the double.
inline std::string fmt(double x) {
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

namespace detail {

inline void write_node_columns(std::ostream& os, const ModelSpec& model) {
  os << "face";
  for (const auto& s : model.states()) os << ',' << s;
}

inline void write_node(std::ostream& os, const ModelSpec& model, const SimplexGrid& grid, std::size_t node) {
  const Belief b = grid.node_belief(node);
  os << model.observations()[b.face];
  for (double w : b.weights) os << ',' << fmt(w);
}

/// Reads `# key: value` header lines and returns the first data row index.
inline std::vector<std::string> read_lines(std::istream& is, nlohmann::json& header) {
  std::vector<std::string> rows;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto colon = line.find(':');
      if (colon != std::string::npos) {
        std::string key = line.substr(1, colon - 1), value = line.substr(colon + 1);
        auto trim = [](std::string& s) {
          s.erase(0, s.find_first_not_of(' '));
          s.erase(s.find_last_not_of(' ') + 1);
        };
        trim(key);
        trim(value);
        header[key] = value;
      }
      continue;
    }
    rows.push_back(line);
  }
  return rows;
}

/// Node addressed by a data row's face and weights.
inline std::size_t locate_node(const ModelSpec& model, const SimplexGrid& grid, const std::vector<std::string>& cells) {
  const auto face = model.find_observation(cells.at(0));
  if (!face) throw std::runtime_error("unknown observation '" + cells.at(0) + "' in table");
  const auto states = grid.face_states(*face);
  std::vector<double> w(model.n_states());
  for (std::size_t i = 0; i < model.n_states(); ++i) w[i] = std::stod(cells.at(i + 1));
  std::vector<int> x(states.size() - 1);
  double tail = 0.0;
  for (std::size_t k = states.size() - 1; k-- > 0;) {
    tail += w[states[k + 1]];
    x[k] = static_cast<int>(std::llround(tail * static_cast<double>(grid.resolution())));
  }
  if (!grid.contains(*face, x)) throw std::runtime_error("table row is not a grid node");
  return grid.node_index(*face, x);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Value tables and policies
// ---------------------------------------------------------------------------

inline void write_value_table(std::ostream& os, const ModelSpec& model, const ValueTable& v, const std::string& hash) {
  os << "# config_hash: " << hash << "\n# n_grid: " << v.grid->resolution() << '\n';
  detail::write_node_columns(os, model);
  os << ",value\n";
  for (std::size_t node = 0; node < v.grid->n_nodes(); ++node) {
    detail::write_node(os, model, *v.grid, node);
    os << ',' << fmt(v.values[node]) << '\n';
  }
}

inline ValueTable read_value_table(std::istream& is, const ModelSpec& model) {
  nlohmann::json header = nlohmann::json::object();
  auto rows = detail::read_lines(is, header);
  if (!header.contains("n_grid")) throw std::runtime_error("value table lacks the n_grid header");
  if (rows.empty()) throw std::runtime_error("value table is empty");
  const auto grid = std::make_shared<const SimplexGrid>(model, std::stoul(header["n_grid"].get<std::string>()));
  ValueTable v{grid, std::vector<double>(grid->n_nodes(), std::nan("")), {}};
  std::vector<bool> seen(grid->n_nodes(), false);
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto cells = split_csv(rows[r]);
    if (cells.size() != model.n_states() + 2) throw std::runtime_error("value table row has the wrong width");
    const std::size_t node = detail::locate_node(model, *grid, cells);
    v.values[node] = std::stod(cells.back());
    seen[node] = true;
  }
  for (bool s : seen)
    if (!s) throw std::runtime_error("value table misses grid nodes");
  return v;
}

inline void write_policy(std::ostream& os, const ModelSpec& model, const FeedbackPolicy& p, const std::string& hash) {
  os << "# config_hash: " << hash << "\n# n_grid: " << p.grid->resolution() << "\n# dwell: " << fmt(p.dwell)
     << '\n';
  detail::write_node_columns(os, model);
  os << ",action\n";
  for (std::size_t node = 0; node < p.grid->n_nodes(); ++node) {
    detail::write_node(os, model, *p.grid, node);
    os << ',' << model.actions()[p.actions[node]].id << '\n';
  }
}

inline FeedbackPolicy read_policy(std::istream& is, const ModelSpec& model) {
  nlohmann::json header = nlohmann::json::object();
  auto rows = detail::read_lines(is, header);
  if (!header.contains("n_grid")) throw std::runtime_error("policy lacks the n_grid header");
  FeedbackPolicy p;
  p.grid = std::make_shared<const SimplexGrid>(model, std::stoul(header["n_grid"].get<std::string>()));
  if (header.contains("dwell")) p.dwell = std::stod(header["dwell"].get<std::string>());
  p.actions.assign(p.grid->n_nodes(), model.n_actions());
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto cells = split_csv(rows[r]);
    if (cells.size() != model.n_states() + 2) throw std::runtime_error("policy row has the wrong width");
    const auto u = model.find_action(cells.back());
    if (!u) throw std::runtime_error("policy refers to unknown action '" + cells.back() + "'");
    p.actions[detail::locate_node(model, *p.grid, cells)] = *u;
  }
  for (std::size_t u : p.actions)
    if (u >= model.n_actions()) throw std::runtime_error("policy misses grid nodes");
  return p;
}

// ---------------------------------------------------------------------------
// Trajectories
// ---------------------------------------------------------------------------

/// Chain path as rows `t,event,state_or_face,detail`.
inline void write_chain_trajectory(std::ostream& os, const ModelSpec& model, const ChainTrajectory& traj,
                                   std::size_t replicate) {
  std::size_t y = 0;
  for (const auto& x : traj.x_jumps) {
    os << fmt(x.time) << ",x_jump," << model.states()[x.mark] << ",replicate=" << replicate << '\n';
    if (y < traj.y_jumps.size() && traj.y_jumps[y].time == x.time) {
      os << fmt(x.time) << ",y_jump," << model.observations()[traj.y_jumps[y].mark] << ",replicate=" << replicate
         << '\n';
      ++y;
    }
  }
  os << fmt(traj.horizon) << ",end,,discounted_cost=" << fmt(traj.discounted_cost) << '\n';
}

/// PDP jump chain as rows `t,event,state_or_face,detail`; detail lists the
/// belief weights and the stage cost.
inline void write_pdp_trajectory(std::ostream& os, const ModelSpec& model, const PdpTrajectory& traj,
                                 std::size_t replicate) {
  for (std::size_t n = 0; n < traj.jump_chain.size(); ++n) {
    const auto& j = traj.jump_chain[n];
    os << fmt(j.time) << ",pdp_jump," << model.observations()[j.belief.face] << ",replicate=" << replicate
       << ";weights=";
    for (std::size_t i = 0; i < j.belief.weights.size(); ++i) os << (i ? " " : "") << fmt(j.belief.weights[i]);
    os << ";stage_cost=" << fmt(traj.stage_costs[n]) << '\n';
  }
  os << fmt(traj.horizon) << ",end,,discounted_sum=" << fmt(traj.discounted_sum) << '\n';
}

inline void write_trajectory_header(std::ostream& os, const std::string& hash) {
  os << "# config_hash: " << hash << "\nt,event,state_or_face,detail\n";
}

/// Belief samples as rows `t,face,w_1..w_n,chi`.
inline void write_belief_trajectory(std::ostream& os, const ModelSpec& model, const BeliefTrajectory& traj,
                                    const std::string& hash) {
  os << "# config_hash: " << hash << "\nt,face";
  for (std::size_t i = 1; i <= model.n_states(); ++i) os << ",w_" << i;
  os << ",chi\n";
  for (const auto& s : traj.samples) {
    os << fmt(s.t) << ',' << model.observations()[s.belief.face];
    for (double w : s.belief.weights) os << ',' << fmt(w);
    os << ',' << fmt(s.chi) << '\n';
  }
}

// ---------------------------------------------------------------------------
// JSON reports
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const SolveMetadata& m) {
  return {{"iterations", m.iterations},
          {"residual", m.residual},
          {"contraction_estimate", m.contraction_estimate},
          {"step_contraction", m.step_contraction},
          {"boundary_events", m.boundary_events}};
}

inline nlohmann::json to_json(const CostEstimate& e) {
  return {{"mean", e.mean},
          {"std_error", e.std_error},
          {"ci95", {e.ci95_low, e.ci95_high}},
          {"tail_bound", e.tail_bound},
          {"replicates", e.replicates},
          {"horizon", e.horizon}};
}

inline nlohmann::json to_json(const LawComparison& r) {
  return {{"ks_tau1", r.ks_tau1},
          {"ks_tau1_pvalue", r.ks_tau1_pvalue},
          {"face_chi2", r.face_chi2},
          {"face_chi2_pvalue", r.face_chi2_pvalue},
          {"face_chi2_dof", r.face_chi2_dof},
          {"mean_cost_delta", r.mean_cost_delta},
          {"pooled_se", r.pooled_se},
          {"chain_mean", r.chain_mean},
          {"pdp_mean", r.pdp_mean},
          {"chain_face_counts", r.chain_face_counts},
          {"pdp_face_counts", r.pdp_face_counts},
          {"replicates", r.replicates},
          {"horizon", r.horizon}};
}

inline nlohmann::json to_json(const DppReport& r) {
  return {{"horizon", r.horizon}, {"max_interior_mismatch", r.max_interior}, {"max_mismatch", r.max_all}};
}

inline nlohmann::json to_json(const HjbReport& r) {
  nlohmann::json faces = nlohmann::json::array();
  for (const auto& f : r.faces) {
    double boundary_max = 0.0;
    for (const auto& b : f.boundary_nodes) boundary_max = std::max(boundary_max, std::abs(b.residual));
    faces.push_back({{"max_residual", f.max_residual},
                     {"mean_residual", f.mean_residual},
                     {"interior_nodes", f.nodes.size()},
                     {"boundary_nodes", f.boundary_nodes.size()},
                     {"boundary_max_residual", boundary_max}});
  }
  return {{"max_residual", r.max_residual},
          {"mean_residual", r.mean_residual},
          {"interior_count", r.interior_count},
          {"faces", faces}};
}

}  // namespace pomc::io
