#pragma once

// Subcommands of the `pomc` tool. Each returns a process exit status and
// writes its artifacts below `out`.
//
// Exit status: 0 success, 1 unreadable input, 2 invalid model,
// 3 value iteration did not converge, 4 missing artifacts for verify,
// 5 explosion guard, 6 a verification check failed.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "pomc/pomc.hpp"

namespace pomc::cli {

enum ExitCode : int {
  kOk = 0,
  kIoError = 1,
  kInvalidModel = 2,
  kNonConvergence = 3,
  kMissingArtifacts = 4,
  kExplosion = 5,
  kCheckFailed = 6,
};

struct Config {
  std::string model;
  std::string out = ".";
  std::uint64_t seed = 0;
  std::size_t n_grid = 16;
  double step = 1e-3;
  double bellman_step = kDefaultBellmanStep;
  double tol = kDefaultTolerance;
  std::size_t max_iter = 1'000'000;
  std::optional<double> horizon;
  std::size_t replicates = 10000;
  double dwell = kDefaultDwell;
  std::size_t threads = 0;
  std::string initial_laws;
  /// simulate: fixed action id instead of the policy artifact.
  std::string action;
  /// simulate: how many chain and PDP trajectories to export.
  std::size_t export_count = 10;
};

namespace detail {

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::ios_base::failure("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

/// Knobs that affect results. Output paths and thread counts are excluded
/// so reruns elsewhere or with more workers hash identically.
inline nlohmann::json config_json(const Config& c) {
  return {{"seed", c.seed},
          {"n_grid", c.n_grid},
          {"step", c.step},
          {"bellman_step", c.bellman_step},
          {"tol", c.tol},
          {"max_iter", c.max_iter},
          {"horizon", c.horizon ? nlohmann::json(*c.horizon) : nlohmann::json(nullptr)},
          {"replicates", c.replicates},
          {"dwell", c.dwell},
          {"action", c.action}};
}

struct Context {
  ModelSpec model;
  std::string hash;
  std::filesystem::path out;
};

inline Context open(const Config& c) {
  const std::string bytes = read_file(c.model);
  Context ctx{load_model(bytes), io::config_hash(config_json(c), bytes), c.out};
  std::filesystem::create_directories(ctx.out);
  return ctx;
}

inline void write_json(const std::filesystem::path& path, nlohmann::json doc, const std::string& hash) {
  doc["config_hash"] = hash;
  std::ofstream(path) << doc.dump(2) << '\n';
}

inline double horizon_of(const Config& c, const ModelSpec& m) { return c.horizon.value_or(default_horizon(m)); }

inline SimulationOptions sim_options(const Config& c) {
  SimulationOptions o;
  o.flow_step = c.step;
  o.threads = c.threads ? c.threads : default_thread_count();
  return o;
}

/// Initial laws from a JSON file: either a list of probability vectors or
/// an object name -> vector. Without a file, the uniform law.
inline std::vector<std::pair<std::string, InitialLaw>> initial_laws(const Config& c, const ModelSpec& m) {
  std::vector<std::pair<std::string, InitialLaw>> out;
  if (c.initial_laws.empty()) {
    out.emplace_back("uniform", InitialLaw{std::vector<double>(m.n_states(), 1.0 / static_cast<double>(m.n_states()))});
    return out;
  }
  const auto doc = nlohmann::json::parse(read_file(c.initial_laws));
  if (doc.is_array()) {
    for (std::size_t k = 0; k < doc.size(); ++k)
      out.emplace_back(std::to_string(k), InitialLaw{doc[k].get<std::vector<double>>()});
  } else {
    for (const auto& [name, v] : doc.items()) out.emplace_back(name, InitialLaw{v.get<std::vector<double>>()});
  }
  for (const auto& [name, law] : out) validate_initial_law(m, law);
  if (out.empty()) throw std::invalid_argument("initial laws file lists no law");
  return out;
}

inline std::shared_ptr<const SimplexGrid> grid(const ModelSpec& m, std::size_t n) {
  return std::make_shared<const SimplexGrid>(m, n);
}

}  // namespace detail

inline int cmd_validate(const Config& c, std::ostream& out) {
  std::string bytes;
  try {
    bytes = detail::read_file(c.model);
  } catch (const std::exception& e) {
    out << nlohmann::json{{"valid", false}, {"error", e.what()}}.dump(2) << '\n';
    return kIoError;
  }
  const std::string hash = io::config_hash(detail::config_json(c), bytes);
  nlohmann::json report;
  int code = kOk;
  try {
    const auto m = load_model(bytes);
    const auto conv = check_convexity_conditions(m);
    auto opt = [](const std::optional<bool>& b) { return b ? nlohmann::json(*b) : nlohmann::json("unknown"); };
    report = {{"valid", true},
              {"states", m.n_states()},
              {"observations", m.n_observations()},
              {"actions", m.n_actions()},
              {"rate_bound", m.rate_bound()},
              {"cost_bound", m.cost_bound()},
              {"rate_lipschitz", m.rate_lipschitz()},
              {"convexity",
               {{"interval_u", opt(conv.interval_u)},
                {"rates_linear", opt(conv.rates_linear)},
                {"cost_convex", opt(conv.cost_convex)}}}};
  } catch (const ModelError& e) {
    static const char* kinds[] = {"schema", "q_matrix", "observation", "value"};
    report = {{"valid", false}, {"kind", kinds[static_cast<int>(e.kind())]}, {"error", e.what()}};
    code = kInvalidModel;
  }
  report["config_hash"] = hash;
  out << report.dump(2) << '\n';
  if (!c.out.empty() && c.out != "-") {
    std::filesystem::create_directories(c.out);
    std::ofstream(std::filesystem::path(c.out) / "validation.json") << report.dump(2) << '\n';
  }
  return code;
}

inline int cmd_solve(const Config& c, std::ostream& out) {
  const auto ctx = detail::open(c);
  const auto& m = ctx.model;
  const auto laws = detail::initial_laws(c, m);
  const DiscreteBellman op(m, detail::grid(m, c.n_grid), c.bellman_step);
  SolveOptions opt;
  opt.bellman_step = c.bellman_step;
  opt.tol = c.tol;
  opt.max_iter = c.max_iter;
  ValueTable v;
  try {
    v = solve_value(op, opt);
  } catch (const NonConvergenceError& e) {
    detail::write_json(ctx.out / "solve_report.json",
                       {{"converged", false}, {"error", e.what()}, {"residual_history", e.history()}}, ctx.hash);
    out << "value iteration did not converge; see solve_report.json\n";
    return kNonConvergence;
  }
  const auto policy = extract_policy(op, v, c.dwell);
  {
    std::ofstream f(ctx.out / "value_table.csv");
    io::write_value_table(f, m, v, ctx.hash);
  }
  {
    std::ofstream f(ctx.out / "policy.csv");
    io::write_policy(f, m, policy, ctx.hash);
  }
  auto report = io::to_json(v.metadata);
  report["converged"] = true;
  report["n_grid"] = c.n_grid;
  report["bellman_step"] = c.bellman_step;
  report["contraction_bound"] = m.rate_bound() / (m.beta() + m.rate_bound());
  nlohmann::json values = nlohmann::json::object();
  for (const auto& [name, law] : laws) {
    const double V = assemble_V(m, v, law);
    values[name] = {{"mu", law.mu}, {"V", V}};
    out << "V(" << name << ") = " << io::fmt(V) << '\n';
  }
  report["values"] = values;
  detail::write_json(ctx.out / "solve_report.json", report, ctx.hash);
  return kOk;
}

inline int cmd_simulate(const Config& c, std::ostream& out) {
  const auto ctx = detail::open(c);
  const auto& m = ctx.model;
  const auto laws = detail::initial_laws(c, m);
  const InitialLaw& mu = laws.front().second;
  Policy policy;
  if (!c.action.empty()) {
    const auto u = m.find_action(c.action);
    if (!u) throw std::invalid_argument("unknown action '" + c.action + "'");
    policy = PiecewiseConstantControl::constant(*u);
  } else {
    std::ifstream f(ctx.out / "policy.csv");
    if (!f) {
      out << "no policy artifact in " << ctx.out << "; run solve first or pass --action\n";
      return kMissingArtifacts;
    }
    policy = io::read_policy(f, m);
  }
  const double T = detail::horizon_of(c, m);
  const auto opt = detail::sim_options(c);
  try {
    {
      std::ofstream f(ctx.out / "trajectories.csv");
      io::write_trajectory_header(f, ctx.hash);
      const auto q = pdp_initial_law(m, mu);
      std::vector<double> qm;
      for (const auto& e : q) qm.push_back(e.second);
      double qt = 0.0;
      for (double x : qm) qt += x;
      for (std::size_t k = 0; k < c.export_count; ++k) {
        ReplicateRng rc(c.seed, 2 * k);
        io::write_chain_trajectory(f, m, simulate_chain(m, mu, policy, T, rc, opt), k);
        ReplicateRng rp(c.seed, 2 * k + 1);
        const Belief& nu = q[rp.categorical(qm, qt)].first;
        io::write_pdp_trajectory(f, m, simulate_pdp(m, nu, policy, T, rp, opt), k);
      }
    }
    const auto est = estimate_cost(m, mu, policy, c.replicates, T, c.seed, opt);
    auto report = io::to_json(est);
    report["mu"] = mu.mu;
    detail::write_json(ctx.out / "cost_estimate.json", report, ctx.hash);
    out << "J(" << laws.front().first << ") = " << io::fmt(est.mean) << " +- " << io::fmt(est.std_error) << '\n';
  } catch (const ExplosionError& e) {
    out << "explosion guard: " << e.what() << '\n';
    return kExplosion;
  }
  return kOk;
}

/// Thresholds of the verification checks.
struct VerifyThresholds {
  double dpp_floor = 5e-3;
  double dpp_delta_factor = 3.0;
  double law_pvalue = 0.01;
  double sigma = 3.0;
  double dpp_horizon = 0.5;
};

inline int cmd_verify(const Config& c, std::ostream& out, const VerifyThresholds& th = {}) {
  const auto ctx = detail::open(c);
  const auto& m = ctx.model;
  ValueTable v;
  FeedbackPolicy policy;
  {
    std::ifstream tv(ctx.out / "value_table.csv"), tp(ctx.out / "policy.csv");
    if (!tv || !tp) {
      out << "missing value_table.csv or policy.csv in " << ctx.out << "; run solve first\n";
      return kMissingArtifacts;
    }
    try {
      v = io::read_value_table(tv, m);
      policy = io::read_policy(tp, m);
    } catch (const std::exception& e) {
      out << "unreadable artifacts: " << e.what() << '\n';
      return kMissingArtifacts;
    }
  }
  const auto laws = detail::initial_laws(c, m);
  const InitialLaw& mu = laws.front().second;
  const double T = detail::horizon_of(c, m);
  const auto opt = detail::sim_options(c);
  const std::size_t n = v.grid->resolution();

  SolveOptions same_opt, fine_opt;
  same_opt.bellman_step = c.bellman_step;
  same_opt.tol = fine_opt.tol = c.tol;
  fine_opt.bellman_step = 0.5 * c.bellman_step;
  const auto fresh = solve_value(m, detail::grid(m, n), same_opt);
  const auto fine = solve_value(m, detail::grid(m, 2 * n), fine_opt);
  const double delta = refinement_delta(v, fine);
  bool all = true;
  auto record = [&](const char* file, nlohmann::json rep, bool pass) {
    rep["pass"] = pass;
    all = all && pass;
    detail::write_json(ctx.out / file, rep, ctx.hash);
    out << file << ": " << (pass ? "pass" : "FAIL") << '\n';
  };

  {
    const auto r = compare_laws(m, mu, policy, c.replicates, T, c.seed, opt);
    const bool pass = r.ks_tau1_pvalue > th.law_pvalue && r.face_chi2_pvalue > th.law_pvalue &&
                      std::abs(r.mean_cost_delta) < th.sigma * r.pooled_se + 1e-15;
    auto rep = io::to_json(r);
    rep["mu"] = mu.mu;
    record("verify_laws.json", rep, pass);
  }
  {
    const auto r = check_dpp(m, v, th.dpp_horizon, c.step);
    const double limit = std::max(th.dpp_floor, th.dpp_delta_factor * delta);
    auto rep = io::to_json(r);
    rep["refinement_delta"] = delta;
    rep["limit"] = limit;
    record("verify_dpp.json", rep, r.max_interior <= limit);
  }
  {
    const auto stored = check_hjb(m, v);
    const auto base = check_hjb(m, fresh);
    const auto refined = check_hjb(m, fine);
    // The stored table must be as good a fixed point as a fresh solve, and
    // refinement must reduce the residual.
    const bool pass = stored.max_residual <= base.max_residual + 10.0 * c.tol &&
                      (refined.max_residual < base.max_residual || base.max_residual <= 10.0 * c.tol);
    nlohmann::json rep = io::to_json(stored);
    rep["fresh_max_residual"] = base.max_residual;
    rep["refined_max_residual"] = refined.max_residual;
    record("verify_hjb.json", rep, pass);
  }
  {
    const auto est = estimate_cost(m, mu, policy, c.replicates, T, c.seed, opt);
    const double V = assemble_V(m, v, mu);
    const double eps = delta + est.tail_bound;
    const double gap = std::abs(est.mean - V);
    auto rep = io::to_json(est);
    rep["mu"] = mu.mu;
    rep["V_hat"] = V;
    rep["discretization_budget"] = eps;
    rep["gap"] = gap;
    record("verify_closure.json", rep, gap <= th.sigma * est.std_error + eps);
  }
  return all ? kOk : kCheckFailed;
}

}  // namespace pomc::cli
