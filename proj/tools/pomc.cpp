#include <cstdlib>
#include <iostream>

#include "CLI11.hpp"
#include "pomc_commands.hpp"

int main(int argc, char** argv) {
  using namespace pomc::cli;
  CLI::App app{"Optimal control of partially observed continuous-time Markov chains"};
  app.require_subcommand(1);
  Config cfg;
  std::optional<double> horizon;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--model", cfg.model, "model JSON file")->required();
    sub->add_option("--out", cfg.out, "output directory")->capture_default_str();
    sub->add_option("--seed", cfg.seed, "random seed")->capture_default_str();
    sub->add_option("--n-grid", cfg.n_grid, "simplex lattice resolution")->capture_default_str()->check(CLI::PositiveNumber);
    sub->add_option("--step", cfg.step, "flow integration step")->capture_default_str()->check(CLI::PositiveNumber);
    sub->add_option("--bellman-step", cfg.bellman_step, "time step of the Bellman scheme")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    sub->add_option("--tol", cfg.tol, "value iteration tolerance")->capture_default_str()->check(CLI::PositiveNumber);
    sub->add_option("--max-iter", cfg.max_iter, "value iteration cap")->capture_default_str();
    sub->add_option("--horizon", horizon, "simulation horizon (default: tail bound 1e-4)")->check(CLI::PositiveNumber);
    sub->add_option("--replicates", cfg.replicates, "Monte Carlo replicates")->capture_default_str()->check(CLI::Range(2u, 1000000000u));
    sub->add_option("--dwell", cfg.dwell, "feedback refresh interval")->capture_default_str()->check(CLI::PositiveNumber);
    sub->add_option("--threads", cfg.threads, "worker threads (default: $POMC_DEFAULT_THREADS or 1)");
    sub->add_option("--initial-laws", cfg.initial_laws, "JSON file of initial laws");
  };

  auto* validate = app.add_subcommand("validate", "check a model file");
  auto* solve = app.add_subcommand("solve", "compute the value table and a feedback policy");
  auto* simulate = app.add_subcommand("simulate", "simulate trajectories and estimate the cost");
  auto* verify = app.add_subcommand("verify", "run the law, DPP, HJB and closure checks");
  for (auto* sub : {validate, solve, simulate, verify}) add_common(sub);
  simulate->add_option("--action", cfg.action, "fixed action id instead of the policy artifact");
  simulate->add_option("--export", cfg.export_count, "number of trajectories to export")->capture_default_str();

  CLI11_PARSE(app, argc, argv);
  cfg.horizon = horizon;

  try {
    if (*validate) return cmd_validate(cfg, std::cout);
    if (*solve) return cmd_solve(cfg, std::cout);
    if (*simulate) return cmd_simulate(cfg, std::cout);
    if (*verify) return cmd_verify(cfg, std::cout);
  } catch (const pomc::ModelError& e) {
    std::cerr << "invalid model: " << e.what() << '\n';
    return kInvalidModel;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIoError;
  }
  return kOk;
}
