#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "pomc/filter.hpp"
#include "pomc/grid.hpp"
#include "test_support.hpp"

using namespace pomc;
using pomc::test::canonical;

namespace {

Belief on_a(double p1) { return make_belief(canonical(), 0, {p1, 1.0 - p1, 0.0}); }

/// Discrete-time conditional law of X given that Y stays on `face`, with
/// transition matrix I + Lambda dt. Returns the law after `steps` steps.
Eigen::RowVectorXd hmm_no_exit(const ModelSpec& m, std::size_t u, Eigen::RowVectorXd p, std::size_t face, double dt,
                               std::size_t steps) {
  const std::size_t n = m.n_states();
  Eigen::MatrixXd P = Eigen::MatrixXd::Identity(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) P(i, j) += m.rate(u, i, j) * dt;
  for (std::size_t k = 0; k < steps; ++k) {
    p = p * P;
    for (std::size_t i = 0; i < n; ++i)
      if (m.observation_of(i) != face) p(i) = 0.0;
    p /= p.sum();
  }
  return p;
}

}  // namespace

TEST(VectorField, HandEvaluatedAtFirstVertex) {
  const auto F = vector_field(canonical(), vertex_belief(canonical(), 0), 0);
  EXPECT_DOUBLE_EQ(F[0], -1.0);
  EXPECT_DOUBLE_EQ(F[1], 1.0);
  EXPECT_DOUBLE_EQ(F[2], 0.0);
}

TEST(VectorField, VanishesOnOnePointFace) {
  for (std::size_t u = 0; u < 3; ++u)
    for (double x : vector_field(canonical(), vertex_belief(canonical(), 2), u)) EXPECT_EQ(x, 0.0);
}

TEST(VectorField, SumsToZero) {
  std::mt19937_64 g(3);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (int k = 0; k < 1000; ++k) {
    const auto F = vector_field(canonical(), on_a(U(g)), k % 3);
    EXPECT_LE(std::abs(F[0] + F[1] + F[2]), 1e-14);
  }
}

TEST(JumpRate, HandEvaluatedAndNonnegative) {
  EXPECT_DOUBLE_EQ(jump_rate(canonical(), vertex_belief(canonical(), 0), 0), 0.5);
  EXPECT_DOUBLE_EQ(jump_rate(canonical(), vertex_belief(canonical(), 1), 0), 1.0);
  EXPECT_DOUBLE_EQ(jump_rate(canonical(), vertex_belief(canonical(), 2), 2), 2.0);
  const SimplexGrid grid(canonical(), 16);
  for (std::size_t node = 0; node < grid.n_nodes(); ++node)
    for (std::size_t u = 0; u < 3; ++u) EXPECT_GE(jump_rate(canonical(), grid.node_belief(node), u), -1e-14);
}

TEST(JumpRate, LipschitzBound) {
  std::mt19937_64 g(5);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  const double L = canonical().rate_lipschitz();
  for (int k = 0; k < 500; ++k) {
    const auto a = on_a(U(g)), b = on_a(U(g));
    const double dist = std::hypot(a.weights[0] - b.weights[0], a.weights[1] - b.weights[1]);
    for (std::size_t u = 0; u < 3; ++u)
      EXPECT_LE(std::abs(jump_rate(canonical(), a, u) - jump_rate(canonical(), b, u)), L * dist + 1e-15);
  }
}

TEST(JumpKernel, FirstVertexJumpsToThirdState) {
  const auto k = jump_kernel(canonical(), vertex_belief(canonical(), 0), 0);
  ASSERT_EQ(k.size(), 1u);
  EXPECT_EQ(k[0].target, vertex_belief(canonical(), 2));
  EXPECT_DOUBLE_EQ(k[0].prob, 1.0);
}

TEST(JumpKernel, FromThirdStateLandsOnFluxDirection) {
  // rho Lambda(0) at e3 = (0.5, 1, -1.5), restricted to face a.
  const auto k = jump_kernel(canonical(), vertex_belief(canonical(), 2), 0);
  ASSERT_EQ(k.size(), 1u);
  EXPECT_EQ(k[0].target.face, 0u);
  EXPECT_NEAR(k[0].target.weights[0], 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(k[0].target.weights[1], 2.0 / 3.0, 1e-15);
}

TEST(JumpKernel, NormalizedAndOffFace) {
  const SimplexGrid grid(canonical(), 16);
  for (std::size_t node = 0; node < grid.n_nodes(); ++node)
    for (std::size_t u = 0; u < 3; ++u) {
      const auto rho = grid.node_belief(node);
      double total = 0.0;
      for (const auto& t : jump_kernel(canonical(), rho, u)) {
        EXPECT_GE(t.prob, 0.0);
        EXPECT_NE(t.target.face, rho.face);
        EXPECT_TRUE(is_valid_belief(canonical(), t.target));
        total += t.prob;
      }
      EXPECT_LE(std::abs(total - 1.0), 1e-12);
    }
}

TEST(HJump, RestrictsAndRenormalizes) {
  const std::vector<double> mu{0.2, 0.3, 0.5};
  const auto b = h_jump(canonical(), mu, 0);
  EXPECT_NEAR(b.weights[0], 0.4, 1e-15);
  EXPECT_NEAR(b.weights[1], 0.6, 1e-15);
  EXPECT_EQ(b.weights[2], 0.0);
}

TEST(HJump, DegenerateMassGivesUniform) {
  const std::vector<double> mu{0.0, 0.0, 1.0};
  EXPECT_EQ(h_jump(canonical(), mu, 0), uniform_belief(canonical(), 0));
  EXPECT_THROW(h_jump(canonical(), mu, 5), std::out_of_range);
}

TEST(Flow, StaysOnFace) {
  const SimplexGrid grid(canonical(), 8);
  for (std::size_t node = 0; node < grid.n_nodes(); ++node)
    for (std::size_t u = 0; u < 3; ++u) {
      const auto res = integrate_flow(canonical(), grid.node_belief(node), PiecewiseConstantControl::constant(u), 5.0,
                                      1e-3);
      EXPECT_LE(res.max_drift / 5.0, 1e-6);
      for (std::size_t k = 0; k < res.times.size(); ++k) EXPECT_TRUE(is_valid_belief(canonical(), res.belief(k)));
    }
}

TEST(Flow, FourthOrderConvergence) {
  const auto nu = vertex_belief(canonical(), 0);
  const auto alpha = PiecewiseConstantControl::constant(0);
  auto end = [&](double h) { return integrate_flow(canonical(), nu, alpha, 1.0, h).weights.back()[0]; };
  const double e1 = std::abs(end(0.1) - end(0.05));
  const double e2 = std::abs(end(0.05) - end(0.025));
  EXPECT_GE(std::log2(e1 / e2), 3.5);
}

TEST(Flow, SurvivalOnOnePointFaceIsExponential) {
  const auto res = integrate_flow(canonical(), vertex_belief(canonical(), 2), PiecewiseConstantControl::constant(1),
                                  2.0, 1e-3);
  for (std::size_t k = 0; k < res.times.size(); k += 100)
    EXPECT_NEAR(res.survival[k], std::exp(-1.75 * res.times[k]), 1e-12);
}

TEST(Flow, BreakpointsAreSamplePoints) {
  const PiecewiseConstantControl alpha({0.0, 0.3337, 0.9}, {0, 2, 1});
  const auto res = integrate_flow(canonical(), on_a(0.5), alpha, 1.5, 0.01);
  for (double b : alpha.breakpoints())
    EXPECT_NE(std::find(res.times.begin(), res.times.end(), b), res.times.end());
  EXPECT_EQ(res.times.back(), 1.5);
}

TEST(ReplayFilter, PerfectObservationGivesVertices) {
  ModelData d = canonical().data();
  d.observations = {"a", "b", "c"};
  d.h = {0, 1, 2};
  const auto m = ModelSpec::create(d);
  const std::vector<ObservationEvent> path{{0.0, 0}, {0.4, 1}, {1.1, 2}};
  const std::vector<PiecewiseConstantControl> ctl{PiecewiseConstantControl::constant(1)};
  const auto traj = replay_filter(m, {{0.2, 0.3, 0.5}}, path, ctl, 2.0);
  for (const auto& s : traj.samples) {
    const std::size_t expect = s.t < 0.4 ? 0 : (s.t < 1.1 ? 1 : 2);
    EXPECT_EQ(traj.at(s.t).belief, vertex_belief(m, expect)) << "t=" << s.t;
  }
}

TEST(ReplayFilter, MatchesDiscreteOracleWithoutJump) {
  const auto& m = canonical();
  const std::vector<ObservationEvent> path{{0.0, 0}};
  const std::vector<PiecewiseConstantControl> ctl{PiecewiseConstantControl::constant(0)};
  const auto traj = replay_filter(m, {{0.2, 0.3, 0.5}}, path, ctl, 1.0);
  Eigen::RowVectorXd p0(3);
  p0 << 0.4, 0.6, 0.0;
  const auto oracle = hmm_no_exit(m, 0, p0, 0, 1e-4, 10000);
  const auto& pi1 = traj.samples.back();
  EXPECT_DOUBLE_EQ(pi1.t, 1.0);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(pi1.belief.weights[i], oracle(i), 1e-4);
}

TEST(ReplayFilter, JumpAppliesHOfFlux) {
  const auto& m = canonical();
  const std::vector<ObservationEvent> path{{0.0, 0}, {0.3, 1}, {0.8, 0}};
  const std::vector<PiecewiseConstantControl> ctl{PiecewiseConstantControl::constant(2)};
  const auto traj = replay_filter(m, {{0.2, 0.3, 0.5}}, path, ctl, 1.0);
  EXPECT_EQ(traj.at(0.3).belief, vertex_belief(m, 2));
  // From e3 under u = 1: flux (1, 1, -2) restricted to face a.
  const auto& after = traj.at(0.8).belief;
  EXPECT_EQ(after.face, 0u);
  EXPECT_NEAR(after.weights[0], 0.5, 1e-15);
  EXPECT_EQ(traj.at(0.8).chi, 1.0);
}

TEST(ReplayFilter, RejectsInconsistentPaths) {
  const std::vector<PiecewiseConstantControl> ctl{PiecewiseConstantControl::constant(0)};
  const InitialLaw mu{{0.2, 0.3, 0.5}};
  const std::vector<ObservationEvent> late{{0.1, 0}};
  const std::vector<ObservationEvent> repeat{{0.0, 0}, {0.5, 0}};
  const std::vector<ObservationEvent> backwards{{0.0, 0}, {0.5, 1}, {0.5, 0}};
  EXPECT_THROW(replay_filter(canonical(), mu, late, ctl, 1.0), InconsistentPathError);
  EXPECT_THROW(replay_filter(canonical(), mu, repeat, ctl, 1.0), InconsistentPathError);
  EXPECT_THROW(replay_filter(canonical(), mu, backwards, ctl, 1.0), InconsistentPathError);
}

TEST(ContinuityProbe, ZeroRadiusAndConstantTable) {
  const auto grid = std::make_shared<const SimplexGrid>(canonical(), 8);
  const double c = 3.0;
  const auto w = ValueTable::constant(grid, c);
  const auto rho = on_a(0.3);
  const std::vector<double> radii{0.1, 0.05, 0.0};
  const auto rows = continuity_probe(canonical(), w, rho, radii);
  EXPECT_EQ(rows[2].deviation, 0.0);
  for (std::size_t k = 0; k < 2; ++k)
    EXPECT_LE(rows[k].deviation, canonical().rate_lipschitz() * rows[k].radius * c + 1e-12);
}

TEST(ContinuityProbe, DecreasesNearVertex) {
  const auto grid = std::make_shared<const SimplexGrid>(canonical(), 16);
  ValueTable w = ValueTable::constant(grid, 0.0);
  for (std::size_t node = 0; node < grid->n_nodes(); ++node) {
    const auto b = grid->node_belief(node);
    w.values[node] = b.weights[0] * b.weights[0] + 2.0 * b.weights[2];
  }
  const std::vector<double> radii{0.1, 0.05, 0.01};
  const auto rows = continuity_probe(canonical(), w, vertex_belief(canonical(), 0), radii);
  EXPECT_GT(rows[0].deviation, rows[1].deviation);
  EXPECT_GT(rows[1].deviation, rows[2].deviation);
}
