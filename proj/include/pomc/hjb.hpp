#pragma once

// Pointwise HJB residual of a value table: beta v(nu) + H(nu, Dv(nu), v).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "pomc/belief.hpp"
#include "pomc/filter.hpp"
#include "pomc/grid.hpp"
#include "pomc/model.hpp"

namespace pomc {

/// H(nu, b, w) = max_u { -F(nu,u).b - nu.f(u) - r(nu,u) int [w(p) - w(nu)] R(nu,u;dp) }.
inline double hamiltonian(const ModelSpec& model, const Belief& nu, std::span<const double> grad,
                          const ValueTable& w) {
  const double w_here = w.interpolate(nu);
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t u = 0; u < model.n_actions(); ++u) {
    const auto F = vector_field(model, nu, u);
    double transport = 0.0;
    for (std::size_t j = 0; j < F.size(); ++j) transport += F[j] * grad[j];
    const double r = jump_rate(model, nu, u);
    double jump = 0.0;
    if (r > 0.0) {
      for (const auto& t : jump_kernel(model, nu, u)) jump += t.prob * (w.interpolate(t.target) - w_here);
      jump *= r;
    }
    const double value = -transport - detail::face_cost(model, nu.face, nu.weights, u) - jump;
    best = std::max(best, value);
  }
  return best;
}

namespace detail {

/// Lattice-direction finite differences; central where both neighbours
/// exist, one-sided otherwise (0 if neither).
inline std::vector<double> lattice_gradient(const ValueTable& v, std::size_t node, bool require_central) {
  const auto& grid = *v.grid;
  const std::size_t a = grid.node_face(node);
  const auto states = grid.face_states(a);
  const std::size_t m = states.size() - 1;
  const double n = static_cast<double>(grid.resolution());
  std::vector<double> out(grid.n_states(), 0.0);
  if (m == 0) return out;

  const auto& x = grid.node_coords(node);
  std::vector<double> local(m + 1, 0.0);
  for (std::size_t k = 0; k < m; ++k) {
    std::vector<int> plus = x, minus = x;
    plus[k] += 1;
    minus[k] -= 1;
    const bool hp = grid.contains(a, plus), hm = grid.contains(a, minus);
    if (require_central && !(hp && hm)) throw std::invalid_argument("node is not interior");
    double d = 0.0;
    if (hp && hm)
      d = 0.5 * (v.values[grid.node_index(a, plus)] - v.values[grid.node_index(a, minus)]);
    else if (hp)
      d = v.values[grid.node_index(a, plus)] - v.values[node];
    else if (hm)
      d = v.values[node] - v.values[grid.node_index(a, minus)];
    // Moving x_k by +1 moves rho along (e_{k+1} - e_k) / n.
    local[k + 1] = local[k] + n * d;
  }
  double mean = 0.0;
  for (double g : local) mean += g;
  mean /= static_cast<double>(local.size());
  for (std::size_t k = 0; k <= m; ++k) out[states[k]] = local[k] - mean;
  return out;
}

}  // namespace detail

/// Tangential gradient of v at an interior node by central differences,
/// embedded in R^{|I|} with zero mean over the face and zeros off it.
inline std::vector<double> face_gradient(const ValueTable& v, std::size_t node) {
  if (!v.grid->is_interior(node)) throw std::invalid_argument("node is not interior");
  return detail::lattice_gradient(v, node, true);
}

struct HjbNode {
  std::size_t node = 0;
  Belief belief;
  double residual = 0.0;
};

struct HjbFaceSummary {
  double max_residual = 0.0;
  double mean_residual = 0.0;
  std::vector<HjbNode> nodes;
  /// Residuals at boundary nodes with one-sided differences; informational.
  std::vector<HjbNode> boundary_nodes;
};

struct HjbReport {
  std::vector<HjbFaceSummary> faces;
  double max_residual = 0.0;
  double mean_residual = 0.0;
  std::size_t interior_count = 0;
};

inline double hjb_residual(const ModelSpec& model, const ValueTable& v, std::size_t node, bool interior) {
  const Belief nu = v.grid->node_belief(node);
  const auto grad = detail::lattice_gradient(v, node, interior);
  return model.beta() * v.values[node] + hamiltonian(model, nu, grad, v);
}

/// Residuals on all interior nodes (every face-local coordinate >= 1/n).
inline HjbReport check_hjb(const ModelSpec& model, const ValueTable& v) {
  const auto& grid = *v.grid;
  HjbReport rep;
  rep.faces.resize(grid.n_faces());
  double total = 0.0;
  for (std::size_t node = 0; node < grid.n_nodes(); ++node) {
    auto& face = rep.faces[grid.node_face(node)];
    const bool interior = grid.is_interior(node);
    HjbNode entry{node, grid.node_belief(node), hjb_residual(model, v, node, interior)};
    if (interior) {
      face.max_residual = std::max(face.max_residual, std::abs(entry.residual));
      face.mean_residual += std::abs(entry.residual);
      rep.max_residual = std::max(rep.max_residual, std::abs(entry.residual));
      total += std::abs(entry.residual);
      ++rep.interior_count;
      face.nodes.push_back(std::move(entry));
    } else {
      face.boundary_nodes.push_back(std::move(entry));
    }
  }
  for (auto& f : rep.faces)
    if (!f.nodes.empty()) f.mean_residual /= static_cast<double>(f.nodes.size());
  if (rep.interior_count > 0) rep.mean_residual = total / static_cast<double>(rep.interior_count);
  return rep;
}

}  // namespace pomc
