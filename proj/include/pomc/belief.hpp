#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "pomc/model.hpp"

namespace pomc {

/// A point of the effective simplex: a face label plus a probability
/// vector over all states that vanishes off h^{-1}(face).
struct Belief {
  std::size_t face = 0;
  std::vector<double> weights;

  bool operator==(const Belief&) const = default;
};

/// True when `b` lies on its face within `tol` (entries off the face must be exactly 0).
inline bool is_valid_belief(const ModelSpec& model, const Belief& b, double tol = 1e-9) {
  if (b.face >= model.n_observations() || b.weights.size() != model.n_states()) return false;
  double total = 0.0;
  for (std::size_t i = 0; i < b.weights.size(); ++i) {
    const double w = b.weights[i];
    if (!std::isfinite(w) || w < 0.0) return false;
    if (model.observation_of(i) != b.face && w != 0.0) return false;
    total += w;
  }
  return std::abs(total - 1.0) <= tol;
}

/// Unit mass at state i, on face h(i).
inline Belief vertex_belief(const ModelSpec& model, std::size_t i) {
  Belief b{model.observation_of(i), std::vector<double>(model.n_states(), 0.0)};
  b.weights[i] = 1.0;
  return b;
}

/// Uniform law on h^{-1}(a); the arbitrary measure used by the degenerate branch of H_a.
inline Belief uniform_belief(const ModelSpec& model, std::size_t a) {
  Belief b{a, std::vector<double>(model.n_states(), 0.0)};
  const auto states = model.face(a);
  for (std::size_t i : states) b.weights[i] = 1.0 / static_cast<double>(states.size());
  return b;
}

/// Builds a belief on `face` from full-length weights, checking support.
inline Belief make_belief(const ModelSpec& model, std::size_t face, std::vector<double> weights) {
  Belief b{face, std::move(weights)};
  if (!is_valid_belief(model, b)) throw std::invalid_argument("weights are not a probability vector on the face");
  return b;
}

}  // namespace pomc
