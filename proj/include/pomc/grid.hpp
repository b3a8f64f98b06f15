#pragma once

// Per-face simplex lattices with piecewise-linear (Kuhn) interpolation, and
// the ValueTable that carries functions on the effective simplex.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <numeric>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "pomc/belief.hpp"
#include "pomc/model.hpp"

namespace pomc {

/// Interpolation stencil: at most d (node, weight) pairs with weights >= 0 summing to 1.
struct Stencil {
  std::vector<std::pair<std::size_t, double>> terms;

  double apply(std::span<const double> values) const {
    double s = 0.0;
    for (const auto& [node, w] : terms) s += w * values[node];
    return s;
  }
};

namespace detail {

inline std::size_t binomial(std::size_t n, std::size_t k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  std::size_t r = 1;
  for (std::size_t i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

}  // namespace detail

/// Lattice {rho in Delta_a : n*rho_i integer} on every face.
///
/// A node on a face with d states is stored through its lattice coordinates
/// x_k = n * (rho_{k+1} + ... + rho_{d-1}) for k = 0..d-2 (0-based face
/// positions), which satisfy n >= x_0 >= x_1 >= ... >= 0. Nodes are numbered
/// in lexicographic order of x, so the rank is a closed-form sum of
/// binomials. Cells are the Kuhn simplices of the unit cubes in x.
class SimplexGrid {
 public:
  SimplexGrid(const ModelSpec& model, std::size_t resolution) : n_(resolution), n_states_(model.n_states()) {
    if (resolution < 1) throw std::invalid_argument("grid resolution must be >= 1");
    std::size_t offset = 0;
    for (std::size_t a = 0; a < model.n_observations(); ++a) {
      FaceInfo f;
      f.states.assign(model.face(a).begin(), model.face(a).end());
      f.offset = offset;
      const std::size_t m = f.states.size() - 1;
      f.count = detail::binomial(n_ + m, m);
      offset += f.count;
      faces_.push_back(std::move(f));
    }
    node_face_.resize(offset);
    coords_.resize(offset);
    for (std::size_t a = 0; a < faces_.size(); ++a) {
      const std::size_t m = faces_[a].states.size() - 1;
      std::vector<int> x(m, 0);
      std::size_t idx = faces_[a].offset;
      enumerate(x, 0, static_cast<int>(n_), [&](const std::vector<int>& c) {
        node_face_[idx] = a;
        coords_[idx] = c;
        ++idx;
      });
    }
  }

  std::size_t resolution() const noexcept { return n_; }
  std::size_t n_nodes() const noexcept { return coords_.size(); }
  std::size_t n_faces() const noexcept { return faces_.size(); }
  std::size_t n_states() const noexcept { return n_states_; }
  std::size_t face_offset(std::size_t a) const { return faces_.at(a).offset; }
  std::size_t face_node_count(std::size_t a) const { return faces_.at(a).count; }
  std::span<const std::size_t> face_states(std::size_t a) const { return faces_.at(a).states; }

  std::size_t node_face(std::size_t node) const { return node_face_.at(node); }
  const std::vector<int>& node_coords(std::size_t node) const { return coords_.at(node); }

  /// Index of the node with lattice coordinates `x` on face a.
  std::size_t node_index(std::size_t a, std::span<const int> x) const {
    const auto& f = faces_.at(a);
    const std::size_t m = f.states.size() - 1;
    std::size_t rank = 0;
    for (std::size_t p = 0; p < m; ++p) {
      const std::size_t rest = m - 1 - p;
      rank += detail::binomial(static_cast<std::size_t>(x[p]) + rest, rest + 1);
    }
    return f.offset + rank;
  }

  /// Whether `x` is a lattice point of face a.
  bool contains(std::size_t a, std::span<const int> x) const {
    int prev = static_cast<int>(n_);
    for (int v : x) {
      if (v < 0 || v > prev) return false;
      prev = v;
    }
    return x.size() + 1 == faces_.at(a).states.size();
  }

  /// Whether every face-local coordinate of the node is at least 1/n. A
  /// one-point face counts as interior.
  bool is_interior(std::size_t node) const {
    const auto& x = coords_.at(node);
    int prev = static_cast<int>(n_);
    for (int v : x) {
      if (prev - v < 1) return false;
      prev = v;
    }
    return x.empty() || prev >= 1;
  }

  /// Face-local barycentric coordinates of a node (exact rationals k/n).
  std::vector<double> node_local_weights(std::size_t node) const {
    const auto& x = coords_.at(node);
    const std::size_t d = x.size() + 1;
    std::vector<double> rho(d);
    const double n = static_cast<double>(n_);
    int prev = static_cast<int>(n_);
    for (std::size_t k = 0; k + 1 < d; ++k) {
      rho[k] = static_cast<double>(prev - x[k]) / n;
      prev = x[k];
    }
    rho[d - 1] = static_cast<double>(prev) / n;
    return rho;
  }

  Belief node_belief(std::size_t node) const {
    const std::size_t a = node_face_.at(node);
    Belief b{a, std::vector<double>(n_states_, 0.0)};
    const auto rho = node_local_weights(node);
    for (std::size_t k = 0; k < rho.size(); ++k) b.weights[faces_[a].states[k]] = rho[k];
    return b;
  }

  /// Piecewise-linear interpolation stencil at a point of face a, given its
  /// full-length weights (entries off the face are ignored).
  Stencil stencil(std::size_t a, std::span<const double> weights) const {
    const auto& f = faces_.at(a);
    const std::size_t m = f.states.size() - 1;
    Stencil s;
    if (m == 0) {
      s.terms.emplace_back(f.offset, 1.0);
      return s;
    }
    const double n = static_cast<double>(n_);
    std::vector<double> x(m);
    double suffix = 0.0;
    for (std::size_t k = m; k-- > 0;) {
      suffix += std::max(0.0, weights[f.states[k + 1]]);
      x[k] = std::clamp(n * suffix, 0.0, n);
    }
    double total = suffix + std::max(0.0, weights[f.states[0]]);
    if (total > 0.0 && total != 1.0)
      for (auto& v : x) v = std::clamp(v / total, 0.0, n);
    for (std::size_t k = 1; k < m; ++k) x[k] = std::min(x[k], x[k - 1]);
    // Snap coordinates that sit on a lattice plane up to rounding.
    for (auto& v : x)
      if (std::abs(v - std::round(v)) < 1e-11 * n) v = std::round(v);

    std::vector<int> base(m);
    std::vector<double> frac(m);
    for (std::size_t k = 0; k < m; ++k) {
      double fl = std::floor(x[k]);
      if (fl >= n) fl = n - 1.0;
      base[k] = static_cast<int>(fl);
      frac[k] = x[k] - fl;
    }
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t p, std::size_t q) { return frac[p] > frac[q]; });

    std::vector<int> v = base;
    double w0 = 1.0 - frac[order[0]];
    s.terms.emplace_back(node_index(a, v), w0);
    for (std::size_t j = 0; j < m; ++j) {
      v[order[j]] += 1;
      const double w = frac[order[j]] - (j + 1 < m ? frac[order[j + 1]] : 0.0);
      s.terms.emplace_back(node_index(a, v), w);
    }
    // Drop zero weights so stencils only reference real neighbours.
    std::erase_if(s.terms, [](const auto& t) { return t.second <= 0.0; });
    if (s.terms.empty()) s.terms.emplace_back(node_index(a, base), 1.0);
    return s;
  }

  Stencil stencil(const Belief& b) const { return stencil(b.face, b.weights); }

  /// Node carrying the largest interpolation weight at `b` (lowest index on ties).
  std::size_t nearest_node(const Belief& b) const {
    const auto s = stencil(b);
    std::size_t best = s.terms.front().first;
    double wbest = s.terms.front().second;
    for (const auto& [node, w] : s.terms)
      if (w > wbest || (w == wbest && node < best)) {
        best = node;
        wbest = w;
      }
    return best;
  }

 private:
  struct FaceInfo {
    std::vector<std::size_t> states;
    std::size_t offset = 0;
    std::size_t count = 0;
  };

  template <class Fn>
  static void enumerate(std::vector<int>& x, std::size_t pos, int bound, Fn&& fn) {
    if (pos == x.size()) {
      fn(x);
      return;
    }
    for (int v = 0; v <= bound; ++v) {
      x[pos] = v;
      enumerate(x, pos + 1, v, fn);
    }
  }

  std::size_t n_;
  std::size_t n_states_;
  std::vector<FaceInfo> faces_;
  std::vector<std::size_t> node_face_;
  std::vector<std::vector<int>> coords_;
};

inline SimplexGrid build_grid(const ModelSpec& model, std::size_t resolution) {
  return SimplexGrid(model, resolution);
}

struct SolveMetadata {
  std::size_t iterations = 0;
  double residual = 0.0;
  double contraction_estimate = 0.0;
  double step_contraction = 0.0;
  std::size_t boundary_events = 0;
  std::vector<double> history;
};

/// Nodal values of a function on the effective simplex.
struct ValueTable {
  std::shared_ptr<const SimplexGrid> grid;
  std::vector<double> values;
  SolveMetadata metadata;

  static ValueTable constant(std::shared_ptr<const SimplexGrid> g, double c) {
    ValueTable t{std::move(g), {}, {}};
    t.values.assign(t.grid->n_nodes(), c);
    return t;
  }

  double interpolate(const Belief& b) const { return grid->stencil(b).apply(values); }
  double interpolate(std::size_t face, std::span<const double> weights) const {
    return grid->stencil(face, weights).apply(values);
  }
};

/// Sup-norm distance between two tables on the same grid.
inline double sup_distance(const ValueTable& a, const ValueTable& b) {
  if (a.values.size() != b.values.size()) throw std::invalid_argument("tables live on different grids");
  double d = 0.0;
  for (std::size_t k = 0; k < a.values.size(); ++k) d = std::max(d, std::abs(a.values[k] - b.values[k]));
  return d;
}

}  // namespace pomc
