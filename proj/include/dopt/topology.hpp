#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "dopt/rng.hpp"
#include "dopt/types.hpp"

namespace dopt {

// Undirected communication graph. Edges are stored as canonical (i < j)
// pairs in sorted order; every consumer of the edge list (Bernoulli
// sampling in particular) relies on that order for reproducibility.
struct Graph {
  int m = 0;
  std::vector<std::pair<int, int>> edges;
  std::vector<std::array<double, 2>> positions;  // empty unless geometric

  std::vector<int> degrees() const {
    std::vector<int> deg(m, 0);
    for (auto [i, j] : edges) {
      ++deg[i];
      ++deg[j];
    }
    return deg;
  }

  void normalize_edges() {
    for (auto& e : edges)
      if (e.first > e.second) std::swap(e.first, e.second);
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  }
};

// Connectivity/positive-definiteness report for a candidate mixing matrix.
struct SpectralReport {
  double lambda_min = 0.0;
  double lambda_max = 0.0;
  double rho_mix = 0.0;        // spectral radius of W - (1/m) 1 1^T
  double gershgorin_min = 0.0; // min_i (2 W_ii - 1)
  bool symmetric = false;
  bool stochastic = false;
  bool nonnegative = false;
  bool passes_assumption1 = false;
};

struct LinkFailureModel {
  double p = 1.0;  // per-link activation probability
};

// m points uniform in the unit square; edge iff distance <= r*sqrt(log m / m).
// Disconnected output is allowed; run validate_weights to check mixing.
inline Graph random_geometric_graph(int m, double r, std::uint64_t seed) {
  require(m >= 2, "random_geometric_graph: need m >= 2");
  require(r > 0.0, "random_geometric_graph: need r > 0");
  RngStream rng = RngStream::labeled(seed, "geometric-graph");
  Graph g;
  g.m = m;
  g.positions.resize(m);
  for (int i = 0; i < m; ++i) {
    g.positions[i][0] = rng.uniform();
    g.positions[i][1] = rng.uniform();
  }
  const double radius = r * std::sqrt(std::log(static_cast<double>(m)) / m);
  for (int i = 0; i < m; ++i) {
    for (int j = i + 1; j < m; ++j) {
      const double dx = g.positions[i][0] - g.positions[j][0];
      const double dy = g.positions[i][1] - g.positions[j][1];
      if (std::sqrt(dx * dx + dy * dy) <= radius) g.edges.emplace_back(i, j);
    }
  }
  return g;
}

// Modified Metropolis-Hastings weights:
//   w_ij = 1 / (2 max{d_i, d_j}) on edges, w_ii = 1 - sum_j w_ij.
// Diagonal entries are >= 1/2 by construction, so the matrix is positive
// semidefinite with at most a zero eigenvalue in degenerate regular cases.
inline Matrix metropolis_weights(const Graph& g) {
  const auto deg = g.degrees();
  Matrix w = Matrix::Zero(g.m, g.m);
  for (auto [i, j] : g.edges) {
    const double v = 1.0 / (2.0 * std::max(deg[i], deg[j]));
    w(i, j) = v;
    w(j, i) = v;
  }
  for (int i = 0; i < g.m; ++i) w(i, i) = 1.0 - w.row(i).sum();
  return w;
}

// W <- (1-beta) W + beta I. Restores strict positive-definiteness for
// degenerate regular graphs (e.g. m=2) where lambda_min(W) = 0.
inline Matrix blend_with_identity(const Matrix& w, double beta) {
  require(beta >= 0.0 && beta < 1.0, "blend_with_identity: beta in [0,1)");
  return (1.0 - beta) * w + beta * Matrix::Identity(w.rows(), w.cols());
}

inline SpectralReport validate_weights(const Matrix& w, double tol = 1e-10) {
  require(w.rows() == w.cols(), "validate_weights: matrix must be square");
  const int m = static_cast<int>(w.rows());
  SpectralReport rep;
  rep.symmetric = (w - w.transpose()).cwiseAbs().maxCoeff() == 0.0;
  rep.nonnegative = w.minCoeff() >= 0.0;
  rep.stochastic =
      (w.rowwise().sum() - Vector::Ones(m)).cwiseAbs().maxCoeff() <= 1e-12;
  // Report spectra of the symmetrized matrix so a non-symmetric input still
  // yields a (failing) report instead of garbage.
  const Matrix ws = 0.5 * (w + w.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(ws);
  rep.lambda_min = es.eigenvalues().minCoeff();
  rep.lambda_max = es.eigenvalues().maxCoeff();
  const Matrix shifted = ws - Matrix::Constant(m, m, 1.0 / m);
  Eigen::SelfAdjointEigenSolver<Matrix> es2(shifted);
  rep.rho_mix = es2.eigenvalues().cwiseAbs().maxCoeff();
  rep.gershgorin_min = std::numeric_limits<double>::infinity();
  for (int i = 0; i < m; ++i)
    rep.gershgorin_min = std::min(rep.gershgorin_min, 2.0 * w(i, i) - 1.0);
  rep.passes_assumption1 = rep.symmetric && rep.nonnegative && rep.stochastic &&
                           rep.lambda_min > tol && rep.rho_mix < 1.0 - tol;
  return rep;
}

// Canonical edge list of a mixing matrix: (i < j) pairs with w_ij > 0,
// lexicographically sorted.
inline std::vector<std::pair<int, int>> support_edges(const Matrix& w) {
  std::vector<std::pair<int, int>> edges;
  for (int i = 0; i < w.rows(); ++i)
    for (int j = i + 1; j < w.cols(); ++j)
      if (w(i, j) > 0.0) edges.emplace_back(i, j);
  return edges;
}

// Apply a link up/down mask: the off-diagonal weight of a failed edge is
// folded into both endpoint diagonals, which keeps the matrix symmetric,
// row-stochastic and only grows the diagonal (so lambda_min never drops
// below the base value). mask[e] follows the canonical edge order.
inline Matrix apply_link_mask(const Matrix& base,
                              const std::vector<std::pair<int, int>>& edges,
                              const std::vector<bool>& mask) {
  require(mask.size() == edges.size(), "apply_link_mask: mask/edge mismatch");
  Matrix w = base;
  for (std::size_t e = 0; e < edges.size(); ++e) {
    if (mask[e]) continue;
    const auto [i, j] = edges[e];
    const double v = w(i, j);
    w(i, j) = 0.0;
    w(j, i) = 0.0;
    w(i, i) += v;
    w(j, j) += v;
  }
  return w;
}

// One i.i.d. sample W_k: each support edge of `base` stays up independently
// with probability fm.p. Consumes exactly one draw per edge in canonical
// order. With p=1 the result is bitwise equal to `base`.
inline Matrix sample_network(const Matrix& base, const LinkFailureModel& fm,
                             RngStream& rng) {
  require(fm.p >= 0.0 && fm.p <= 1.0, "sample_network: p in [0,1]");
  const auto edges = support_edges(base);
  std::vector<bool> mask(edges.size());
  for (std::size_t e = 0; e < edges.size(); ++e) mask[e] = rng.bernoulli(fm.p);
  return apply_link_mask(base, edges, mask);
}

// Closed-form mean of the sampled sequence: E[W_k] = p*base + (1-p)*I.
inline Matrix expected_weight_matrix(const Matrix& base, double p) {
  require(p >= 0.0 && p <= 1.0, "expected_weight_matrix: p in [0,1]");
  return p * base + (1.0 - p) * Matrix::Identity(base.rows(), base.cols());
}

// ---------------------------------------------------------------------------
// Edge-list text format: header "m=<count>", then one line per edge
// "i j [weight]" with 0-based indices. If any weight is omitted the loader
// reports has_weights = false and callers recompute Metropolis weights.

struct EdgeListData {
  Graph graph;
  Matrix weights;     // valid only when has_weights
  bool has_weights = false;
};

inline void save_edge_list(const Graph& g, const Matrix* w,
                           const std::string& path) {
  std::ofstream out(path);
  require(out.good(), "save_edge_list: cannot open " + path);
  out << "m=" << g.m << "\n";
  char buf[64];
  for (auto [i, j] : g.edges) {
    if (w != nullptr) {
      std::snprintf(buf, sizeof(buf), "%.17g", (*w)(i, j));
      out << i << " " << j << " " << buf << "\n";
    } else {
      out << i << " " << j << "\n";
    }
  }
}

inline EdgeListData load_edge_list(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "load_edge_list: cannot open " + path);
  std::string line;
  require(static_cast<bool>(std::getline(in, line)),
          "load_edge_list: empty file " + path);
  require(line.rfind("m=", 0) == 0, "load_edge_list: missing m= header");
  EdgeListData data;
  data.graph.m = std::stoi(line.substr(2));
  require(data.graph.m >= 1, "load_edge_list: bad agent count");
  std::vector<std::pair<std::pair<int, int>, double>> weighted;
  bool any_weight = false, all_weights = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    int i = -1, j = -1;
    double wij = 0.0;
    ls >> i >> j;
    require(i >= 0 && j >= 0 && i < data.graph.m && j < data.graph.m && i != j,
            "load_edge_list: bad edge '" + line + "'");
    if (ls >> wij) {
      any_weight = true;
      weighted.push_back({{std::min(i, j), std::max(i, j)}, wij});
    } else {
      all_weights = false;
      weighted.push_back({{std::min(i, j), std::max(i, j)}, 0.0});
    }
    data.graph.edges.emplace_back(std::min(i, j), std::max(i, j));
  }
  data.graph.normalize_edges();
  require(!any_weight || all_weights,
          "load_edge_list: mix of weighted and unweighted lines");
  data.has_weights = any_weight;
  if (data.has_weights) {
    Matrix w = Matrix::Zero(data.graph.m, data.graph.m);
    for (const auto& [e, v] : weighted) {
      w(e.first, e.second) = v;
      w(e.second, e.first) = v;
    }
    for (int i = 0; i < data.graph.m; ++i) w(i, i) = 1.0 - w.row(i).sum();
    data.weights = w;
  } else {
    data.weights = metropolis_weights(data.graph);
    data.has_weights = false;
  }
  return data;
}

}  // namespace dopt
