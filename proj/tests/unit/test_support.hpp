#pragma once

// Test-only helpers: random instances and a central finite-difference oracle that is
// independent of the tape-based gradients it checks.

#include "graphprompt/graph.hpp"
#include "graphprompt/rng.hpp"
#include "graphprompt/training.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace gprompt::testing_support {

inline Graph random_graph(Rng& rng, int n, double p, int d, double feature_scale = 1.0) {
  Matrix x(n, d);
  for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = rng.normal(0.0, feature_scale);
  std::vector<Edge> edges;
  for (int a = 0; a < n; ++a) {
    for (int b = a + 1; b < n; ++b) {
      if (rng.bernoulli(p)) edges.push_back(Edge{a, b});
    }
  }
  return Graph(std::move(x), edges);
}

inline Matrix random_matrix(Rng& rng, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = rng.normal(0.0, scale);
  return m;
}

// Central differences of `loss` at `params`, one coordinate at a time.
inline std::vector<Matrix> finite_difference(const LossFunction& loss, const std::vector<Matrix>& params,
                                             double eps = 1e-6) {
  std::vector<Matrix> out;
  std::vector<Matrix> probe = params;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Matrix g = Matrix::Zero(params[k].rows(), params[k].cols());
    for (Eigen::Index i = 0; i < params[k].size(); ++i) {
      const double saved = probe[k](i);
      probe[k](i) = saved + eps;
      const double up = loss(probe, nullptr);
      probe[k](i) = saved - eps;
      const double down = loss(probe, nullptr);
      probe[k](i) = saved;
      g(i) = (up - down) / (2.0 * eps);
    }
    out.push_back(std::move(g));
  }
  return out;
}

// ||a - b|| / max(||a||, ||b||) over all arrays jointly.
inline double relative_error(const std::vector<Matrix>& a, const std::vector<Matrix>& b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    diff += (a[k] - b[k]).squaredNorm();
    na += a[k].squaredNorm();
    nb += b[k].squaredNorm();
  }
  const double denom = std::max(std::sqrt(na), std::sqrt(nb));
  return denom > 0.0 ? std::sqrt(diff) / denom : 0.0;
}

// All-pairs BFS distances by repeated relaxation over the edge list.
inline std::vector<std::vector<int>> all_pairs_distances(const Graph& g) {
  const int n = g.node_count();
  const int inf = n + 1;
  std::vector<std::vector<int>> d(static_cast<std::size_t>(n), std::vector<int>(static_cast<std::size_t>(n), inf));
  for (int v = 0; v < n; ++v) d[v][v] = 0;
  for (const Edge& e : g.edges()) d[e.u][e.v] = d[e.v][e.u] = 1;
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) d[i][j] = std::min(d[i][j], d[i][k] + d[k][j]);
  return d;
}

}  // namespace gprompt::testing_support
