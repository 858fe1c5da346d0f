#pragma once

// Small graph builders and independent oracles shared by the test suites.

#include <algorithm>
#include <functional>
#include <vector>

#include "panda/common.hpp"
#include "panda/graph.hpp"

namespace panda::testing {

inline Graph path_graph(std::size_t n) {
  std::vector<Edge> e;
  for (NodeId i = 0; i + 1 < n; ++i) e.emplace_back(i, i + 1);
  return Graph::from_edges(n, e);
}

inline Graph cycle_graph(std::size_t n) {
  std::vector<Edge> e;
  for (NodeId i = 0; i < n; ++i) e.emplace_back(i, static_cast<NodeId>((i + 1) % n));
  return Graph::from_edges(n, e);
}

inline Graph complete_graph(std::size_t n) {
  std::vector<Edge> e;
  for (NodeId i = 0; i < n; ++i)
    for (NodeId j = i + 1; j < n; ++j) e.emplace_back(i, j);
  return Graph::from_edges(n, e);
}

/// Star with center 0 and `leaves` leaves.
inline Graph star_graph(std::size_t leaves) {
  std::vector<Edge> e;
  for (NodeId i = 1; i <= leaves; ++i) e.emplace_back(0, i);
  return Graph::from_edges(leaves + 1, e);
}

/// Two triangles {0,1,2} and {3,4,5} joined by the bridge 2-3.
inline Graph two_triangle_barbell() {
  return Graph::from_edges(6, std::vector<Edge>{{0, 1}, {1, 2}, {0, 2}, {3, 4}, {4, 5}, {3, 5}, {2, 3}});
}

inline Graph random_tree(std::size_t n, Rng& rng) {
  std::vector<Edge> e;
  for (NodeId v = 1; v < n; ++v) e.emplace_back(static_cast<NodeId>(rng.index(v)), v);
  return Graph::from_edges(n, e);
}

/// Random tree plus extra edges with probability `p_extra`; always connected.
inline Graph random_connected_graph(std::size_t n, double p_extra, Rng& rng) {
  std::vector<Edge> e;
  for (NodeId v = 1; v < n; ++v) e.emplace_back(static_cast<NodeId>(rng.index(v)), v);
  for (NodeId u = 0; u < n; ++u)
    for (NodeId v = u + 1; v < n; ++v)
      if (rng.uniform() < p_extra) e.emplace_back(u, v);
  return Graph::from_edges(n, e);
}

inline Graph random_graph(std::size_t n, double p, Rng& rng) {
  std::vector<Edge> e;
  for (NodeId u = 0; u < n; ++u)
    for (NodeId v = u + 1; v < n; ++v)
      if (rng.uniform() < p) e.emplace_back(u, v);
  return Graph::from_edges(n, e);
}

inline Matrix random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng, double scale = 1.0) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

// ---------------------------------------------------------------------------
// Oracles
// ---------------------------------------------------------------------------

/// Every shortest path between s and t, enumerated by DFS over simple paths
/// (exponential; for n <= 8 only). Does not use BFS layering.
inline std::vector<std::vector<NodeId>> all_shortest_paths_bruteforce(const Graph& g, NodeId s, NodeId t) {
  std::vector<std::vector<NodeId>> paths;
  std::vector<NodeId> cur{s};
  std::vector<bool> on(g.num_nodes(), false);
  on[s] = true;
  std::function<void(NodeId)> dfs = [&](NodeId v) {
    if (v == t) {
      paths.push_back(cur);
      return;
    }
    for (NodeId w : g.neighbors(v)) {
      if (on[w]) continue;
      on[w] = true;
      cur.push_back(w);
      dfs(w);
      cur.pop_back();
      on[w] = false;
    }
  };
  dfs(s);
  if (paths.empty()) return paths;
  std::size_t best = paths.front().size();
  for (const auto& p : paths) best = std::min(best, p.size());
  std::erase_if(paths, [&](const auto& p) { return p.size() != best; });
  return paths;
}

/// Betweenness by explicit path counting: for each unordered pair, the
/// fraction of shortest paths through each interior node; normalized by
/// 2 / ((n-1)(n-2)).
inline std::vector<double> betweenness_oracle(const Graph& g) {
  const std::size_t n = g.num_nodes();
  std::vector<double> c(n, 0.0);
  for (NodeId s = 0; s < n; ++s) {
    for (NodeId t = s + 1; t < n; ++t) {
      auto paths = all_shortest_paths_bruteforce(g, s, t);
      if (paths.empty()) continue;
      for (const auto& p : paths)
        for (std::size_t i = 1; i + 1 < p.size(); ++i) c[p[i]] += 1.0 / static_cast<double>(paths.size());
    }
  }
  if (n <= 2) return std::vector<double>(n, 0.0);
  for (auto& x : c) x *= 2.0 / (static_cast<double>(n - 1) * static_cast<double>(n - 2));
  return c;
}

/// Load by direct packet simulation: for every ordered pair (a, b) a unit
/// packet starts at a and at each node splits evenly over the neighbours one
/// hop closer to b (hop counts taken from the brute-force path lengths).
inline std::vector<double> load_oracle(const Graph& g) {
  const std::size_t n = g.num_nodes();
  // distance matrix from brute-force enumeration
  std::vector<std::vector<long>> dist(n, std::vector<long>(n, -1));
  for (NodeId a = 0; a < n; ++a) {
    dist[a][a] = 0;
    for (NodeId b = 0; b < n; ++b) {
      if (a == b) continue;
      auto paths = all_shortest_paths_bruteforce(g, a, b);
      if (!paths.empty()) dist[a][b] = static_cast<long>(paths.front().size()) - 1;
    }
  }
  std::vector<double> load(n, 0.0);
  for (NodeId a = 0; a < n; ++a) {
    for (NodeId b = 0; b < n; ++b) {
      if (a == b || dist[a][b] < 0) continue;
      std::vector<double> flow(n, 0.0);
      flow[a] = 1.0;
      // process nodes by decreasing distance to b
      for (long d = dist[a][b]; d > 0; --d) {
        for (NodeId x = 0; x < n; ++x) {
          if (dist[x][b] != d || flow[x] == 0.0) continue;
          std::vector<NodeId> next;
          for (NodeId y : g.neighbors(x))
            if (dist[y][b] == d - 1) next.push_back(y);
          for (NodeId y : next) flow[y] += flow[x] / static_cast<double>(next.size());
        }
      }
      for (NodeId x = 0; x < n; ++x)
        if (x != a && x != b) load[x] += flow[x];
    }
  }
  if (n <= 2) return std::vector<double>(n, 0.0);
  for (auto& x : load) x /= static_cast<double>(n - 1) * static_cast<double>(n - 2);
  return load;
}

}  // namespace panda::testing
