#pragma once

#include <algorithm>
#include <array>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "panda/graph.hpp"

namespace panda {

enum class CentralityKind { degree, betweenness, closeness, pagerank, load };

inline constexpr std::array<CentralityKind, 5> kAllCentralities = {
    CentralityKind::degree, CentralityKind::betweenness, CentralityKind::closeness,
    CentralityKind::pagerank, CentralityKind::load};

inline std::string_view to_string(CentralityKind kind) {
  switch (kind) {
    case CentralityKind::degree: return "degree";
    case CentralityKind::betweenness: return "betweenness";
    case CentralityKind::closeness: return "closeness";
    case CentralityKind::pagerank: return "pagerank";
    case CentralityKind::load: return "load";
  }
  return "?";
}

inline CentralityKind parse_centrality(std::string_view name) {
  for (auto kind : kAllCentralities) {
    if (to_string(kind) == name) return kind;
  }
  throw UsageError("unknown centrality '" + std::string(name) + "'");
}

struct CentralityVector {
  std::vector<double> values;
  CentralityKind kind = CentralityKind::degree;
};

// ---------------------------------------------------------------------------

inline CentralityVector degree_centrality(const Graph& graph) {
  const std::size_t n = graph.num_nodes();
  if (n < 2) throw SizeError("degree centrality needs at least 2 nodes");
  CentralityVector c{std::vector<double>(n), CentralityKind::degree};
  for (NodeId v = 0; v < n; ++v) c.values[v] = static_cast<double>(graph.degree(v)) / static_cast<double>(n - 1);
  return c;
}

namespace detail {

/// BFS shortest-path DAG from one source: visit order, predecessor lists,
/// path counts.
struct ShortestPathDag {
  std::vector<NodeId> order;
  std::vector<std::vector<NodeId>> preds;
  std::vector<double> sigma;
  std::vector<std::size_t> dist;

  ShortestPathDag(const Graph& g, NodeId s)
      : preds(g.num_nodes()), sigma(g.num_nodes(), 0.0), dist(g.num_nodes(), kUnreachable) {
    order.reserve(g.num_nodes());
    std::size_t head = 0;
    dist[s] = 0;
    sigma[s] = 1.0;
    order.push_back(s);
    while (head < order.size()) {
      const NodeId v = order[head++];
      for (NodeId w : g.neighbors(v)) {
        if (dist[w] == kUnreachable) {
          dist[w] = dist[v] + 1;
          order.push_back(w);
        }
        if (dist[w] == dist[v] + 1) {
          sigma[w] += sigma[v];
          preds[w].push_back(v);
        }
      }
    }
  }
};

inline void normalize_pair_counts(std::vector<double>& ordered_sums) {
  const std::size_t n = ordered_sums.size();
  if (n <= 2) {
    std::fill(ordered_sums.begin(), ordered_sums.end(), 0.0);
    return;
  }
  // Sums run over ordered pairs, i.e. twice the unordered sum, so this equals
  // 2 / ((n-1)(n-2)) per unordered pair.
  const double scale = 1.0 / (static_cast<double>(n - 1) * static_cast<double>(n - 2));
  for (auto& x : ordered_sums) x *= scale;
}

}  // namespace detail

/// Brandes accumulation over all sources, endpoints excluded.
inline CentralityVector betweenness_centrality(const Graph& graph) {
  const std::size_t n = graph.num_nodes();
  std::vector<double> cb(n, 0.0);
  std::vector<double> delta(n);
  for (NodeId s = 0; s < n; ++s) {
    detail::ShortestPathDag dag(graph, s);
    std::fill(delta.begin(), delta.end(), 0.0);
    for (auto it = dag.order.rbegin(); it != dag.order.rend(); ++it) {
      const NodeId w = *it;
      for (NodeId v : dag.preds[w]) delta[v] += dag.sigma[v] / dag.sigma[w] * (1.0 + delta[w]);
      if (w != s) cb[w] += delta[w];
    }
  }
  detail::normalize_pair_counts(cb);
  return {std::move(cb), CentralityKind::betweenness};
}

/// Goh load: a unit packet travels from every node to every other node and is
/// split evenly among the next hops on shortest paths at each step.
inline CentralityVector load_centrality(const Graph& graph) {
  const std::size_t n = graph.num_nodes();
  std::vector<double> load(n, 0.0);
  std::vector<double> flow(n);
  for (NodeId s = 0; s < n; ++s) {
    detail::ShortestPathDag dag(graph, s);
    std::fill(flow.begin(), flow.end(), 0.0);
    for (NodeId v : dag.order) flow[v] = 1.0;
    // Packets head towards s; farthest nodes forward first.
    for (auto it = dag.order.rbegin(); it != dag.order.rend(); ++it) {
      const NodeId v = *it;
      if (v == s) continue;
      const auto& p = dag.preds[v];
      const double share = flow[v] / static_cast<double>(p.size());
      for (NodeId x : p) {
        if (x != s) flow[x] += share;
      }
    }
    for (NodeId v : dag.order) {
      if (v != s) load[v] += flow[v] - 1.0;
    }
  }
  detail::normalize_pair_counts(load);
  return {std::move(load), CentralityKind::load};
}

/// Wasserman-Faust closeness: (r / (n-1)) * (r / D) for r reachable nodes at
/// total distance D. Isolated nodes score 0.
inline CentralityVector closeness_centrality(const Graph& graph) {
  const std::size_t n = graph.num_nodes();
  CentralityVector c{std::vector<double>(n, 0.0), CentralityKind::closeness};
  if (n < 2) return c;
  for (NodeId v = 0; v < n; ++v) {
    const auto dist = shortest_path_lengths(graph, v);
    std::size_t reach = 0, total = 0;
    for (NodeId u = 0; u < n; ++u) {
      if (u == v || dist[u] == kUnreachable) continue;
      ++reach;
      total += dist[u];
    }
    if (total == 0) continue;
    const double r = static_cast<double>(reach);
    c.values[v] = (r / static_cast<double>(n - 1)) * (r / static_cast<double>(total));
  }
  return c;
}

struct PageRankOptions {
  double damping = 0.85;
  double tol = 1e-9;
  std::size_t max_iter = 1000;
};

/// Power iteration with uniform teleport; dangling mass is spread uniformly.
/// Stops when the L1 change between iterates drops below `tol`.
inline CentralityVector pagerank_centrality(const Graph& graph, const PageRankOptions& opt = {}) {
  const std::size_t n = graph.num_nodes();
  if (n == 0) return {{}, CentralityKind::pagerank};
  const double nn = static_cast<double>(n);
  std::vector<double> x(n, 1.0 / nn), next(n);
  double residual = 0.0;
  for (std::size_t it = 0; it < opt.max_iter; ++it) {
    double dangling = 0.0;
    for (NodeId v = 0; v < n; ++v) {
      if (graph.degree(v) == 0) dangling += x[v];
    }
    const double base = (1.0 - opt.damping) / nn + opt.damping * dangling / nn;
    std::fill(next.begin(), next.end(), base);
    for (NodeId u = 0; u < n; ++u) {
      const auto deg = graph.degree(u);
      if (deg == 0) continue;
      const double share = opt.damping * x[u] / static_cast<double>(deg);
      for (NodeId v : graph.neighbors(u)) next[v] += share;
    }
    residual = 0.0;
    for (NodeId v = 0; v < n; ++v) residual += std::abs(next[v] - x[v]);
    x.swap(next);
    if (residual < opt.tol) return {std::move(x), CentralityKind::pagerank};
  }
  throw ConvergenceError("pagerank did not converge in " + std::to_string(opt.max_iter) +
                             " iterations (residual " + std::to_string(residual) + ")",
                         residual);
}

inline CentralityVector compute_centrality(const Graph& graph, CentralityKind kind) {
  switch (kind) {
    case CentralityKind::degree: return degree_centrality(graph);
    case CentralityKind::betweenness: return betweenness_centrality(graph);
    case CentralityKind::closeness: return closeness_centrality(graph);
    case CentralityKind::pagerank: return pagerank_centrality(graph);
    case CentralityKind::load: return load_centrality(graph);
  }
  throw UsageError("unknown centrality kind");
}

// ---------------------------------------------------------------------------
// Expansion mask
// ---------------------------------------------------------------------------

struct ExpansionMask {
  std::vector<std::uint8_t> bits;
  std::size_t k = 0;
  std::vector<NodeId> expanded_ids;  // ascending

  std::size_t size() const noexcept { return bits.size(); }
  bool expanded(NodeId v) const { return bits[v] != 0; }

  static ExpansionMask from_bits(std::vector<std::uint8_t> bits) {
    ExpansionMask m;
    m.bits = std::move(bits);
    for (NodeId v = 0; v < m.bits.size(); ++v) {
      if (m.bits[v]) m.expanded_ids.push_back(v);
    }
    m.k = m.expanded_ids.size();
    return m;
  }

  static ExpansionMask none(std::size_t n) { return from_bits(std::vector<std::uint8_t>(n, 0)); }
};

/// Node ids ordered by decreasing value, ties by ascending id.
inline std::vector<NodeId> rank_descending(std::span<const double> values) {
  std::vector<NodeId> order(values.size());
  std::iota(order.begin(), order.end(), NodeId{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](NodeId a, NodeId b) { return values[a] > values[b]; });
  return order;
}

/// Marks the k most central nodes. k >= n selects every node.
inline ExpansionMask build_mask(const CentralityVector& c, std::size_t k) {
  const std::size_t n = c.values.size();
  const auto order = rank_descending(c.values);
  std::vector<std::uint8_t> bits(n, 0);
  for (std::size_t i = 0; i < std::min(k, n); ++i) bits[order[i]] = 1;
  auto mask = ExpansionMask::from_bits(std::move(bits));
  mask.k = k;
  return mask;
}

}  // namespace panda
