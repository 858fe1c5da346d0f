#pragma once

#include <algorithm>
#include <deque>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Sparse>

#include "panda/common.hpp"

namespace panda {

using FeatureMatrix = Matrix;
using Edge = std::pair<NodeId, NodeId>;

/// Immutable undirected graph in compressed sparse row form.
///
/// Every undirected edge {u, v} is stored twice (u -> v and v -> u), rows are
/// sorted, duplicates and self-loops are removed at construction.
class Graph {
 public:
  Graph() : row_offsets_(1, 0) {}

  /// Builds a graph from an arbitrary edge list. Edges are symmetrized,
  /// deduplicated and stripped of self-loops.
  static Graph from_edges(std::size_t num_nodes, std::span<const Edge> edges) {
    std::vector<std::vector<NodeId>> adj(num_nodes);
    for (const auto& [u, v] : edges) {
      if (u >= num_nodes || v >= num_nodes) {
        throw BoundsError("edge (" + std::to_string(u) + "," + std::to_string(v) +
                          ") out of range for " + std::to_string(num_nodes) + " nodes");
      }
      if (u == v) continue;
      adj[u].push_back(v);
      adj[v].push_back(u);
    }
    Graph g;
    g.num_nodes_ = num_nodes;
    g.row_offsets_.assign(num_nodes + 1, 0);
    for (std::size_t v = 0; v < num_nodes; ++v) {
      auto& row = adj[v];
      std::sort(row.begin(), row.end());
      row.erase(std::unique(row.begin(), row.end()), row.end());
      g.row_offsets_[v + 1] = g.row_offsets_[v] + row.size();
    }
    g.col_indices_.reserve(g.row_offsets_.back());
    for (const auto& row : adj) g.col_indices_.insert(g.col_indices_.end(), row.begin(), row.end());
    return g;
  }

  static Graph from_edges(std::size_t num_nodes, const std::vector<Edge>& edges) {
    return from_edges(num_nodes, std::span<const Edge>(edges));
  }

  std::size_t num_nodes() const noexcept { return num_nodes_; }
  /// Number of undirected edges.
  std::size_t num_edges() const noexcept { return col_indices_.size() / 2; }
  /// Number of stored directed entries (2 |E|).
  std::size_t num_directed_edges() const noexcept { return col_indices_.size(); }

  std::span<const NodeId> neighbors(NodeId v) const {
    return {col_indices_.data() + row_offsets_[v], row_offsets_[v + 1] - row_offsets_[v]};
  }
  std::size_t degree(NodeId v) const { return row_offsets_[v + 1] - row_offsets_[v]; }

  bool has_edge(NodeId u, NodeId v) const {
    auto row = neighbors(u);
    return std::binary_search(row.begin(), row.end(), v);
  }

  const std::vector<std::size_t>& row_offsets() const noexcept { return row_offsets_; }
  const std::vector<NodeId>& col_indices() const noexcept { return col_indices_; }

  /// Undirected edges as (u, v) with u < v, in row-major order.
  std::vector<Edge> edge_list() const {
    std::vector<Edge> out;
    out.reserve(num_edges());
    for (NodeId u = 0; u < num_nodes_; ++u) {
      for (NodeId v : neighbors(u)) {
        if (u < v) out.emplace_back(u, v);
      }
    }
    return out;
  }

  /// Graph with node `v` renamed to `perm[v]`.
  Graph permuted(std::span<const NodeId> perm) const {
    std::vector<Edge> edges;
    for (const auto& [u, v] : edge_list()) edges.emplace_back(perm[u], perm[v]);
    return from_edges(num_nodes_, edges);
  }

  /// Copy with one extra undirected edge.
  Graph with_edge(NodeId u, NodeId v) const {
    auto edges = edge_list();
    edges.emplace_back(u, v);
    return from_edges(num_nodes_, edges);
  }

  friend bool operator==(const Graph& a, const Graph& b) {
    return a.num_nodes_ == b.num_nodes_ && a.row_offsets_ == b.row_offsets_ &&
           a.col_indices_ == b.col_indices_;
  }

 private:
  std::size_t num_nodes_ = 0;
  std::vector<std::size_t> row_offsets_;
  std::vector<NodeId> col_indices_;
};

struct GraphSample {
  Graph graph;
  FeatureMatrix features;
  int label = 0;
};

// ---------------------------------------------------------------------------
// Degrees, distances, shift matrices
// ---------------------------------------------------------------------------

inline std::vector<int> degrees(const Graph& graph, bool with_self_loops) {
  std::vector<int> out(graph.num_nodes());
  for (NodeId v = 0; v < graph.num_nodes(); ++v) {
    out[v] = static_cast<int>(graph.degree(v)) + (with_self_loops ? 1 : 0);
  }
  return out;
}

inline constexpr std::size_t kUnreachable = std::numeric_limits<std::size_t>::max();

/// Hop distances from `source`; unreachable nodes get kUnreachable.
inline std::vector<std::size_t> shortest_path_lengths(const Graph& graph, NodeId source) {
  if (source >= graph.num_nodes()) throw BoundsError("source node out of range");
  std::vector<std::size_t> dist(graph.num_nodes(), kUnreachable);
  std::deque<NodeId> queue{source};
  dist[source] = 0;
  while (!queue.empty()) {
    const NodeId v = queue.front();
    queue.pop_front();
    for (NodeId w : graph.neighbors(v)) {
      if (dist[w] == kUnreachable) {
        dist[w] = dist[v] + 1;
        queue.push_back(w);
      }
    }
  }
  return dist;
}

inline bool is_connected(const Graph& graph) {
  if (graph.num_nodes() == 0) return true;
  const auto dist = shortest_path_lengths(graph, 0);
  return std::none_of(dist.begin(), dist.end(), [](std::size_t d) { return d == kUnreachable; });
}

/// Component id per node, numbered in order of first appearance.
inline std::vector<int> connected_components(const Graph& graph) {
  std::vector<int> comp(graph.num_nodes(), -1);
  int next = 0;
  for (NodeId s = 0; s < graph.num_nodes(); ++s) {
    if (comp[s] >= 0) continue;
    const auto dist = shortest_path_lengths(graph, s);
    for (NodeId v = 0; v < graph.num_nodes(); ++v) {
      if (dist[v] != kUnreachable) comp[v] = next;
    }
    ++next;
  }
  return comp;
}

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

enum class ShiftKind { adjacency, sym_normalized_self_loops };

/// Graph shift operator S.
///
/// `sym_normalized_self_loops` is D^{-1/2} (A + I) D^{-1/2} with degrees
/// counted on A + I, so isolated nodes get a unit diagonal.
struct ShiftMatrix {
  ShiftKind kind = ShiftKind::adjacency;
  SparseMatrix values;

  static ShiftMatrix build(const Graph& graph, ShiftKind kind) {
    const auto n = static_cast<Eigen::Index>(graph.num_nodes());
    std::vector<Eigen::Triplet<double>> triplets;
    if (kind == ShiftKind::adjacency) {
      for (NodeId u = 0; u < graph.num_nodes(); ++u) {
        for (NodeId v : graph.neighbors(u)) triplets.emplace_back(u, v, 1.0);
      }
    } else {
      const auto deg = degrees(graph, true);
      for (NodeId u = 0; u < graph.num_nodes(); ++u) {
        triplets.emplace_back(u, u, 1.0 / deg[u]);
        for (NodeId v : graph.neighbors(u)) {
          triplets.emplace_back(u, v, 1.0 / std::sqrt(static_cast<double>(deg[u]) * deg[v]));
        }
      }
    }
    ShiftMatrix s;
    s.kind = kind;
    s.values.resize(n, n);
    s.values.setFromTriplets(triplets.begin(), triplets.end());
    return s;
  }

  /// (S^power)_{row,col} by repeated sparse mat-vec products.
  double power_entry(std::size_t power, NodeId row, NodeId col) const {
    Vector x = Vector::Zero(values.cols());
    x[col] = 1.0;
    for (std::size_t i = 0; i < power; ++i) x = values * x;
    return x[row];
  }
};

// ---------------------------------------------------------------------------
// Splitting
// ---------------------------------------------------------------------------

struct DatasetSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

/// Deterministic shuffled 80/10/10 split. Validation and test sizes are
/// floor(n * fraction); the remainder goes to training.
inline DatasetSplit split_dataset(std::size_t num_samples, std::uint64_t seed,
                                  double val_fraction = 0.1, double test_fraction = 0.1) {
  if (num_samples < 10) {
    throw SizeError("split_dataset needs at least 10 samples, got " + std::to_string(num_samples));
  }
  std::vector<std::size_t> order(num_samples);
  for (std::size_t i = 0; i < num_samples; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);

  const auto n_val = static_cast<std::size_t>(std::floor(static_cast<double>(num_samples) * val_fraction + 1e-9));
  const auto n_test = static_cast<std::size_t>(std::floor(static_cast<double>(num_samples) * test_fraction + 1e-9));
  const std::size_t n_train = num_samples - n_val - n_test;

  DatasetSplit split;
  split.train.assign(order.begin(), order.begin() + n_train);
  split.val.assign(order.begin() + n_train, order.begin() + n_train + n_val);
  split.test.assign(order.begin() + n_train + n_val, order.end());
  return split;
}

template <typename T>
std::vector<T> gather(const std::vector<T>& items, const std::vector<std::size_t>& idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(items.at(i));
  return out;
}

}  // namespace panda
