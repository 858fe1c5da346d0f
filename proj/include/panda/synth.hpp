#pragma once

// Synthetic long-range graph classification sets.
//
// Each node carries one attribute a in [0, A) and a source flag; features are
// one-hot over (flag, a), 2A channels. One endpoint of a diameter is the
// source. Every node at hop distance `distance` from it (default: the
// source's eccentricity) gets an attribute whose parity is the label, all
// other attributes are uniform, so the label is only recoverable by relating
// far nodes to the source.

#include <string>
#include <string_view>
#include <vector>

#include "panda/graph.hpp"

namespace panda {

enum class SynthFamily { barbell, tree, ring_of_cliques };

inline std::string_view to_string(SynthFamily f) {
  switch (f) {
    case SynthFamily::barbell: return "barbell";
    case SynthFamily::tree: return "tree";
    case SynthFamily::ring_of_cliques: return "ring-of-cliques";
  }
  return "?";
}

inline SynthFamily parse_family(std::string_view name) {
  for (auto f : {SynthFamily::barbell, SynthFamily::tree, SynthFamily::ring_of_cliques}) {
    if (to_string(f) == name) return f;
  }
  throw UsageError("unknown family '" + std::string(name) + "'");
}

struct SynthConfig {
  SynthFamily family = SynthFamily::barbell;
  std::size_t count = 100;
  // clique size (barbell, ring) or node count (tree), inclusive range
  std::size_t size_min = 4;
  std::size_t size_max = 6;
  // barbell bridge path length
  std::size_t bridge_min = 1;
  std::size_t bridge_max = 1;
  std::size_t ring_cliques = 4;
  std::size_t attributes = 4;
  int distance = -1;
  std::uint64_t seed = 0;

  void validate() const {
    if (size_min > size_max || bridge_min > bridge_max) throw UsageError("empty size range");
    if (attributes < 2) throw UsageError("need at least two attribute values");
    if (family != SynthFamily::tree && size_min < 2) throw UsageError("cliques need at least two nodes");
    if (family == SynthFamily::tree && size_min < 1) throw UsageError("trees need at least one node");
    if (family == SynthFamily::ring_of_cliques && ring_cliques < 2) throw UsageError("ring needs at least two cliques");
  }
};

// ---------------------------------------------------------------------------
// Families
// ---------------------------------------------------------------------------

inline void add_clique(std::vector<Edge>& e, NodeId first, std::size_t size) {
  for (NodeId i = first; i < first + size; ++i)
    for (NodeId j = i + 1; j < first + size; ++j) e.emplace_back(i, j);
}

/// Cliques {0..c-1} and {c+b..2c+b-1} joined through the path
/// c-1, c, ..., c+b-1, c+b. bridge = 0 joins the cliques by one edge.
inline Graph barbell_graph(std::size_t clique, std::size_t bridge) {
  std::vector<Edge> e;
  add_clique(e, 0, clique);
  add_clique(e, static_cast<NodeId>(clique + bridge), clique);
  for (NodeId v = static_cast<NodeId>(clique - 1); v < clique + bridge; ++v) e.emplace_back(v, v + 1);
  return Graph::from_edges(2 * clique + bridge, e);
}

/// Uniform random recursive tree.
inline Graph recursive_tree(std::size_t n, Rng& rng) {
  std::vector<Edge> e;
  for (NodeId v = 1; v < n; ++v) e.emplace_back(static_cast<NodeId>(rng.index(v)), v);
  return Graph::from_edges(n, e);
}

/// `cliques` cliques of size `size` in a cycle; the last node of each clique
/// links to the first node of the next.
inline Graph ring_of_cliques(std::size_t cliques, std::size_t size) {
  std::vector<Edge> e;
  for (std::size_t c = 0; c < cliques; ++c) {
    add_clique(e, static_cast<NodeId>(c * size), size);
    e.emplace_back(static_cast<NodeId>(c * size + size - 1), static_cast<NodeId>(((c + 1) % cliques) * size));
  }
  return Graph::from_edges(cliques * size, e);
}

inline std::size_t draw_in(std::size_t lo, std::size_t hi, Rng& rng) { return lo + rng.index(hi - lo + 1); }

inline Graph draw_graph(const SynthConfig& cfg, Rng& rng) {
  switch (cfg.family) {
    case SynthFamily::barbell: {
      const auto c = draw_in(cfg.size_min, cfg.size_max, rng);
      return barbell_graph(c, draw_in(cfg.bridge_min, cfg.bridge_max, rng));
    }
    case SynthFamily::tree: return recursive_tree(draw_in(cfg.size_min, cfg.size_max, rng), rng);
    case SynthFamily::ring_of_cliques: return ring_of_cliques(cfg.ring_cliques, draw_in(cfg.size_min, cfg.size_max, rng));
  }
  throw UsageError("unknown family");
}

// ---------------------------------------------------------------------------
// Labeling
// ---------------------------------------------------------------------------

/// Random endpoint of a random diameter (connected graphs only).
inline NodeId pick_source(const Graph& g, Rng& rng) {
  std::vector<Edge> ends;
  std::size_t diam = 0;
  for (NodeId u = 0; u < g.num_nodes(); ++u) {
    const auto dist = shortest_path_lengths(g, u);
    for (NodeId v = 0; v < g.num_nodes(); ++v) {
      if (dist[v] == kUnreachable) throw UsageError("synthetic graphs must be connected");
      if (dist[v] > diam) {
        diam = dist[v];
        ends.clear();
      }
      if (dist[v] == diam) ends.emplace_back(u, v);
    }
  }
  return ends[rng.index(ends.size())].first;
}

/// Plants the label on `g` and returns the sample.
inline GraphSample label_graph(Graph g, std::size_t attributes, int distance, Rng& rng) {
  const auto n = g.num_nodes();
  const NodeId source = pick_source(g, rng);
  const auto dist = shortest_path_lengths(g, source);
  std::size_t target_dist = 0;
  if (distance < 0) {
    for (auto d : dist) target_dist = std::max(target_dist, d);
  } else {
    target_dist = static_cast<std::size_t>(distance);
  }
  const int label = static_cast<int>(rng.index(2));
  const std::size_t same_parity = (attributes - static_cast<std::size_t>(label) + 1) / 2;  // count of a with a % 2 == label

  GraphSample s;
  s.label = label;
  s.features = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(2 * attributes));
  for (NodeId v = 0; v < n; ++v) {
    std::size_t a;
    if (dist[v] == target_dist) {
      a = 2 * rng.index(same_parity) + static_cast<std::size_t>(label);
    } else {
      a = rng.index(attributes);
    }
    const std::size_t channel = (v == source ? attributes : 0) + a;
    s.features(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(channel)) = 1.0;
  }
  s.graph = std::move(g);
  return s;
}

inline std::vector<GraphSample> synth_generate(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  std::vector<GraphSample> out;
  out.reserve(cfg.count);
  for (std::size_t i = 0; i < cfg.count; ++i) out.push_back(label_graph(draw_graph(cfg, rng), cfg.attributes, cfg.distance, rng));
  return out;
}

}  // namespace panda
