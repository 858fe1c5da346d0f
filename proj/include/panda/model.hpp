#pragma once

#include <algorithm>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

#include "panda/autodiff.hpp"
#include "panda/centrality.hpp"
#include "panda/graph.hpp"
#include "panda/params.hpp"

namespace panda {

enum class Backbone { gcn, gin, panda_gcn, panda_gin };

inline std::string_view to_string(Backbone b) {
  switch (b) {
    case Backbone::gcn: return "gcn";
    case Backbone::gin: return "gin";
    case Backbone::panda_gcn: return "panda-gcn";
    case Backbone::panda_gin: return "panda-gin";
  }
  return "?";
}

inline Backbone parse_backbone(std::string_view name) {
  for (auto b : {Backbone::gcn, Backbone::gin, Backbone::panda_gcn, Backbone::panda_gin}) {
    if (to_string(b) == name) return b;
  }
  throw UsageError("unknown backbone '" + std::string(name) + "'");
}

inline bool is_panda(Backbone b) { return b == Backbone::panda_gcn || b == Backbone::panda_gin; }
inline bool is_gin_family(Backbone b) { return b == Backbone::gin || b == Backbone::panda_gin; }

struct ModelSpec {
  Backbone backbone = Backbone::panda_gcn;
  std::size_t layers = 4;
  std::size_t p = 64;
  std::size_t p_high = 128;
  std::size_t k = 3;
  CentralityKind centrality = CentralityKind::betweenness;
  double dropout = 0.5;
  int num_classes = 2;
  std::size_t input_width = 1;

  void validate() const {
    if (layers < 1) throw UsageError("model needs at least one layer");
    if (p < 1) throw UsageError("width p must be positive");
    if (is_panda(backbone) && p_high <= p) {
      throw UsageError("p_high (" + std::to_string(p_high) + ") must exceed p (" + std::to_string(p) + ")");
    }
    if (num_classes < 1) throw UsageError("num_classes must be positive");
    if (dropout < 0.0 || dropout >= 1.0) throw UsageError("dropout must lie in [0, 1)");
  }

  /// Number of expanded nodes requested for a graph; baselines expand none.
  std::size_t effective_k() const { return is_panda(backbone) ? k : 0; }
};

// ---------------------------------------------------------------------------
// Edge partition and node slots
// ---------------------------------------------------------------------------

/// Directed edges (source, target) split by the expansion bits of their
/// endpoints. low_to_high holds edges whose source is low and target high.
struct EdgePartition {
  std::vector<Edge> low_low;
  std::vector<Edge> high_high;
  std::vector<Edge> low_to_high;
  std::vector<Edge> high_to_low;

  std::size_t total() const { return low_low.size() + high_high.size() + low_to_high.size() + high_to_low.size(); }
};

inline EdgePartition partition_edges(const Graph& graph, const ExpansionMask& mask) {
  if (mask.size() != graph.num_nodes()) {
    throw ShapeError("partition_edges: mask length " + std::to_string(mask.size()) + " vs " +
                     std::to_string(graph.num_nodes()) + " nodes");
  }
  EdgePartition part;
  for (NodeId u = 0; u < graph.num_nodes(); ++u) {
    for (NodeId v : graph.neighbors(u)) {
      const bool hu = mask.expanded(u), hv = mask.expanded(v);
      if (!hu && !hv) part.low_low.emplace_back(u, v);
      else if (hu && hv) part.high_high.emplace_back(u, v);
      else if (!hu) part.low_to_high.emplace_back(u, v);
      else part.high_to_low.emplace_back(u, v);
    }
  }
  return part;
}

/// Position of every node inside its own population, and the inverse maps.
struct SlotMap {
  std::vector<Eigen::Index> node_to_slot;
  std::vector<NodeId> low_nodes;
  std::vector<NodeId> high_nodes;

  static SlotMap build(const ExpansionMask& mask) {
    SlotMap s;
    s.node_to_slot.resize(mask.size());
    for (NodeId v = 0; v < mask.size(); ++v) {
      auto& pop = mask.expanded(v) ? s.high_nodes : s.low_nodes;
      s.node_to_slot[v] = static_cast<Eigen::Index>(pop.size());
      pop.push_back(v);
    }
    return s;
  }

  std::size_t num_low() const { return low_nodes.size(); }
  std::size_t num_high() const { return high_nodes.size(); }
};

/// Edge list in slot coordinates with 1/sqrt(d_u d_v) weights (degrees on A + I).
struct SlotEdges {
  ad::Index src;
  ad::Index dst;
  std::vector<double> norm;
  std::vector<double> ones;

  bool empty() const { return src.empty(); }
  std::size_t size() const { return src.size(); }
};

/// A graph sample with its expansion mask and every index array the layers
/// need. Built once per (graph, mask) and reused across epochs.
struct PreparedGraph {
  const GraphSample* sample = nullptr;
  ExpansionMask mask;
  EdgePartition partition;
  SlotMap slots;
  std::vector<int> degree_self;  // degrees on A + I
  SlotEdges low_low, high_high, low_to_high, high_to_low;
  SlotEdges all;  // every directed edge in node coordinates

  std::size_t num_nodes() const { return sample->graph.num_nodes(); }
  const Graph& graph() const { return sample->graph; }
};

inline PreparedGraph prepare_graph(const GraphSample& sample, ExpansionMask mask) {
  PreparedGraph g;
  g.sample = &sample;
  g.mask = std::move(mask);
  g.partition = partition_edges(sample.graph, g.mask);
  g.slots = SlotMap::build(g.mask);
  g.degree_self = degrees(sample.graph, true);

  auto fill = [&](const std::vector<Edge>& edges, SlotEdges& out, bool slot_coords) {
    for (const auto& [u, v] : edges) {
      out.src.push_back(slot_coords ? g.slots.node_to_slot[u] : static_cast<Eigen::Index>(u));
      out.dst.push_back(slot_coords ? g.slots.node_to_slot[v] : static_cast<Eigen::Index>(v));
      out.norm.push_back(1.0 / std::sqrt(static_cast<double>(g.degree_self[u]) * g.degree_self[v]));
      out.ones.push_back(1.0);
    }
  };
  fill(g.partition.low_low, g.low_low, true);
  fill(g.partition.high_high, g.high_high, true);
  fill(g.partition.low_to_high, g.low_to_high, true);
  fill(g.partition.high_to_low, g.high_to_low, true);

  std::vector<Edge> all;
  for (NodeId u = 0; u < sample.graph.num_nodes(); ++u) {
    for (NodeId v : sample.graph.neighbors(u)) all.emplace_back(u, v);
  }
  fill(all, g.all, false);
  return g;
}

// ---------------------------------------------------------------------------
// Cross-width functions f (project up) and g (select down)
// ---------------------------------------------------------------------------

/// Read-only view of a score network eta: input h_u (+) h_v, one hidden ReLU
/// layer of width p_high, output of width p_high.
struct ScoreNetView {
  const Matrix* W1;
  const Matrix* b1;
  const Matrix* W2;
  const Matrix* b2;

  static ScoreNetView bind(const ParamStore& params, const std::string& prefix) {
    return {&params.at(prefix + "W1"), &params.at(prefix + "b1"), &params.at(prefix + "W2"), &params.at(prefix + "b2")};
  }

  /// Row-wise s = softmax(ReLU(eta(h_u (+) h_v))).
  Matrix scores(const Matrix& h_high, const Matrix& h_low) const {
    if (h_high.rows() != h_low.rows() || h_high.cols() + h_low.cols() != W1->cols()) {
      throw ShapeError("score net: inputs " + shape_str(h_high.rows(), h_high.cols()) + " (+) " +
                       shape_str(h_low.rows(), h_low.cols()) + " vs W1 " + shape_str(W1->rows(), W1->cols()));
    }
    Matrix x(h_high.rows(), h_high.cols() + h_low.cols());
    x << h_high, h_low;
    Matrix hidden = ((x * W1->transpose()).rowwise() + b1->row(0)).cwiseMax(0.0);
    Matrix s = ((hidden * W2->transpose()).rowwise() + b2->row(0)).cwiseMax(0.0);
    ad::detail::softmax_rows_inplace(s);
    return s;
  }
};

/// Owning score network, for standalone use.
struct ScoreNet {
  Matrix W1, b1, W2, b2;

  static ScoreNet init(std::size_t p, std::size_t p_high, Rng& rng) {
    const auto ph = static_cast<Eigen::Index>(p_high);
    return {glorot_uniform(ph, ph + static_cast<Eigen::Index>(p), rng), Matrix::Zero(1, ph), glorot_uniform(ph, ph, rng),
            Matrix::Zero(1, ph)};
  }
  ScoreNetView view() const { return {&W1, &b1, &W2, &b2}; }
};

using IndexMatrix = Eigen::Matrix<Eigen::Index, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Per row: indices of the `p` largest scores (ties to the lower index),
/// returned in ascending index order.
inline IndexMatrix topk_dims(const Matrix& scores, std::size_t p) {
  const auto width = scores.cols();
  if (static_cast<Eigen::Index>(p) > width) throw ShapeError("topk_dims: p exceeds score width");
  IndexMatrix out(scores.rows(), static_cast<Eigen::Index>(p));
  std::vector<Eigen::Index> order(static_cast<std::size_t>(width));
  for (Eigen::Index r = 0; r < scores.rows(); ++r) {
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    auto row = scores.row(r);
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(p), order.end(),
                      [&](Eigen::Index a, Eigen::Index b) { return row(a) > row(b) || (row(a) == row(b) && a < b); });
    std::sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(p));
    for (std::size_t j = 0; j < p; ++j) out(r, static_cast<Eigen::Index>(j)) = order[j];
  }
  return out;
}

/// f: lift rows of width p to p_high with W_f (p_high x p).
inline ad::Tensor project_up(const ad::Tensor& h_low, const ad::Tensor& W_f) { return ad::linear(h_low, W_f); }

/// g: for each row pair (h_u high, h_v low) keep the p coordinates of h_u with
/// the largest scores. The selection is a constant of the forward pass, so
/// gradients reach h_u only through the gathered coordinates.
inline ad::Tensor select_down(const ad::Tensor& h_low, const ad::Tensor& h_high, const ScoreNetView& eta) {
  const auto p = static_cast<std::size_t>(h_low.cols());
  if (static_cast<std::size_t>(h_high.cols()) < p) throw ShapeError("select_down: p exceeds p_high");
  const Matrix s = eta.scores(h_high.value(), h_low.value());
  return ad::column_select(h_high, topk_dims(s, p));
}

// ---------------------------------------------------------------------------
// Dual-width node state
// ---------------------------------------------------------------------------

/// Hidden state split by population: `low` rows follow slots.low_nodes, `high`
/// rows follow slots.high_nodes. `depth` counts message-passing layers applied.
struct DualFeatures {
  ad::Tensor low;
  ad::Tensor high;
  const SlotMap* slots = nullptr;
  std::size_t depth = 0;
};

namespace detail {

inline ad::Tensor sum_or_zero(ad::Tape& tape, const std::vector<ad::Tensor>& parts, Eigen::Index rows, Eigen::Index cols) {
  if (parts.empty()) return tape.constant(Matrix::Zero(rows, cols));
  ad::Tensor acc = parts.front();
  for (std::size_t i = 1; i < parts.size(); ++i) acc = ad::add(acc, parts[i]);
  return acc;
}

inline ad::Index iota_index(std::size_t n) {
  ad::Index idx(n);
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  return idx;
}

/// Messages from high senders to low receivers after the dimension selector,
/// one row per high_to_low edge.
inline ad::Tensor selected_messages(const DualFeatures& in, const SlotEdges& hl, const ScoreNetView& eta) {
  ad::Tensor senders = ad::row_gather(in.high, hl.src);
  ad::Tensor receivers = ad::row_gather(in.low, hl.dst);
  return select_down(receivers, senders, eta);
}

inline ad::Tensor mlp(ParamBinding& P, const std::string& prefix, const ad::Tensor& x) {
  ad::Tensor h = ad::relu(ad::add_row(ad::linear(x, P(prefix + "W1")), P(prefix + "b1")));
  return ad::add_row(ad::linear(h, P(prefix + "W2")), P(prefix + "b2"));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Layers. `prefix` is the layer's parameter namespace, e.g. "layers.0.".
// ---------------------------------------------------------------------------

/// Residual GCN over the full graph: h_v + ReLU(sum_u W h_u / sqrt(d_u d_v)).
inline DualFeatures gcn_layer(ParamBinding& P, const std::string& prefix, const DualFeatures& in, const PreparedGraph& g) {
  const auto n = static_cast<Eigen::Index>(g.num_nodes());
  ad::Tensor msg = ad::propagate(ad::linear(in.low, P(prefix + "W_low")), g.all.src, g.all.dst, g.all.norm, n);
  DualFeatures out = in;
  out.low = ad::add(in.low, ad::relu(msg));
  ++out.depth;
  return out;
}

/// GIN over the full graph: MLP((1 + eps) h_v + sum_u h_u).
inline DualFeatures gin_layer(ParamBinding& P, const std::string& prefix, const DualFeatures& in, const PreparedGraph& g) {
  const auto n = static_cast<Eigen::Index>(g.num_nodes());
  ad::Tensor eps = P(prefix + "epsilon");
  ad::Tensor agg = ad::add(ad::add(in.low, ad::scale_by(in.low, eps)), ad::propagate(in.low, g.all.src, g.all.dst, g.all.ones, n));
  DualFeatures out = in;
  out.low = detail::mlp(P, prefix + "mlp_low.", agg);
  ++out.depth;
  return out;
}

/// PANDA-GCN update.
///   low v:  h_v + ReLU( sum_{low<->low} W_low h_u / sqrt(d_u d_v) + sum_{high>->low} W_low g(h_v, h_u) / sqrt(d_u d_v) )
///   high v: h_v + ReLU( sum_{high<=>high} W_high h_u / sqrt(d_u d_v) + sum_{low->>high} W_high f(h_u) / sqrt(d_u d_v) )
inline DualFeatures panda_gcn_layer(ParamBinding& P, const std::string& prefix, const DualFeatures& in, const PreparedGraph& g) {
  auto& tape = P.tape();
  const auto n_low = static_cast<Eigen::Index>(g.slots.num_low());
  const auto n_high = static_cast<Eigen::Index>(g.slots.num_high());

  std::vector<ad::Tensor> low_parts, high_parts;
  if (!g.low_low.empty()) {
    low_parts.push_back(ad::propagate(ad::linear(in.low, P(prefix + "W_low")), g.low_low.src, g.low_low.dst, g.low_low.norm, n_low));
  }
  if (!g.high_to_low.empty()) {
    auto eta = ScoreNetView::bind(P.store(), prefix + "eta.");
    ad::Tensor msgs = ad::linear(detail::selected_messages(in, g.high_to_low, eta), P(prefix + "W_low"));
    low_parts.push_back(ad::propagate(msgs, detail::iota_index(g.high_to_low.size()), g.high_to_low.dst, g.high_to_low.norm, n_low));
  }
  if (!g.high_high.empty()) {
    high_parts.push_back(ad::propagate(ad::linear(in.high, P(prefix + "W_high")), g.high_high.src, g.high_high.dst,
                                       g.high_high.norm, n_high));
  }
  if (!g.low_to_high.empty()) {
    ad::Tensor lifted = ad::linear(project_up(in.low, P(prefix + "W_f")), P(prefix + "W_high"));
    high_parts.push_back(ad::propagate(lifted, g.low_to_high.src, g.low_to_high.dst, g.low_to_high.norm, n_high));
  }

  DualFeatures out = in;
  out.low = ad::add(in.low, ad::relu(detail::sum_or_zero(tape, low_parts, n_low, in.low.cols())));
  out.high = ad::add(in.high, ad::relu(detail::sum_or_zero(tape, high_parts, n_high, in.high.cols())));
  ++out.depth;
  return out;
}

/// PANDA-GIN update.
///   low v:  MLP_low( (1 + eps) h_v + sum_{low<->low} h_u + sum_{high>->low} g(h_v, h_u) )
///   high v: MLP_high( (1 + eps) h_v + sum_{high<=>high} h_u + sum_{low->>high} f(h_u) )
inline DualFeatures panda_gin_layer(ParamBinding& P, const std::string& prefix, const DualFeatures& in, const PreparedGraph& g) {
  const auto n_low = static_cast<Eigen::Index>(g.slots.num_low());
  const auto n_high = static_cast<Eigen::Index>(g.slots.num_high());
  ad::Tensor eps = P(prefix + "epsilon");

  ad::Tensor low = ad::add(in.low, ad::scale_by(in.low, eps));
  if (!g.low_low.empty()) low = ad::add(low, ad::propagate(in.low, g.low_low.src, g.low_low.dst, g.low_low.ones, n_low));
  if (!g.high_to_low.empty()) {
    auto eta = ScoreNetView::bind(P.store(), prefix + "eta.");
    ad::Tensor msgs = detail::selected_messages(in, g.high_to_low, eta);
    low = ad::add(low, ad::propagate(msgs, detail::iota_index(g.high_to_low.size()), g.high_to_low.dst, g.high_to_low.ones, n_low));
  }

  ad::Tensor high = ad::add(in.high, ad::scale_by(in.high, eps));
  if (!g.high_high.empty()) high = ad::add(high, ad::propagate(in.high, g.high_high.src, g.high_high.dst, g.high_high.ones, n_high));
  if (!g.low_to_high.empty()) {
    ad::Tensor lifted = project_up(in.low, P(prefix + "W_f"));
    high = ad::add(high, ad::propagate(lifted, g.low_to_high.src, g.low_to_high.dst, g.low_to_high.ones, n_high));
  }

  DualFeatures out = in;
  out.low = detail::mlp(P, prefix + "mlp_low.", low);
  out.high = n_high > 0 ? detail::mlp(P, prefix + "mlp_high.", high) : P.tape().constant(Matrix::Zero(0, in.high.cols()));
  ++out.depth;
  return out;
}

/// Merges both populations back into node order at width p. Expanded rows go
/// through W_down (p x p_high). Must follow the last message-passing layer.
inline ad::Tensor reunify(ParamBinding& P, const DualFeatures& dual, std::size_t num_layers) {
  if (dual.depth != num_layers) {
    throw UsageError("reunify called after " + std::to_string(dual.depth) + " of " + std::to_string(num_layers) + " layers");
  }
  const SlotMap& s = *dual.slots;
  const auto n = static_cast<Eigen::Index>(s.num_low() + s.num_high());
  ad::Index low_idx(s.low_nodes.begin(), s.low_nodes.end());
  ad::Tensor out = ad::row_scatter_add(dual.low, std::move(low_idx), n);
  if (s.num_high() > 0) {
    ad::Index high_idx(s.high_nodes.begin(), s.high_nodes.end());
    out = ad::add(out, ad::row_scatter_add(ad::linear(dual.high, P("reunify.W_down")), std::move(high_idx), n));
  }
  return out;
}

/// Mean pooling over nodes followed by an affine head.
inline ad::Tensor readout_and_classify(ParamBinding& P, const ad::Tensor& features) {
  if (features.rows() == 0) throw SizeError("readout of an empty graph");
  return ad::add_row(ad::linear(ad::mean_rows(features), P("head.weight")), P("head.bias"));
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

inline std::string layer_prefix(std::size_t i) { return "layers." + std::to_string(i) + "."; }

/// Glorot-uniform weights, zero biases, epsilon = 0. Parameter names:
///   encoder.{low,high}.{weight,bias}
///   layers.<i>.{W_low,W_high,W_f,epsilon}
///   layers.<i>.eta.{W1,b1,W2,b2}
///   layers.<i>.mlp_{low,high}.{W1,b1,W2,b2}
///   reunify.W_down, head.{weight,bias}
inline ParamStore init_params(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  ParamStore ps;
  const auto p = static_cast<Eigen::Index>(spec.p);
  const auto ph = static_cast<Eigen::Index>(spec.p_high);
  const auto d = static_cast<Eigen::Index>(spec.input_width);
  const bool panda = is_panda(spec.backbone);
  const bool gin = is_gin_family(spec.backbone);

  ps.add("encoder.low.weight", glorot_uniform(p, d, rng));
  ps.add("encoder.low.bias", Matrix::Zero(1, p));
  if (panda) {
    ps.add("encoder.high.weight", glorot_uniform(ph, d, rng));
    ps.add("encoder.high.bias", Matrix::Zero(1, ph));
  }
  auto add_mlp = [&](const std::string& prefix, Eigen::Index w) {
    ps.add(prefix + "W1", glorot_uniform(w, w, rng));
    ps.add(prefix + "b1", Matrix::Zero(1, w));
    ps.add(prefix + "W2", glorot_uniform(w, w, rng));
    ps.add(prefix + "b2", Matrix::Zero(1, w));
  };
  for (std::size_t i = 0; i < spec.layers; ++i) {
    const auto pre = layer_prefix(i);
    if (gin) {
      add_mlp(pre + "mlp_low.", p);
      ps.add(pre + "epsilon", Matrix::Zero(1, 1));
      if (panda) add_mlp(pre + "mlp_high.", ph);
    } else {
      ps.add(pre + "W_low", glorot_uniform(p, p, rng));
      if (panda) ps.add(pre + "W_high", glorot_uniform(ph, ph, rng));
    }
    if (panda) {
      ps.add(pre + "W_f", glorot_uniform(ph, p, rng));
      ps.add(pre + "eta.W1", glorot_uniform(ph, ph + p, rng));
      ps.add(pre + "eta.b1", Matrix::Zero(1, ph));
      ps.add(pre + "eta.W2", glorot_uniform(ph, ph, rng));
      ps.add(pre + "eta.b2", Matrix::Zero(1, ph));
    }
  }
  if (panda) ps.add("reunify.W_down", glorot_uniform(p, ph, rng));
  ps.add("head.weight", glorot_uniform(spec.num_classes, p, rng));
  ps.add("head.bias", Matrix::Zero(1, spec.num_classes));
  return ps;
}

struct Model {
  ModelSpec spec;
  ParamStore params;

  static Model init(const ModelSpec& spec, std::uint64_t seed) { return {spec, init_params(spec, seed)}; }
};

/// Expansion mask for a graph under a model spec. Baselines expand no node.
inline ExpansionMask mask_for(const ModelSpec& spec, const Graph& graph) {
  if (spec.effective_k() == 0 || graph.num_nodes() == 0) return ExpansionMask::none(graph.num_nodes());
  if (spec.centrality == CentralityKind::degree && graph.num_nodes() < 2) return ExpansionMask::none(graph.num_nodes());
  return build_mask(compute_centrality(graph, spec.centrality), spec.effective_k());
}

/// Splits input rows by population and applies the two input encoders.
inline DualFeatures encode(ParamBinding& P, const ModelSpec& spec, const PreparedGraph& g, const ad::Tensor& x) {
  DualFeatures h;
  h.slots = &g.slots;
  ad::Index low_idx(g.slots.low_nodes.begin(), g.slots.low_nodes.end());
  h.low = ad::add_row(ad::linear(ad::row_gather(x, low_idx), P("encoder.low.weight")), P("encoder.low.bias"));
  if (is_panda(spec.backbone) && g.slots.num_high() > 0) {
    ad::Index high_idx(g.slots.high_nodes.begin(), g.slots.high_nodes.end());
    h.high = ad::add_row(ad::linear(ad::row_gather(x, high_idx), P("encoder.high.weight")), P("encoder.high.bias"));
  } else {
    h.high = P.tape().constant(Matrix::Zero(0, static_cast<Eigen::Index>(is_panda(spec.backbone) ? spec.p_high : spec.p)));
  }
  return h;
}

/// Places raw layer inputs (already at widths p / p_high) into a DualFeatures
/// in slot order, bypassing the encoders. Used by the diagnostics.
inline DualFeatures split_inputs(ad::Tape& tape, const PreparedGraph& g, const Matrix& low, const Matrix& high) {
  DualFeatures h;
  h.slots = &g.slots;
  h.low = tape.variable(low);
  h.high = tape.variable(high);
  return h;
}

inline DualFeatures apply_layer(ParamBinding& P, const ModelSpec& spec, std::size_t i, const DualFeatures& h,
                                const PreparedGraph& g) {
  const auto pre = layer_prefix(i);
  switch (spec.backbone) {
    case Backbone::gcn: return gcn_layer(P, pre, h, g);
    case Backbone::gin: return gin_layer(P, pre, h, g);
    case Backbone::panda_gcn: return panda_gcn_layer(P, pre, h, g);
    case Backbone::panda_gin: return panda_gin_layer(P, pre, h, g);
  }
  throw UsageError("unknown backbone");
}

/// Runs `count` message-passing layers; dropout follows each update when an
/// rng is supplied.
inline DualFeatures run_layers(ParamBinding& P, const ModelSpec& spec, DualFeatures h, const PreparedGraph& g, std::size_t count,
                               Rng* dropout_rng) {
  for (std::size_t i = 0; i < count; ++i) {
    h = apply_layer(P, spec, h.depth, h, g);
    if (dropout_rng && spec.dropout > 0.0) {
      h.low = ad::dropout(h.low, spec.dropout, *dropout_rng);
      if (h.high.rows() > 0) h.high = ad::dropout(h.high, spec.dropout, *dropout_rng);
    }
  }
  return h;
}

/// encode -> layers (dropout in train mode) -> reunify -> mean readout -> logits.
inline ad::Tensor forward(ParamBinding& P, const ModelSpec& spec, const PreparedGraph& g, const ad::Tensor& x, bool train_mode,
                          std::uint64_t seed) {
  if (x.cols() != static_cast<Eigen::Index>(spec.input_width)) {
    throw ShapeError("forward: features " + shape_str(x.rows(), x.cols()) + " but encoder expects width " +
                     std::to_string(spec.input_width));
  }
  Rng rng(seed);
  DualFeatures h = encode(P, spec, g, x);
  h = run_layers(P, spec, std::move(h), g, spec.layers, train_mode ? &rng : nullptr);
  return readout_and_classify(P, reunify(P, h, spec.layers));
}

/// Inference-only logits for one prepared graph.
inline Matrix predict_logits(const Model& model, const PreparedGraph& g) {
  ad::Tape tape;
  ParamBinding P(tape, model.params);
  return forward(P, model.spec, g, tape.constant(g.sample->features), false, 0).value();
}

}  // namespace panda
