#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "panda/graph.hpp"
#include "panda/model.hpp"

namespace panda {

// ---------------------------------------------------------------------------
// Laplacian spectrum and effective resistance
// ---------------------------------------------------------------------------

enum class LaplacianKind { combinatorial, sym_normalized };

inline constexpr double kKernelCutoff = 1e-9;

struct LaplacianSpectrum {
  Vector eigenvalues;  // ascending
  Eigen::MatrixXd eigenvectors;
  LaplacianKind kind = LaplacianKind::combinatorial;
};

/// Dense L = D - A, or L~ = I - D^-1/2 A D^-1/2 (degrees without self-loops;
/// an isolated node gets a zero row).
inline Eigen::MatrixXd dense_laplacian(const Graph& graph, LaplacianKind kind) {
  const auto n = static_cast<Eigen::Index>(graph.num_nodes());
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(n, n);
  auto deg = degrees(graph, false);
  for (NodeId v = 0; v < graph.num_nodes(); ++v) {
    if (kind == LaplacianKind::combinatorial) {
      L(v, v) = deg[v];
      for (NodeId u : graph.neighbors(v)) L(v, u) = -1.0;
    } else if (deg[v] > 0) {
      L(v, v) = 1.0;
      for (NodeId u : graph.neighbors(v)) L(v, u) = -1.0 / std::sqrt(static_cast<double>(deg[v]) * deg[u]);
    }
  }
  return L;
}

inline LaplacianSpectrum laplacian_spectrum(const Graph& graph, LaplacianKind kind = LaplacianKind::combinatorial) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(dense_laplacian(graph, kind));
  if (es.info() != Eigen::Success) throw NumericError("laplacian eigendecomposition failed");
  return {es.eigenvalues(), es.eigenvectors(), kind};
}

/// Moore-Penrose pseudoinverse of the combinatorial Laplacian; eigenvalues at
/// or below the cutoff are treated as kernel.
inline Eigen::MatrixXd laplacian_pseudoinverse(const LaplacianSpectrum& s) {
  const auto n = s.eigenvalues.size();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double lambda = s.eigenvalues(i);
    if (lambda > kKernelCutoff) out.noalias() += (1.0 / lambda) * s.eigenvectors.col(i) * s.eigenvectors.col(i).transpose();
  }
  return out;
}

/// Pairwise effective resistances of one graph from a single eigendecomposition.
class ResistanceMetric {
 public:
  explicit ResistanceMetric(const Graph& graph)
      : components_(connected_components(graph)), pinv_(laplacian_pseudoinverse(laplacian_spectrum(graph))) {}

  double operator()(NodeId u, NodeId v) const {
    const auto n = components_.size();
    if (u >= n || v >= n) throw BoundsError("effective_resistance: node out of range");
    if (u == v) throw UsageError("effective_resistance needs two distinct nodes");
    if (components_[u] != components_[v]) {
      throw InfiniteResistance("nodes " + std::to_string(u) + " and " + std::to_string(v) + " lie in different components");
    }
    return pinv_(u, u) + pinv_(v, v) - 2.0 * pinv_(u, v);
  }

  /// Sum over unordered pairs.
  double pairwise_total() const {
    double total = 0.0;
    for (NodeId u = 0; u < components_.size(); ++u)
      for (NodeId v = u + 1; v < components_.size(); ++v) total += (*this)(u, v);
    return total;
  }

 private:
  std::vector<int> components_;
  Eigen::MatrixXd pinv_;
};

inline double effective_resistance(const Graph& graph, NodeId u, NodeId v) { return ResistanceMetric(graph)(u, v); }

/// R_tot = n * sum_i 1/lambda_i over nonzero eigenvalues.
inline double total_effective_resistance(const Graph& graph) {
  if (!is_connected(graph)) throw InfiniteResistance("total resistance of a disconnected graph");
  const auto s = laplacian_spectrum(graph);
  double sum = 0.0;
  for (Eigen::Index i = 0; i < s.eigenvalues.size(); ++i) {
    if (s.eigenvalues(i) > kKernelCutoff) sum += 1.0 / s.eigenvalues(i);
  }
  return static_cast<double>(graph.num_nodes()) * sum;
}

inline double total_effective_resistance_pairwise(const Graph& graph) {
  if (!is_connected(graph)) throw InfiniteResistance("total resistance of a disconnected graph");
  return ResistanceMetric(graph).pairwise_total();
}

// ---------------------------------------------------------------------------
// Dirichlet energy
// ---------------------------------------------------------------------------

inline void check_node_rows(const char* op, const Graph& graph, const Matrix& H) {
  if (H.rows() != static_cast<Eigen::Index>(graph.num_nodes())) {
    throw ShapeError(std::string(op) + ": " + shape_str(H.rows(), H.cols()) + " for " + std::to_string(graph.num_nodes()) +
                     " nodes");
  }
}

/// Tr(H^T L~ H) with L~ the symmetric normalized Laplacian.
inline double dirichlet_energy(const Graph& graph, const Matrix& H) {
  check_node_rows("dirichlet_energy", graph, H);
  const Eigen::MatrixXd L = dense_laplacian(graph, LaplacianKind::sym_normalized);
  return (H.transpose() * L * H).trace();
}

/// 1/2 sum_{v,u} A_vu || H_v / sqrt(d_v) - H_u / sqrt(d_u) ||^2
inline double dirichlet_energy_pairwise(const Graph& graph, const Matrix& H) {
  check_node_rows("dirichlet_energy_pairwise", graph, H);
  auto deg = degrees(graph, false);
  double e = 0.0;
  for (NodeId v = 0; v < graph.num_nodes(); ++v) {
    for (NodeId u : graph.neighbors(v)) {
      e += (H.row(v) / std::sqrt(static_cast<double>(deg[v])) - H.row(u) / std::sqrt(static_cast<double>(deg[u]))).squaredNorm();
    }
  }
  return 0.5 * e;
}

// ---------------------------------------------------------------------------
// Sensitivity bound (zwp)^l (S^l)_vu
// ---------------------------------------------------------------------------

struct SensitivityBoundParams {
  double z = 1.0;
  double w = 1.0;
  double p = 1.0;
  std::size_t ell = 1;
};

inline double sensitivity_bound(const SensitivityBoundParams& b, const ShiftMatrix& S, NodeId v, NodeId u) {
  if (b.ell < 1) throw UsageError("sensitivity_bound needs ell >= 1");
  if (!(b.z > 0 && b.w > 0 && b.p > 0)) throw UsageError("sensitivity_bound parameters must be positive");
  // repeated multiplication keeps (2x)^l / x^l an exact power of two
  const double base = b.z * b.w * b.p;
  double scale = 1.0;
  for (std::size_t i = 0; i < b.ell; ++i) scale *= base;
  return scale * S.power_entry(b.ell, v, u);
}

/// Largest absolute entry of the message-passing weight matrices of the first
/// `ell` layers (biases and epsilon excluded).
inline double max_layer_weight(const ParamStore& params, std::size_t ell) {
  return params.max_abs([&](const std::string& name) {
    for (std::size_t i = 0; i < ell; ++i) {
      const auto pre = layer_prefix(i);
      if (name.rfind(pre, 0) != 0) continue;
      const auto leaf = name.substr(name.find_last_of('.') + 1);
      return leaf.starts_with("W") && name.find(".eta.") == std::string::npos;
    }
    return false;
  });
}

// ---------------------------------------------------------------------------
// Empirical Jacobian sensitivity
// ---------------------------------------------------------------------------

enum class JacobianNorm {
  entrywise,  // sum of |J_ij|
  induced,    // max column absolute sum
};

struct SensitivityOptions {
  std::size_t num_pairs = 64;
  std::uint64_t seed = 0;
  JacobianNorm norm = JacobianNorm::entrywise;
  // Node-ordered layer-0 features; only for models that expand no node.
  std::optional<Matrix> layer0;
};

struct SensitivityPair {
  NodeId v;
  NodeId u;
  double value;
};

struct SensitivityReport {
  std::vector<SensitivityPair> pairs;
  double mean = 0.0;
};

namespace detail {

inline double jacobian_norm(const Matrix& J, JacobianNorm norm) {
  if (J.size() == 0) return 0.0;
  if (norm == JacobianNorm::entrywise) return J.cwiseAbs().sum();
  return J.cwiseAbs().colwise().sum().maxCoeff();
}

/// Ordered pairs (v, u) with shortest-path distance <= ell, sampled uniformly
/// without replacement when there are more than `limit`.
inline std::vector<std::pair<NodeId, NodeId>> pairs_within(const Graph& graph, std::size_t ell, std::size_t limit, Rng& rng) {
  std::vector<std::pair<NodeId, NodeId>> all;
  for (NodeId v = 0; v < graph.num_nodes(); ++v) {
    auto dist = shortest_path_lengths(graph, v);
    for (NodeId u = 0; u < graph.num_nodes(); ++u) {
      if (dist[u] != kUnreachable && dist[u] <= ell) all.emplace_back(v, u);
    }
  }
  if (all.size() > limit) {
    rng.shuffle(all);
    all.resize(limit);
    std::sort(all.begin(), all.end());
  }
  return all;
}

inline Matrix random_rows(std::size_t rows, std::size_t cols, Rng& rng) {
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

}  // namespace detail

/// Mean norm of d h_v^(ell) / d h_u^(0) over sampled pairs at distance <= ell,
/// with random normal layer-0 features and the model's current parameters.
/// The input encoders are bypassed; layer 0 is the first message-passing input.
inline SensitivityReport empirical_sensitivity(const Model& model, const Graph& graph, std::size_t ell,
                                               const SensitivityOptions& opt = {}) {
  const auto& spec = model.spec;
  if (ell > spec.layers) throw UsageError("empirical_sensitivity: model has fewer than ell layers");
  Rng rng(opt.seed);
  auto pairs = detail::pairs_within(graph, ell, opt.num_pairs, rng);
  if (pairs.empty()) throw EmptySample("no node pairs within distance " + std::to_string(ell));

  GraphSample sample{graph, Matrix::Zero(static_cast<Eigen::Index>(graph.num_nodes()), 1), 0};
  auto g = prepare_graph(sample, mask_for(spec, graph));
  const std::size_t width_high = is_panda(spec.backbone) ? spec.p_high : spec.p;
  Matrix low0 = detail::random_rows(g.slots.num_low(), spec.p, rng);
  Matrix high0 = detail::random_rows(g.slots.num_high(), width_high, rng);
  if (opt.layer0) {
    if (g.slots.num_high() > 0) throw UsageError("explicit layer-0 features need a model without expanded nodes");
    if (opt.layer0->rows() != low0.rows() || opt.layer0->cols() != low0.cols()) {
      throw ShapeError("layer-0 features " + shape_str(opt.layer0->rows(), opt.layer0->cols()) + ", expected " +
                       shape_str(low0.rows(), low0.cols()));
    }
    low0 = *opt.layer0;
  }

  ad::Tape tape;
  ParamBinding P(tape, model.params);
  DualFeatures h0 = split_inputs(tape, g, low0, high0);
  DualFeatures h = run_layers(P, spec, h0, g, ell, nullptr);

  auto locate = [&](const DualFeatures& d, NodeId node) {
    const bool high = g.mask.expanded(node);
    return std::pair{high ? d.high : d.low, g.slots.node_to_slot[node]};
  };

  SensitivityReport report;
  std::size_t i = 0;
  while (i < pairs.size()) {
    const NodeId v = pairs[i].first;
    std::size_t j = i;
    while (j < pairs.size() && pairs[j].first == v) ++j;

    auto [out, out_row] = locate(h, v);
    const auto width_out = out.cols();
    std::vector<Matrix> jac(j - i);
    for (std::size_t k = i; k < j; ++k) {
      jac[k - i] = Matrix::Zero(width_out, locate(h0, pairs[k].second).first.cols());
    }
    if (ell == 0) {
      for (std::size_t k = i; k < j; ++k) {
        if (pairs[k].second == v) jac[k - i].setIdentity();
      }
    } else {
      Matrix seed = Matrix::Zero(out.rows(), width_out);
      for (Eigen::Index t = 0; t < width_out; ++t) {
        seed.setZero();
        seed(out_row, t) = 1.0;
        tape.backward(out, seed);
        for (std::size_t k = i; k < j; ++k) {
          auto [in, in_row] = locate(h0, pairs[k].second);
          if (tape.has_grad(in.id())) jac[k - i].row(t) = tape.grad(in.id()).row(in_row);
        }
      }
    }
    for (std::size_t k = i; k < j; ++k) {
      report.pairs.push_back({v, pairs[k].second, detail::jacobian_norm(jac[k - i], opt.norm)});
    }
    i = j;
  }
  double sum = 0.0;
  for (const auto& r : report.pairs) sum += r.value;
  report.mean = sum / static_cast<double>(report.pairs.size());
  return report;
}

// ---------------------------------------------------------------------------
// Signal propagation
// ---------------------------------------------------------------------------

struct SignalOptions {
  std::size_t num_sources = 10;
  std::uint64_t seed = 0;
};

struct SignalMeasurement {
  double h_odot = 0.0;
  double r_tot = 0.0;
  std::vector<NodeId> sources;
};

/// h_odot for one source: the source row is all ones (width p, or p_high if
/// expanded), every other row zero; the stack runs without encoder or readout
/// and is reunified to width p. Each output entry is divided by its row's
/// Euclidean norm and weighted by the hop distance to the source.
inline double signal_from_source(const Model& model, const PreparedGraph& g, NodeId source) {
  const auto& spec = model.spec;
  const auto n = g.num_nodes();
  auto dist = shortest_path_lengths(g.graph(), source);
  std::size_t max_dist = 0;
  for (NodeId u = 0; u < n; ++u) {
    if (u == source) continue;
    if (dist[u] == kUnreachable) throw InfiniteResistance("signal_propagation needs a connected graph");
    max_dist = std::max(max_dist, dist[u]);
  }
  const std::size_t width_high = is_panda(spec.backbone) ? spec.p_high : spec.p;
  Matrix low = Matrix::Zero(static_cast<Eigen::Index>(g.slots.num_low()), static_cast<Eigen::Index>(spec.p));
  Matrix high = Matrix::Zero(static_cast<Eigen::Index>(g.slots.num_high()), static_cast<Eigen::Index>(width_high));
  (g.mask.expanded(source) ? high : low).row(g.slots.node_to_slot[source]).setOnes();

  ad::Tape tape;
  ParamBinding P(tape, model.params);
  DualFeatures h = run_layers(P, spec, split_inputs(tape, g, low, high), g, spec.layers, nullptr);
  const Matrix out = reunify(P, h, spec.layers).value();

  double acc = 0.0;
  for (NodeId u = 0; u < n; ++u) {
    if (u == source) continue;
    const double norm = out.row(u).norm();
    if (norm < 1e-12) continue;
    acc += out.row(u).sum() / norm * static_cast<double>(dist[u]);
  }
  return acc / (static_cast<double>(out.cols()) * static_cast<double>(max_dist));
}

/// Mean h_odot over up to `num_sources` distinct random sources, plus R_tot.
inline SignalMeasurement signal_propagation(const Model& model, const Graph& graph, const SignalOptions& opt = {}) {
  const auto n = graph.num_nodes();
  if (n < 2) throw SizeError("signal_propagation needs at least two nodes");
  SignalMeasurement m;
  m.r_tot = total_effective_resistance(graph);

  std::vector<NodeId> nodes(n);
  std::iota(nodes.begin(), nodes.end(), NodeId{0});
  Rng rng(opt.seed);
  rng.shuffle(nodes);
  nodes.resize(std::min(opt.num_sources, n));
  m.sources = nodes;

  GraphSample sample{graph, Matrix::Zero(static_cast<Eigen::Index>(n), 1), 0};
  auto g = prepare_graph(sample, mask_for(model.spec, graph));
  double sum = 0.0;
  for (NodeId s : nodes) sum += signal_from_source(model, g, s);
  m.h_odot = sum / static_cast<double>(nodes.size());
  return m;
}

// ---------------------------------------------------------------------------
// Correlation
// ---------------------------------------------------------------------------

inline double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ShapeError("pearson: length mismatch");
  if (x.size() < 2) throw SizeError("pearson needs at least two points");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0.0 || syy <= 0.0) throw UndefinedCorrelation("correlation of a constant column");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

/// Ranks starting at 1; tied values share their average rank.
inline std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> rank(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && x[order[j]] == x[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j + 1);
    for (std::size_t k = i; k < j; ++k) rank[order[k]] = r;
    i = j;
  }
  return rank;
}

inline double spearman(std::span<const double> x, std::span<const double> y) {
  auto rx = average_ranks(x);
  auto ry = average_ranks(y);
  return pearson(rx, ry);
}

/// (x - min) / (max - min); a constant column maps to zeros.
inline std::vector<double> min_max_normalize(std::span<const double> x) {
  std::vector<double> out(x.begin(), x.end());
  if (out.empty()) return out;
  const auto [lo, hi] = std::minmax_element(out.begin(), out.end());
  const double a = *lo, range = *hi - *lo;
  for (auto& v : out) v = range > 0 ? (v - a) / range : 0.0;
  return out;
}

struct SignalRecord {
  std::size_t graph_id = 0;
  double r_tot = 0.0;
  double normalized_r_tot = 0.0;
  double h_odot = 0.0;
};

struct SignalPropagationReport {
  std::vector<SignalRecord> records;
  double pearson = 0.0;
  double spearman = 0.0;
};

/// Normalizes R_tot over the rows by min-max and correlates it with h_odot.
inline SignalPropagationReport resistance_propagation_correlation(std::vector<SignalRecord> rows) {
  if (rows.size() < 3) throw SizeError("resistance_propagation_correlation needs at least three rows");
  std::vector<double> r, h;
  for (const auto& row : rows) {
    r.push_back(row.r_tot);
    h.push_back(row.h_odot);
  }
  auto rn = min_max_normalize(r);
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i].normalized_r_tot = rn[i];
  SignalPropagationReport rep;
  rep.pearson = pearson(rn, h);
  rep.spearman = spearman(rn, h);
  rep.records = std::move(rows);
  return rep;
}

}  // namespace panda
