#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "panda/dataset_io.hpp"
#include "panda/model.hpp"

namespace panda {

struct TrainConfig {
  double lr = 0.001;
  double dropout = 0.5;
  std::size_t layers = 4;
  std::size_t p = 64;
  std::size_t max_epochs = 500;
  std::size_t patience = 100;
  std::size_t batch = 32;
  std::size_t trials = 10;
  std::uint64_t seed = 0;

  void validate() const {
    if (patience > max_epochs) throw UsageError("patience exceeds max_epochs");
    if (trials < 1) throw UsageError("trials must be at least 1");
    if (batch < 1) throw UsageError("batch must be at least 1");
    if (!(lr > 0)) throw UsageError("learning rate must be positive");
  }

  /// Copies the shared hyperparameters into a model spec.
  ModelSpec apply(ModelSpec spec) const {
    spec.layers = layers;
    spec.p = p;
    spec.dropout = dropout;
    return spec;
  }
};

struct TrialResult {
  std::uint64_t trial_seed = 0;
  std::size_t best_val_epoch = 0;
  std::size_t epochs_run = 0;
  double val_accuracy = 0.0;
  double test_accuracy = 0.0;
  double wall_time = 0.0;
};

enum class SplitKind { train, val, test };

/// Optional instrumentation; `on_evaluate` fires for every accuracy pass.
struct TrainHooks {
  std::function<void(SplitKind, std::size_t epoch)> on_evaluate;
};

// ---------------------------------------------------------------------------
// Prepared data
// ---------------------------------------------------------------------------

/// Centrality vectors per (graph, kind), computed on first use.
class CentralityCache {
 public:
  const CentralityVector& get(const std::vector<GraphSample>& samples, std::size_t i, CentralityKind kind) {
    auto key = std::pair{i, kind};
    auto it = cache_.find(key);
    if (it == cache_.end()) it = cache_.emplace(key, compute_centrality(samples[i].graph, kind)).first;
    return it->second;
  }

 private:
  std::map<std::pair<std::size_t, CentralityKind>, CentralityVector> cache_;
};

inline ExpansionMask cached_mask(const ModelSpec& spec, const std::vector<GraphSample>& samples, std::size_t i,
                                 CentralityCache* cache) {
  const auto& g = samples[i].graph;
  if (!cache || spec.effective_k() == 0 || g.num_nodes() < 2) return mask_for(spec, g);
  return build_mask(cache->get(samples, i, spec.centrality), spec.effective_k());
}

inline std::vector<PreparedGraph> prepare_all(const ModelSpec& spec, const std::vector<GraphSample>& samples,
                                              CentralityCache* cache = nullptr) {
  std::vector<PreparedGraph> out;
  out.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) out.push_back(prepare_graph(samples[i], cached_mask(spec, samples, i, cache)));
  return out;
}

/// Index of the largest logit; ties resolve to the lower class.
inline int predicted_class(const Matrix& logits) {
  Eigen::Index best = 0;
  for (Eigen::Index c = 1; c < logits.cols(); ++c)
    if (logits(0, c) > logits(0, best)) best = c;
  return static_cast<int>(best);
}

inline double accuracy(const Model& model, const std::vector<PreparedGraph>& graphs, const std::vector<std::size_t>& idx) {
  if (idx.empty()) throw SizeError("accuracy over an empty split");
  std::size_t correct = 0;
  for (auto i : idx) {
    if (predicted_class(predict_logits(model, graphs[i])) == graphs[i].sample->label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(idx.size());
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

/// One epoch of minibatch Adam; per-graph gradients are summed in sample
/// order and averaged over the batch before each step.
inline double train_epoch(Model& model, const std::vector<PreparedGraph>& graphs, std::vector<std::size_t> order, AdamState& adam,
                          const AdamOptions& opt, std::size_t batch, std::uint64_t epoch_seed) {
  Rng shuffle_rng(epoch_seed);
  shuffle_rng.shuffle(order);
  ParamStore grads = model.params.zeros_like();
  double total_loss = 0.0;
  for (std::size_t start = 0; start < order.size(); start += batch) {
    const std::size_t end = std::min(order.size(), start + batch);
    grads.set_zero();
    for (std::size_t j = start; j < end; ++j) {
      const auto& g = graphs[order[j]];
      ad::Tape tape;
      ParamBinding P(tape, model.params);
      auto logits = forward(P, model.spec, g, tape.constant(g.sample->features), true, derive_seed(epoch_seed, j + 1));
      auto loss = ad::cross_entropy_logits(logits, {g.sample->label});
      tape.backward(loss);
      P.accumulate_grads(grads);
      total_loss += loss.value()(0, 0);
    }
    const double inv = 1.0 / static_cast<double>(end - start);
    for (std::size_t i = 0; i < grads.size(); ++i) grads.value(i) *= inv;
    adam_step(model.params, grads, adam, opt);
  }
  return total_loss / static_cast<double>(order.size());
}

struct FitResult {
  Model model;  // parameters of the best validation epoch
  std::size_t best_val_epoch = 0;
  std::size_t epochs_run = 0;
  double val_accuracy = -1.0;
};

/// Trains on `split.train`, selecting parameters by validation accuracy only.
/// Stops after `patience` consecutive epochs without a strict improvement
/// (patience 0: at the first non-improving epoch) or at max_epochs.
inline FitResult fit(const TrainConfig& cfg, const ModelSpec& spec, const std::vector<PreparedGraph>& graphs,
                     const DatasetSplit& split, std::uint64_t seed, const TrainHooks* hooks = nullptr) {
  cfg.validate();
  if (split.train.empty() || split.val.empty()) throw SizeError("empty train or validation split");
  Model model = Model::init(spec, derive_seed(seed, 1));
  AdamState adam = AdamState::for_params(model.params);
  AdamOptions opt;
  opt.lr = cfg.lr;

  FitResult best{model, 0, 0, -1.0};
  std::size_t since_best = 0;
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    train_epoch(model, graphs, split.train, adam, opt, cfg.batch, derive_seed(seed, 1000 + epoch));
    if (hooks && hooks->on_evaluate) hooks->on_evaluate(SplitKind::val, epoch);
    const double val = accuracy(model, graphs, split.val);
    best.epochs_run = epoch;
    if (val > best.val_accuracy) {
      best.val_accuracy = val;
      best.best_val_epoch = epoch;
      best.model.params = model.params;
      since_best = 0;
    } else if (++since_best >= std::max<std::size_t>(cfg.patience, 1)) {
      break;
    }
  }
  return best;
}

/// fit + exactly one test evaluation at the selected parameters.
inline TrialResult train_one(const TrainConfig& cfg, const ModelSpec& spec, const std::vector<GraphSample>& dataset,
                             std::uint64_t seed, CentralityCache* cache = nullptr, const TrainHooks* hooks = nullptr,
                             Model* selected = nullptr) {
  const auto t0 = std::chrono::steady_clock::now();
  auto split = split_dataset(dataset.size(), seed);
  if (split.test.empty()) throw SizeError("empty test split");
  auto graphs = prepare_all(spec, dataset, cache);
  auto fitted = fit(cfg, spec, graphs, split, seed, hooks);
  if (hooks && hooks->on_evaluate) hooks->on_evaluate(SplitKind::test, fitted.epochs_run);
  TrialResult r;
  r.trial_seed = seed;
  r.best_val_epoch = fitted.best_val_epoch;
  r.epochs_run = fitted.epochs_run;
  r.val_accuracy = fitted.val_accuracy;
  r.test_accuracy = accuracy(fitted.model, graphs, split.test);
  r.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (selected) *selected = std::move(fitted.model);
  return r;
}

/// Model spec with widths from the config and class count / input width from
/// the data.
inline ModelSpec spec_for_dataset(const TrainConfig& cfg, ModelSpec spec, const std::vector<GraphSample>& dataset) {
  spec = cfg.apply(spec);
  spec.num_classes = std::max(2, num_classes(dataset));
  spec.input_width = feature_width(dataset);
  return spec;
}

// ---------------------------------------------------------------------------
// Trials and confidence intervals
// ---------------------------------------------------------------------------

struct TrialSummary {
  std::size_t n = 0;
  double mean = 0.0;
  double stderr_ = 0.0;
  double half_width = 0.0;  // z * stderr
};

/// Mean and z * (sample sd / sqrt(N)); z = 1.96 gives the 95% interval.
inline TrialSummary summarize(std::span<const double> values, double z = 1.96) {
  if (values.size() < 2) throw SizeError("a confidence interval needs at least two trials");
  TrialSummary s;
  s.n = values.size();
  const double n = static_cast<double>(s.n);
  for (double v : values) s.mean += v;
  s.mean /= n;
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.stderr_ = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  s.half_width = z * s.stderr_;
  return s;
}

inline std::string format_ci(const TrialSummary& s) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f ± %.3f", s.mean, s.half_width);
  return buf;
}

struct TrialsReport {
  std::vector<TrialResult> rows;
  TrialSummary summary;
};

/// N independent trials with seeds seed + i, each with its own split.
inline TrialsReport run_trials(const TrainConfig& cfg, const ModelSpec& spec, const std::vector<GraphSample>& dataset,
                               std::size_t trials, const std::function<void(const TrialResult&)>& on_row = {},
                               Model* first_model = nullptr) {
  if (trials < 2) throw SizeError("run_trials needs at least two trials");
  TrialsReport rep;
  CentralityCache cache;
  std::vector<double> acc;
  for (std::size_t i = 0; i < trials; ++i) {
    rep.rows.push_back(train_one(cfg, spec, dataset, cfg.seed + i, &cache, nullptr, i == 0 ? first_model : nullptr));
    acc.push_back(rep.rows.back().test_accuracy);
    if (on_row) on_row(rep.rows.back());
  }
  rep.summary = summarize(acc);
  return rep;
}

// ---------------------------------------------------------------------------
// Grid search
// ---------------------------------------------------------------------------

struct SearchSpace {
  std::vector<std::size_t> p_high{80, 96, 112, 128};
  std::vector<std::size_t> k{1, 3, 5, 7, 10, 15, 20};
  std::vector<CentralityKind> centrality{kAllCentralities.begin(), kAllCentralities.end()};

  std::size_t size() const { return p_high.size() * k.size() * centrality.size(); }
};

struct GridPoint {
  std::size_t p_high = 0;
  std::size_t k = 0;
  CentralityKind centrality = CentralityKind::degree;
  double val_accuracy = 0.0;
  std::size_t best_val_epoch = 0;
};

struct GridResult {
  GridPoint best;
  std::vector<GridPoint> evaluated;
};

/// Exhaustive sweep scored by validation accuracy of a single fit at
/// cfg.seed. Points are visited in (p_high, k, centrality) ascending order and
/// only a strict improvement replaces the incumbent, which realizes the tie
/// rule. The test split is never evaluated.
inline GridResult grid_search(const SearchSpace& space, const TrainConfig& cfg, const ModelSpec& base,
                              const std::vector<GraphSample>& dataset, const TrainHooks* hooks = nullptr,
                              const std::function<void(const GridPoint&)>& on_point = {}) {
  if (space.size() == 0) throw UsageError("empty search space");
  auto ph = space.p_high;
  auto ks = space.k;
  auto cs = space.centrality;
  std::sort(ph.begin(), ph.end());
  std::sort(ks.begin(), ks.end());
  std::sort(cs.begin(), cs.end());
  ph.erase(std::unique(ph.begin(), ph.end()), ph.end());
  ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
  cs.erase(std::unique(cs.begin(), cs.end()), cs.end());

  auto split = split_dataset(dataset.size(), cfg.seed);
  CentralityCache cache;
  GridResult res;
  bool have = false;
  for (auto p_high : ph) {
    for (auto k : ks) {
      for (auto c : cs) {
        ModelSpec spec = base;
        spec.p_high = p_high;
        spec.k = k;
        spec.centrality = c;
        auto graphs = prepare_all(spec, dataset, &cache);
        auto fitted = fit(cfg, spec, graphs, split, cfg.seed, hooks);
        GridPoint pt{p_high, k, c, fitted.val_accuracy, fitted.best_val_epoch};
        res.evaluated.push_back(pt);
        if (on_point) on_point(pt);
        if (!have || pt.val_accuracy > res.best.val_accuracy) {
          res.best = pt;
          have = true;
        }
      }
    }
  }
  return res;
}

}  // namespace panda
