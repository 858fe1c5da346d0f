#include <gtest/gtest.h>

#include <algorithm>
#include <sstream>

#include "panda/checkpoint.hpp"
#include "panda/synth.hpp"
#include "panda/train.hpp"
#include "test_support.hpp"

using namespace panda;
using namespace panda::testing;

namespace {

TrainConfig small_config() {
  TrainConfig c;
  c.p = 8;
  c.layers = 2;
  c.dropout = 0.0;
  c.lr = 0.01;
  c.max_epochs = 20;
  c.patience = 5;
  c.batch = 8;
  c.trials = 2;
  return c;
}

std::vector<GraphSample> small_barbells(std::size_t count, std::uint64_t seed) {
  SynthConfig s;
  s.count = count;
  s.size_min = 3;
  s.size_max = 4;
  s.bridge_min = 0;
  s.bridge_max = 2;
  s.seed = seed;
  return synth_generate(s);
}

ModelSpec baseline_spec(Backbone b = Backbone::gcn) {
  ModelSpec s;
  s.backbone = b;
  s.p_high = 16;
  s.k = 2;
  return s;
}

bool same_result(const TrialResult& a, const TrialResult& b) {
  return a.trial_seed == b.trial_seed && a.best_val_epoch == b.best_val_epoch && a.epochs_run == b.epochs_run &&
         a.val_accuracy == b.val_accuracy && a.test_accuracy == b.test_accuracy;
}

}  // namespace

// ---------------------------------------------------------------------------
// Confidence intervals
// ---------------------------------------------------------------------------

TEST(Summary, HandEvaluated) {
  const std::vector<double> v{0.6, 1.0};
  auto s = summarize(v);
  EXPECT_NEAR(s.mean, 0.8, 1e-15);
  EXPECT_NEAR(s.stderr_, 0.2, 1e-15);
  EXPECT_NEAR(s.half_width, 0.392, 1e-15);
}

TEST(Summary, ConstantTrials) {
  const std::vector<double> v(5, 0.8);
  EXPECT_EQ(format_ci(summarize(v)), "0.800 ± 0.000");
}

TEST(Summary, SingleTrialIsSizeError) {
  const std::vector<double> v{0.5};
  EXPECT_THROW(summarize(v), SizeError);
  auto data = small_barbells(20, 1);
  auto cfg = small_config();
  EXPECT_THROW(run_trials(cfg, spec_for_dataset(cfg, baseline_spec(), data), data, 1), SizeError);
}

TEST(Summary, EightyPercentZ) {
  const std::vector<double> v{0.6, 1.0};
  EXPECT_NEAR(summarize(v, 1.2816).half_width, 0.2 * 1.2816, 1e-15);
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

TEST(Config, Invariants) {
  TrainConfig c;
  c.patience = c.max_epochs + 1;
  EXPECT_THROW(c.validate(), UsageError);
  c = TrainConfig{};
  c.trials = 0;
  EXPECT_THROW(c.validate(), UsageError);
  EXPECT_NO_THROW(TrainConfig{}.validate());
}

TEST(TrainOne, ConstantLabelsAreLearned) {
  auto data = small_barbells(100, 2);
  for (auto& s : data) s.label = 1;
  auto cfg = small_config();
  cfg.lr = 0.05;
  auto spec = spec_for_dataset(cfg, baseline_spec(), data);
  EXPECT_EQ(spec.num_classes, 2);
  auto r = train_one(cfg, spec, data, 3);
  EXPECT_EQ(r.test_accuracy, 1.0);
  EXPECT_LE(r.best_val_epoch, 5u);
}

TEST(TrainOne, PatienceZeroStopsAtFirstNonImprovingEpoch) {
  auto data = small_barbells(30, 4);
  auto cfg = small_config();
  cfg.patience = 0;
  cfg.max_epochs = 50;
  auto spec = spec_for_dataset(cfg, baseline_spec(), data);
  for (std::uint64_t seed : {0, 1, 2}) {
    auto r = train_one(cfg, spec, data, seed);
    if (r.epochs_run < cfg.max_epochs) {
      EXPECT_EQ(r.epochs_run, r.best_val_epoch + 1);
    }
  }
}

TEST(TrainOne, TestSplitConsultedOnceAfterSelection) {
  auto data = small_barbells(30, 5);
  auto cfg = small_config();
  std::vector<std::pair<SplitKind, std::size_t>> log;
  TrainHooks hooks{[&](SplitKind k, std::size_t e) { log.emplace_back(k, e); }};
  auto r = train_one(cfg, spec_for_dataset(cfg, baseline_spec(Backbone::panda_gcn), data), data, 7, nullptr, &hooks);
  ASSERT_FALSE(log.empty());
  EXPECT_EQ(std::count_if(log.begin(), log.end(), [](const auto& x) { return x.first == SplitKind::test; }), 1);
  EXPECT_EQ(log.back().first, SplitKind::test);
  EXPECT_EQ(log.size(), r.epochs_run + 1);
}

TEST(TrainOne, Deterministic) {
  auto data = small_barbells(30, 6);
  auto cfg = small_config();
  cfg.dropout = 0.5;
  auto spec = spec_for_dataset(cfg, baseline_spec(Backbone::panda_gin), data);
  auto a = train_one(cfg, spec, data, 11);
  auto b = train_one(cfg, spec, data, 11);
  EXPECT_TRUE(same_result(a, b));
  EXPECT_GE(a.test_accuracy, 0.0);
  EXPECT_LE(a.test_accuracy, 1.0);
}

TEST(TrainOne, EmptySplitIsSizeError) {
  auto data = small_barbells(9, 1);
  auto cfg = small_config();
  EXPECT_THROW(train_one(cfg, spec_for_dataset(cfg, baseline_spec(), data), data, 0), SizeError);
}

TEST(RunTrials, RowsDependOnlyOnTheirSeed) {
  auto data = small_barbells(20, 8);
  auto cfg = small_config();
  cfg.max_epochs = 5;
  cfg.seed = 40;
  auto spec = spec_for_dataset(cfg, baseline_spec(), data);
  auto rep = run_trials(cfg, spec, data, 3);
  ASSERT_EQ(rep.rows.size(), 3u);
  // rerun the seeds in reverse order; rows permute, the summary is unchanged
  std::vector<double> acc;
  for (int i = 2; i >= 0; --i) {
    auto r = train_one(cfg, spec, data, cfg.seed + static_cast<std::uint64_t>(i));
    EXPECT_TRUE(same_result(r, rep.rows[static_cast<std::size_t>(i)]));
    acc.push_back(r.test_accuracy);
  }
  auto s = summarize(acc);
  EXPECT_NEAR(s.mean, rep.summary.mean, 1e-15);
  EXPECT_NEAR(s.half_width, rep.summary.half_width, 1e-15);
}

TEST(Predict, TiesGoToLowerClass) {
  EXPECT_EQ(predicted_class((Matrix(1, 3) << 0.5, 0.5, 0.1).finished()), 0);
  EXPECT_EQ(predicted_class((Matrix(1, 3) << 0.1, 0.7, 0.7).finished()), 1);
}

// ---------------------------------------------------------------------------
// Grid search
// ---------------------------------------------------------------------------

TEST(Grid, SingletonSpace) {
  auto data = small_barbells(20, 9);
  auto cfg = small_config();
  cfg.max_epochs = 2;
  cfg.patience = 1;
  SearchSpace s{{16}, {3}, {CentralityKind::closeness}};
  auto r = grid_search(s, cfg, spec_for_dataset(cfg, baseline_spec(Backbone::panda_gcn), data), data);
  EXPECT_EQ(r.best.p_high, 16u);
  EXPECT_EQ(r.best.k, 3u);
  EXPECT_EQ(r.best.centrality, CentralityKind::closeness);
  EXPECT_EQ(r.evaluated.size(), 1u);
}

TEST(Grid, TiesPreferSmallerPHighThenKThenEnumOrder) {
  // constant labels: every point reaches validation accuracy 1
  auto data = small_barbells(20, 10);
  for (auto& s : data) s.label = 0;
  auto cfg = small_config();
  cfg.max_epochs = 3;
  cfg.patience = 3;
  SearchSpace s{{24, 12}, {5, 2}, {CentralityKind::load, CentralityKind::pagerank}};
  auto r = grid_search(s, cfg, spec_for_dataset(cfg, baseline_spec(Backbone::panda_gcn), data), data);
  for (const auto& pt : r.evaluated) ASSERT_EQ(pt.val_accuracy, 1.0);
  EXPECT_EQ(r.best.p_high, 12u);
  EXPECT_EQ(r.best.k, 2u);
  EXPECT_EQ(r.best.centrality, CentralityKind::pagerank);
}

TEST(Grid, FullSweepNeverTouchesTestAndIsReproducible) {
  auto data = small_barbells(40, 12);
  auto cfg = small_config();
  cfg.max_epochs = 1;
  cfg.patience = 1;
  cfg.batch = 32;
  std::size_t test_evals = 0, val_evals = 0;
  TrainHooks hooks{[&](SplitKind k, std::size_t) { ++(k == SplitKind::test ? test_evals : val_evals); }};
  SearchSpace space;
  auto base = spec_for_dataset(cfg, baseline_spec(Backbone::panda_gcn), data);
  auto a = grid_search(space, cfg, base, data, &hooks);
  EXPECT_EQ(a.evaluated.size(), 140u);
  EXPECT_EQ(test_evals, 0u);
  EXPECT_EQ(val_evals, 140u);
  auto b = grid_search(space, cfg, base, data);
  EXPECT_EQ(a.best.p_high, b.best.p_high);
  EXPECT_EQ(a.best.k, b.best.k);
  EXPECT_EQ(a.best.centrality, b.best.centrality);
  for (std::size_t i = 0; i < a.evaluated.size(); ++i) EXPECT_EQ(a.evaluated[i].val_accuracy, b.evaluated[i].val_accuracy);
}

// ---------------------------------------------------------------------------
// Synthetic data
// ---------------------------------------------------------------------------

TEST(Synth, BarbellShape) {
  auto g = barbell_graph(4, 3);
  EXPECT_EQ(g.num_nodes(), 11u);
  EXPECT_EQ(g.num_edges(), 6u + 6u + 4u);
  auto d = shortest_path_lengths(g, 0);
  EXPECT_EQ(d[10], 6u);
  EXPECT_EQ(barbell_graph(3, 0).num_edges(), 7u);
}

TEST(Synth, BridgeMidpointHasMaximalBetweenness) {
  auto g = barbell_graph(4, 3);
  auto oracle = betweenness_oracle(g);
  const auto mid = static_cast<std::size_t>(std::max_element(oracle.begin(), oracle.end()) - oracle.begin());
  EXPECT_EQ(mid, 5u);
  for (std::size_t v = 0; v < oracle.size(); ++v) {
    if (v != mid) {
      EXPECT_LT(oracle[v], oracle[mid]);
    }
  }
  auto brandes = compute_centrality(g, CentralityKind::betweenness);
  for (std::size_t v = 0; v < oracle.size(); ++v) EXPECT_NEAR(brandes.values[v], oracle[v], 1e-12);
}

TEST(Synth, RingOfCliquesShape) {
  auto g = ring_of_cliques(4, 3);
  EXPECT_EQ(g.num_nodes(), 12u);
  EXPECT_EQ(g.num_edges(), 4u * 3u + 4u);
  for (NodeId v = 0; v < 12; ++v) EXPECT_NE(shortest_path_lengths(g, 0)[v], kUnreachable);
}

TEST(Synth, TreeFamilyIsByteIdentical) {
  SynthConfig c;
  c.family = SynthFamily::tree;
  c.size_min = 5;
  c.size_max = 15;
  c.count = 25;
  c.seed = 77;
  std::ostringstream a, b;
  write_dataset(a, synth_generate(c));
  write_dataset(b, synth_generate(c));
  EXPECT_EQ(a.str(), b.str());
  c.seed = 78;
  std::ostringstream other;
  write_dataset(other, synth_generate(c));
  EXPECT_NE(a.str(), other.str());
}

TEST(Synth, LabelRule) {
  for (auto fam : {SynthFamily::barbell, SynthFamily::tree, SynthFamily::ring_of_cliques}) {
    SynthConfig c;
    c.family = fam;
    c.size_min = 3;
    c.size_max = 8;
    c.bridge_max = 3;
    c.attributes = 5;
    c.count = 40;
    c.seed = 3;
    int ones = 0;
    for (const auto& s : synth_generate(c)) {
      ASSERT_EQ(s.features.cols(), 10);
      std::size_t source = kUnreachable;
      for (Eigen::Index v = 0; v < s.features.rows(); ++v) {
        ASSERT_EQ(s.features.row(v).sum(), 1.0);
        Eigen::Index ch;
        s.features.row(v).maxCoeff(&ch);
        if (ch >= 5) {
          ASSERT_EQ(source, kUnreachable);
          source = static_cast<std::size_t>(v);
        }
      }
      ASSERT_NE(source, kUnreachable);
      auto d = shortest_path_lengths(s.graph, static_cast<NodeId>(source));
      const auto ecc = *std::max_element(d.begin(), d.end());
      // the source is a diameter endpoint
      for (NodeId u = 0; u < s.graph.num_nodes(); ++u) {
        auto du = shortest_path_lengths(s.graph, u);
        EXPECT_LE(*std::max_element(du.begin(), du.end()), ecc);
      }
      for (NodeId v = 0; v < s.graph.num_nodes(); ++v) {
        if (d[v] != ecc) continue;
        Eigen::Index ch;
        s.features.row(static_cast<Eigen::Index>(v)).maxCoeff(&ch);
        EXPECT_EQ((ch % 5) % 2, s.label);
      }
      ones += s.label;
    }
    EXPECT_GT(ones, 5);
    EXPECT_LT(ones, 35);
  }
}

TEST(Synth, DistanceZeroIsLearnableInOneLayer) {
  SynthConfig c;
  c.family = SynthFamily::tree;
  c.size_min = 4;
  c.size_max = 10;
  c.count = 100;
  c.distance = 0;
  c.seed = 21;
  auto data = synth_generate(c);
  TrainConfig cfg = small_config();
  cfg.layers = 1;
  cfg.p = 16;
  cfg.max_epochs = 200;
  cfg.patience = 50;
  cfg.batch = 16;
  for (auto b : {Backbone::gcn, Backbone::gin}) {
    auto r = train_one(cfg, spec_for_dataset(cfg, baseline_spec(b), data), data, 0);
    EXPECT_EQ(r.test_accuracy, 1.0) << to_string(b);
  }
}

TEST(Synth, Errors) {
  SynthConfig c;
  c.attributes = 1;
  EXPECT_THROW(synth_generate(c), UsageError);
  c = SynthConfig{};
  c.size_min = 7;
  c.size_max = 6;
  EXPECT_THROW(synth_generate(c), UsageError);
  EXPECT_THROW(parse_family("grid"), UsageError);
  EXPECT_EQ(parse_family("ring-of-cliques"), SynthFamily::ring_of_cliques);
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

TEST(Checkpoint, RoundTripIsExact) {
  auto data = small_barbells(4, 13);
  for (auto b : {Backbone::gcn, Backbone::gin, Backbone::panda_gcn, Backbone::panda_gin}) {
    ModelSpec spec = spec_for_dataset(small_config(), baseline_spec(b), data);
    Model m = Model::init(spec, 5);
    Model back = checkpoint_from_json(nlohmann::json::parse(checkpoint_to_json(m).dump()));
    ASSERT_EQ(back.params.size(), m.params.size());
    for (std::size_t i = 0; i < m.params.size(); ++i) {
      EXPECT_EQ(back.params.name(i), m.params.name(i));
      EXPECT_EQ(back.params.value(i), m.params.value(i));
    }
    auto g = prepare_graph(data[0], mask_for(spec, data[0].graph));
    EXPECT_EQ(predict_logits(back, g), predict_logits(m, g));
  }
}

TEST(Checkpoint, RejectsMismatches) {
  auto data = small_barbells(2, 14);
  Model m = Model::init(spec_for_dataset(small_config(), baseline_spec(), data), 1);
  auto j = checkpoint_to_json(m);
  auto bad_shape = j;
  bad_shape["params"][0]["rows"] = 99;
  EXPECT_THROW(checkpoint_from_json(bad_shape), SchemaError);
  auto bad_version = j;
  bad_version["version"] = 7;
  EXPECT_THROW(checkpoint_from_json(bad_version), SchemaError);
  auto bad_spec = j;
  bad_spec["spec"]["backbone"] = "mlp";
  EXPECT_THROW(checkpoint_from_json(bad_spec), SchemaError);
  auto missing = j;
  missing["params"].erase(0);
  EXPECT_THROW(checkpoint_from_json(missing), SchemaError);
}
