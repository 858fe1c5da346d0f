#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <sstream>

#include "panda/dataset_io.hpp"
#include "panda/graph.hpp"
#include "test_support.hpp"

using namespace panda;
using namespace panda::testing;

namespace {

std::vector<GraphSample> parse(const std::string& text) {
  std::istringstream in(text);
  return read_dataset(in);
}

}  // namespace

TEST(LoadDataset, SmallestConnectedGraph) {
  auto ds = parse(R"({"num_nodes":2,"edges":[[0,1]],"node_feat":[[1],[0]],"label":0})");
  ASSERT_EQ(ds.size(), 1u);
  EXPECT_EQ(ds[0].graph.num_nodes(), 2u);
  EXPECT_EQ(ds[0].graph.num_edges(), 1u);
  EXPECT_EQ(ds[0].features.rows(), 2);
  EXPECT_EQ(ds[0].features.cols(), 1);
  EXPECT_EQ(ds[0].label, 0);
}

TEST(LoadDataset, EdgeOutOfRangeIsBoundsError) {
  EXPECT_THROW(parse(R"({"num_nodes":3,"edges":[[0,5]],"node_feat":[[1],[0],[0]],"label":0})"), BoundsError);
}

TEST(LoadDataset, SymmetrizesAndDeduplicates) {
  auto ds = parse(R"({"num_nodes":2,"edges":[[0,1],[1,0],[0,1],[1,1]],"node_feat":[[1],[0]],"label":1})");
  const auto& g = ds[0].graph;
  EXPECT_EQ(g.num_edges(), 1u);
  EXPECT_EQ(degrees(g, false), (std::vector<int>{1, 1}));
}

TEST(LoadDataset, MalformedLineReportsLineNumber) {
  const std::string text =
      R"({"num_nodes":1,"edges":[],"node_feat":[[0]],"label":0})"
      "\n\n{not json}\n";
  try {
    parse(text);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}

TEST(LoadDataset, NonUniformWidthIsSchemaError) {
  const std::string text =
      R"({"num_nodes":1,"edges":[],"node_feat":[[0]],"label":0})"
      "\n"
      R"({"num_nodes":1,"edges":[],"node_feat":[[0,1]],"label":0})";
  EXPECT_THROW(parse(text), SchemaError);
}

TEST(LoadDataset, MissingKeyIsParseError) {
  EXPECT_THROW(parse(R"({"num_nodes":1,"edges":[],"label":0})"), ParseError);
}

TEST(LoadDataset, RoundTripIsExact) {
  Rng rng(7);
  std::vector<GraphSample> samples;
  for (int i = 0; i < 25; ++i) {
    const std::size_t n = 1 + rng.index(12);
    GraphSample s{random_graph(n, 0.3, rng), random_matrix(static_cast<Eigen::Index>(n), 3, rng, 1e3), static_cast<int>(rng.index(3))};
    samples.push_back(std::move(s));
  }
  std::stringstream buf;
  write_dataset(buf, samples);
  const auto back = read_dataset(buf);
  ASSERT_EQ(back.size(), samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    EXPECT_EQ(back[i].graph, samples[i].graph);
    EXPECT_EQ(back[i].label, samples[i].label);
    ASSERT_EQ(back[i].features.size(), samples[i].features.size());
    EXPECT_EQ(0, std::memcmp(back[i].features.data(), samples[i].features.data(),
                             sizeof(double) * static_cast<std::size_t>(samples[i].features.size())));
  }
}

TEST(SplitDataset, SizesAndDeterminism) {
  auto s = split_dataset(20, 0);
  EXPECT_EQ(s.train.size(), 16u);
  EXPECT_EQ(s.val.size(), 2u);
  EXPECT_EQ(s.test.size(), 2u);
  auto again = split_dataset(20, 0);
  EXPECT_EQ(s.train, again.train);
  EXPECT_EQ(s.val, again.val);
  EXPECT_EQ(s.test, again.test);
}

TEST(SplitDataset, MutagScale) {
  // floor(188 * 0.1) = 18 for val and test, remainder to train
  const std::size_t held = static_cast<std::size_t>(188 / 10);
  auto s = split_dataset(188, 3);
  EXPECT_EQ(s.val.size(), held);
  EXPECT_EQ(s.test.size(), held);
  EXPECT_EQ(s.train.size(), 188 - 2 * held);
  EXPECT_EQ(s.train.size(), 152u);
}

TEST(SplitDataset, PartitionIsDisjointCover) {
  for (std::size_t n : {10u, 11u, 37u, 99u}) {
    auto s = split_dataset(n, n);
    std::vector<std::size_t> all;
    for (const auto* part : {&s.train, &s.val, &s.test}) all.insert(all.end(), part->begin(), part->end());
    std::sort(all.begin(), all.end());
    ASSERT_EQ(all.size(), n);
    for (std::size_t i = 0; i < n; ++i) EXPECT_EQ(all[i], i);
  }
}

TEST(SplitDataset, TooFewSamples) { EXPECT_THROW(split_dataset(9, 0), SizeError); }

TEST(SplitDataset, ManifestRoundTrip) {
  auto s = split_dataset(30, 5);
  std::stringstream buf;
  write_split_manifest(buf, s);
  auto back = read_split_manifest(buf);
  EXPECT_EQ(back.train, s.train);
  EXPECT_EQ(back.val, s.val);
  EXPECT_EQ(back.test, s.test);
}

TEST(Degrees, Examples) {
  auto p = path_graph(3);
  EXPECT_EQ(degrees(p, false), (std::vector<int>{1, 2, 1}));
  EXPECT_EQ(degrees(p, true), (std::vector<int>{2, 3, 2}));
  auto g = Graph::from_edges(3, std::vector<Edge>{{0, 1}});
  EXPECT_EQ(degrees(g, false)[2], 0);
}

TEST(Degrees, HandshakeProperty) {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    auto g = random_graph(1 + rng.index(20), rng.uniform(), rng);
    auto d = degrees(g, false);
    long sum = 0;
    for (int x : d) sum += x;
    EXPECT_EQ(sum, static_cast<long>(2 * g.num_edges()));
  }
}

TEST(GraphInvariants, SortedSymmetricLoopFree) {
  Rng rng(12);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 2 + rng.index(10);
    std::vector<Edge> raw;
    for (int i = 0; i < 40; ++i) raw.emplace_back(static_cast<NodeId>(rng.index(n)), static_cast<NodeId>(rng.index(n)));
    auto g = Graph::from_edges(n, raw);
    for (NodeId u = 0; u < n; ++u) {
      auto row = g.neighbors(u);
      EXPECT_TRUE(std::is_sorted(row.begin(), row.end()));
      EXPECT_TRUE(std::adjacent_find(row.begin(), row.end()) == row.end());
      for (NodeId v : row) {
        EXPECT_NE(u, v);
        EXPECT_TRUE(g.has_edge(v, u));
      }
    }
  }
}

TEST(ShortestPaths, Examples) {
  EXPECT_EQ(shortest_path_lengths(path_graph(3), 0), (std::vector<std::size_t>{0, 1, 2}));
  auto g = Graph::from_edges(3, std::vector<Edge>{{0, 1}});
  EXPECT_EQ(shortest_path_lengths(g, 0)[2], kUnreachable);
}

TEST(ShortestPaths, FourCycleMatchesEnumeration) {
  auto g = cycle_graph(4);
  std::vector<std::size_t> oracle(4);
  oracle[0] = 0;
  for (NodeId t = 1; t < 4; ++t) oracle[t] = all_shortest_paths_bruteforce(g, 0, t).front().size() - 1;
  EXPECT_EQ(oracle, (std::vector<std::size_t>{0, 1, 2, 1}));
  EXPECT_EQ(shortest_path_lengths(g, 0), oracle);
}

TEST(ShiftMatrix, SymNormalizedProperties) {
  Rng rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    auto g = random_graph(2 + rng.index(12), 0.4, rng);
    auto s = ShiftMatrix::build(g, ShiftKind::sym_normalized_self_loops);
    Matrix dense = Matrix(s.values);
    EXPECT_LT((dense - dense.transpose()).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_GT(dense.rowwise().sum().minCoeff(), 0.0);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es{Eigen::MatrixXd(dense)};
    EXPECT_LE(es.eigenvalues().cwiseAbs().maxCoeff(), 1.0 + 1e-12);
  }
}

TEST(ShiftMatrix, IsolatedNodeHasUnitDiagonal) {
  auto g = Graph::from_edges(3, std::vector<Edge>{{0, 1}});
  auto s = ShiftMatrix::build(g, ShiftKind::sym_normalized_self_loops);
  EXPECT_DOUBLE_EQ(s.values.coeff(2, 2), 1.0);
  EXPECT_DOUBLE_EQ(s.values.coeff(0, 1), 0.5);
}
