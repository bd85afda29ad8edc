#include <gtest/gtest.h>

#include <random>

#include "dense_reference.hpp"
#include "fixtures.hpp"
#include "qugia/eval.hpp"
#include "qugia/models.hpp"
#include "qugia/sparse.hpp"

using namespace qugia;

namespace {

ModelWeights identity_gcn(std::size_t d) {
  ModelWeights w;
  w.kind = ModelKind::gcn;
  std::vector<double> eye(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i) eye[i * d + i] = 1.0;
  w.layers = {{"W1", {d, d}, eye}, {"b1", {d}, std::vector<double>(d, 0.0)},
              {"W2", {d, d}, eye}, {"b2", {d}, std::vector<double>(d, 0.0)}};
  return w;
}

}  // namespace

TEST(NormalizeAdjacencyTest, IsolatedNodeHasUnitSelfLoop) {
  const auto adj = normalize_adjacency(1, std::vector<Edge>{});
  EXPECT_DOUBLE_EQ(adj.at(0, 0), 1.0);
}

TEST(NormalizeAdjacencyTest, SingleEdgeGivesAllHalves) {
  const auto adj = normalize_adjacency(2, std::vector<Edge>{{0, 1}});
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t c = 0; c < 2; ++c) EXPECT_DOUBLE_EQ(adj.at(r, c), 0.5);
}

TEST(NormalizeAdjacencyTest, EmptyGraphGivesEmptyOperator) {
  const auto adj = normalize_adjacency(0, std::vector<Edge>{});
  EXPECT_EQ(adj.size(), 0u);
  EXPECT_EQ(adj.nnz(), 0u);
}

TEST(NormalizeAdjacencyTest, MatchesDenseOracleEntrywise) {
  std::mt19937_64 rng(3);
  const auto g = fixtures::random_graph(rng, 15, 2, 2, 0.3);
  const auto adj = normalize_adjacency(g);
  const auto dense = ref::normalized_adjacency(g.num_nodes(), g.edges());
  for (std::size_t r = 0; r < g.num_nodes(); ++r)
    for (std::size_t c = 0; c < g.num_nodes(); ++c) EXPECT_NEAR(adj.at(r, c), dense[r][c], 1e-12);
}

TEST(ForwardTest, IsolatedNodeWithIdentityGcnReturnsFeatures) {
  const auto g = fixtures::labeled_graph(1, {}, {{0.3, 0.7}}, {0}, {0});
  const auto logits = forward(identity_gcn(2), g);
  EXPECT_DOUBLE_EQ(logits(0, 0), 0.3);
  EXPECT_DOUBLE_EQ(logits(0, 1), 0.7);
}

TEST(ForwardTest, AppnpWithFullTeleportEqualsMlp) {
  std::mt19937_64 rng(21);
  const auto g = fixtures::random_graph(rng, 10, 4, 3, 0.4);
  auto w = fixtures::random_weights(rng, ModelKind::appnp, 4, 5, 3);
  w.hyper["alpha"] = 1.0;
  const auto logits = forward(w, g);
  EXPECT_LE(ref::max_abs_diff(ref::mlp(w, ref::from_matrix(g.features())), logits), 1e-12);
}

TEST(ForwardTest, TwoNodeGcnMatchesHandComputation) {
  // x0 = [1, 0], x1 = [0, 2], one edge, all entries of A-hat are 0.5.
  const auto g = fixtures::labeled_graph(2, {{0, 1}}, {{1, 0}, {0, 2}}, {0, 1}, {1});
  ModelWeights w;
  w.kind = ModelKind::gcn;
  w.layers = {{"W1", {2, 2}, {1, -1, 0.5, 1}}, {"b1", {2}, {0.1, -0.5}},
              {"W2", {2, 2}, {1, 0, -1, 2}},    {"b2", {2}, {0.0, 0.3}}};
  // XW1 = [[1,-1],[1,2]]; A-hat . XW1 = [[1,0.5],[1,0.5]]; + b1 -> [[1.1,0],[1.1,0]]
  // H W2 = [[1.1, 0]] per row; A-hat . (H W2) = [[1.1, 0]]; + b2 -> [1.1, 0.3]
  const auto logits = forward(w, g);
  for (std::size_t v = 0; v < 2; ++v) {
    EXPECT_NEAR(logits(v, 0), 1.1, 1e-12);
    EXPECT_NEAR(logits(v, 1), 0.3, 1e-12);
  }
}

class ForwardOracleTest : public ::testing::TestWithParam<ModelKind> {};

TEST_P(ForwardOracleTest, MatchesDenseOracleOnRandomSmallGraphs) {
  std::mt19937_64 rng(100 + static_cast<int>(GetParam()));
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + rng() % 20;
    const auto g = fixtures::random_graph(rng, n, 5, 3, 0.25);
    const auto w = fixtures::random_weights(rng, GetParam(), 5, 6, 3);
    EXPECT_LE(ref::max_abs_diff(ref::forward(w, g), forward(w, g)), 1e-6) << "trial " << trial;
  }
}

INSTANTIATE_TEST_SUITE_P(AllKinds, ForwardOracleTest,
                         ::testing::Values(ModelKind::gcn, ModelKind::appnp, ModelKind::gat),
                         [](const auto& info) { return std::string(to_string(info.param)); });

TEST(ForwardTest, IsDeterministic) {
  std::mt19937_64 rng(8);
  const auto g = fixtures::random_graph(rng, 12, 4, 2, 0.3);
  const auto w = fixtures::random_weights(rng, ModelKind::gat, 4, 4, 2);
  EXPECT_EQ(forward(w, g), forward(w, g));
}

TEST(ForwardTest, ShapeMismatchThrows) {
  std::mt19937_64 rng(8);
  const auto g = fixtures::random_graph(rng, 6, 4, 2, 0.3);
  EXPECT_THROW(forward(fixtures::random_weights(rng, ModelKind::gcn, 3, 4, 2), g), ShapeError);
  EXPECT_THROW(forward(fixtures::random_weights(rng, ModelKind::gcn, 4, 4, 3), g), ShapeError);
}

TEST(WeightsTest, ValidateCatchesBrokenChaining) {
  std::mt19937_64 rng(1);
  auto w = fixtures::random_weights(rng, ModelKind::gcn, 3, 4, 2);
  w.layer("W2") = fixtures::random_tensor(rng, "W2", {5, 2});
  EXPECT_THROW(w.validate(), ShapeError);
  auto gat = fixtures::random_weights(rng, ModelKind::gat, 3, 4, 2);
  gat.layers.pop_back();
  EXPECT_THROW(gat.validate(), ShapeError);
}

TEST(GuardPruneTest, IdenticalKeptOrthogonalPruned) {
  const auto same = fixtures::labeled_graph(2, {{0, 1}}, {{1, 2}, {1, 2}}, {0, 0}, {});
  EXPECT_EQ(guard_prune(same, 0.5).size(), 1u);
  const auto orth = fixtures::labeled_graph(2, {{0, 1}}, {{1, 0}, {0, 1}}, {0, 0}, {});
  EXPECT_TRUE(guard_prune(orth, 0.1).empty());
}

TEST(GuardPruneTest, ZeroNormScoresZero) {
  const auto g = fixtures::labeled_graph(2, {{0, 1}}, {{0, 0}, {0, 1}}, {0, 0}, {});
  EXPECT_DOUBLE_EQ(cosine_similarity(g.features(0), g.features(1)), 0.0);
  EXPECT_EQ(guard_prune(g, 0.0).size(), 1u);
  EXPECT_TRUE(guard_prune(g, 0.01).empty());
}

TEST(GuardPruneTest, ThresholdMinusOneIsIdentityAndPruningIsMonotone) {
  std::mt19937_64 rng(44);
  for (int trial = 0; trial < 20; ++trial) {
    const auto g = fixtures::random_graph(rng, 15, 3, 2, 0.3);
    EXPECT_EQ(guard_prune(g, -1.0), g.edges());
    std::vector<Edge> previous = g.edges();
    for (double t = -1.0; t <= 1.0; t += 0.1) {
      const auto kept = guard_prune(g, t);
      for (const auto& e : kept)
        EXPECT_NE(std::find(previous.begin(), previous.end(), e), previous.end());
      previous = kept;
    }
  }
}

TEST(DefenseTest, IsolatedNodePredictionIgnoresThreshold) {
  std::mt19937_64 rng(9);
  // node 0 isolated, the rest connected
  const auto g = fixtures::labeled_graph(4, {{1, 2}, {2, 3}}, {{0.5, -1}, {1, 1}, {-1, 2}, {0.3, 0.3}},
                                         {0, 1, 0, 1}, {0});
  const auto w = fixtures::random_weights(rng, ModelKind::gcn, 2, 4, 2);
  const auto base = forward(w, g);
  for (double t : {-1.0, 0.0, 0.5, 1.0}) {
    const auto logits = forward(w, g, DefenseConfig{true, t});
    EXPECT_DOUBLE_EQ(logits(0, 0), base(0, 0));
    EXPECT_DOUBLE_EQ(logits(0, 1), base(0, 1));
  }
}

TEST(DefenseTest, OracleMatchesForwardOnComposedGraph) {
  std::mt19937_64 rng(17);
  const auto g = fixtures::random_graph(rng, 14, 4, 2, 0.25);
  const auto w = fixtures::random_weights(rng, ModelKind::gcn, 4, 5, 2);
  InjectionPatch p(4);
  p.add_node(std::vector<double>{0.1, -0.4, 0.9, 0.0});
  p.add_node(std::vector<double>{1.0, 1.0, -1.0, 0.2});
  p.cross_edges = {{0, 1}, {0, 5}, {1, 2}};
  p.inter_edges = {{0, 1}};
  for (bool enabled : {false, true}) {
    const DefenseConfig def{enabled, 0.1};
    const ModelOracle oracle(w, g, def);
    EXPECT_LE(ref::max_abs_diff(ref::from_matrix(forward(w, compose(g, p), def)), oracle.query(p)),
              1e-12);
  }
}

TEST(PredictTest, ArgmaxWithLowestIdTieBreak) {
  Matrix logits(2, 2, {0.2, 0.9, 0.5, 0.5});
  EXPECT_EQ(argmax_rows(logits), (std::vector<int>{1, 0}));
}

TEST(PredictTest, ConsistentWithAccuracyRecomputation) {
  std::mt19937_64 rng(2);
  const auto g = fixtures::random_graph(rng, 20, 3, 2, 0.2);
  const auto w = fixtures::random_weights(rng, ModelKind::gcn, 3, 4, 2);
  const auto pred = predict(w, g);
  const auto logits = forward(w, g);
  std::size_t total = 0, correct = 0;
  for (NodeId v = 0; v < g.num_nodes(); ++v) {
    if (!g.is_test(v)) continue;
    ++total;
    correct += (logits(v, 1) > logits(v, 0) ? 1 : 0) == g.labels()[v];
  }
  EXPECT_DOUBLE_EQ(accuracy(pred, g.labels(), g.test_mask()),
                   static_cast<double>(correct) / static_cast<double>(total));
}
