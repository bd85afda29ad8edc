#include <gtest/gtest.h>

#include <random>

#include "dense_reference.hpp"
#include "fixtures.hpp"
#include "qugia/graph.hpp"

using namespace qugia;
using fixtures::labeled_graph;

namespace {

InjectionPatch one_node_patch(std::vector<double> features, std::vector<NodeId> targets) {
  InjectionPatch p(features.size());
  const auto idx = p.add_node(features);
  for (NodeId t : targets) p.cross_edges.push_back({idx, t});
  return p;
}

ConstraintSpec loose_spec() {
  ConstraintSpec s;
  s.max_injected_nodes = 10;
  s.max_injected_edges = 100;
  s.degree_cap = 5;
  s.feature_min = 0.0;
  s.feature_max = 1.0;
  return s;
}

}  // namespace

TEST(GraphTest, RejectsSelfLoopsDuplicatesAndBadEndpoints) {
  auto rows = std::vector<std::vector<double>>(3, {0.0});
  EXPECT_THROW(labeled_graph(3, {{1, 1}}, rows, {0, 0, 0}, {}), Error);
  EXPECT_THROW(labeled_graph(3, {{0, 1}, {1, 0}}, rows, {0, 0, 0}, {}), Error);
  EXPECT_THROW(labeled_graph(3, {{0, 7}}, rows, {0, 0, 0}, {}), IndexError);
}

TEST(GraphTest, RejectsOverlappingMasksAndNonBinaryDiscreteFeatures) {
  Matrix x(2, 1);
  EXPECT_THROW(Graph(2, {}, x, {0, 0}, {true, false}, {true, false}, 2, FeatureKind::continuous),
               Error);
  Matrix y(2, 1, {0.0, 0.5});
  EXPECT_THROW(Graph(2, {}, y, {0, 0}, {true, false}, {false, true}, 2, FeatureKind::discrete),
               Error);
}

TEST(GraphTest, EdgesAreStoredWithLowerEndpointFirst) {
  auto g = labeled_graph(3, {{2, 0}}, {{0}, {0}, {0}}, {0, 0, 0}, {});
  ASSERT_EQ(g.edges().size(), 1u);
  EXPECT_EQ(g.edges()[0].u, 0u);
  EXPECT_EQ(g.edges()[0].v, 2u);
  EXPECT_TRUE(g.has_edge(2, 0));
}

TEST(ComposeTest, EmptyPatchLeavesGraphUnchanged) {
  const auto g = fixtures::path3();
  EXPECT_EQ(compose(g, InjectionPatch(g.feature_dim())), g);
}

TEST(ComposeTest, OneInjectedNodeWiredToNodeZero) {
  const auto g = fixtures::path3();
  const auto g2 = compose(g, one_node_patch({0.5, 0.5}, {0}));
  EXPECT_EQ(g2.num_nodes(), 4u);
  EXPECT_EQ(g2.num_edges(), g.num_edges() + 1);
  EXPECT_TRUE(g2.has_edge(3, 0));
  EXPECT_EQ(g2.labels()[3], kNoLabel);
  EXPECT_FALSE(g2.is_train(3));
  EXPECT_FALSE(g2.is_test(3));
  for (NodeId v = 0; v < 3; ++v) EXPECT_EQ(g2.labels()[v], g.labels()[v]);
}

TEST(ComposeTest, OutOfRangeTargetThrows) {
  std::vector<std::vector<double>> rows(10, {0.0});
  const auto g = labeled_graph(10, {}, rows, std::vector<int>(10, 0), {});
  EXPECT_THROW(compose(g, one_node_patch({0.0}, {99})), IndexError);
}

TEST(ComposeTest, DuplicateEdgeAndDimensionMismatchThrow) {
  const auto g = fixtures::path3();
  EXPECT_THROW(compose(g, one_node_patch({0.0, 0.0}, {1, 1})), Error);
  EXPECT_THROW(compose(g, one_node_patch({0.0, 0.0, 0.0}, {1})), ShapeError);
}

TEST(ComposeTest, InjectedDegreeMatchesIncidenceCountsOnRandomPatches) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const auto g = fixtures::random_graph(rng, 12, 3, 2, 0.2);
    const std::size_t m = 1 + rng() % 4;
    InjectionPatch p(3);
    for (std::size_t i = 0; i < m; ++i) p.add_node(std::vector<double>{0.1, 0.2, 0.3});
    for (std::size_t i = 0; i < m; ++i)
      for (NodeId t = 0; t < g.num_nodes(); ++t)
        if (rng() % 4 == 0) p.cross_edges.push_back({i, t});
    for (std::size_t a = 0; a < m; ++a)
      for (std::size_t b = a + 1; b < m; ++b)
        if (rng() % 2 == 0) p.inter_edges.push_back({a, b});
    const auto composed = compose(g, p);
    for (std::size_t i = 0; i < m; ++i)
      EXPECT_EQ(composed.degree(g.num_nodes() + i), p.injected_degree(i));
    EXPECT_EQ(compose(g, p), composed);
  }
}

TEST(ValidateConstraintsTest, EmptyPatchIsOk) {
  const auto g = fixtures::path3();
  EXPECT_TRUE(validate_constraints(g, InjectionPatch(2), loose_spec()).ok());
}

TEST(ValidateConstraintsTest, IsolatedInjectedNodeViolatesDegreeLowerBound) {
  const auto g = fixtures::path3();
  const auto verdict = validate_constraints(g, one_node_patch({0.5, 0.5}, {}), loose_spec());
  ASSERT_TRUE(verdict.has(ViolationKind::degree_out_of_range));
  EXPECT_NE(verdict.summary().find("degree 0 < 1"), std::string::npos);
}

TEST(ValidateConstraintsTest, FeatureAboveMaximumIsReported) {
  const auto g = fixtures::path3();
  auto spec = loose_spec();
  const auto verdict = validate_constraints(g, one_node_patch({spec.feature_max + 0.1, 0.0}, {0}), spec);
  ASSERT_TRUE(verdict.has(ViolationKind::feature_out_of_bounds));
  EXPECT_NE(verdict.summary().find("feature out of bounds"), std::string::npos);
}

TEST(ValidateConstraintsTest, BudgetAndCapViolations) {
  const auto g = fixtures::path3();
  auto spec = loose_spec();
  spec.max_injected_nodes = 0;
  spec.max_injected_edges = 2;
  spec.degree_cap = 2;
  const auto verdict = validate_constraints(g, one_node_patch({0.0, 0.0}, {0, 1, 2}), spec);
  EXPECT_TRUE(verdict.has(ViolationKind::too_many_nodes));
  EXPECT_TRUE(verdict.has(ViolationKind::too_many_edges));
  EXPECT_TRUE(verdict.has(ViolationKind::degree_out_of_range));
}

TEST(ValidateConstraintsTest, AgreesWithBruteForceCheckerOnRandomPatches) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> feat(-0.2, 1.2);
  int ok_seen = 0, bad_seen = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const auto g = fixtures::random_graph(rng, 8, 2, 2, 0.3);
    ConstraintSpec spec;
    spec.max_injected_nodes = rng() % 4;
    spec.max_injected_edges = rng() % 8;
    spec.degree_cap = 1 + rng() % 3;
    spec.feature_min = 0.0;
    spec.feature_max = 1.0;
    InjectionPatch p(2);
    const std::size_t m = rng() % 4;
    for (std::size_t i = 0; i < m; ++i) {
      std::vector<double> row{feat(rng), feat(rng)};
      if (rng() % 2) row = {0.5, 0.5};
      p.add_node(row);
    }
    for (std::size_t i = 0; i < m; ++i)
      for (NodeId t = 0; t < g.num_nodes(); ++t)
        if (rng() % 6 == 0) p.cross_edges.push_back({i, t});
    for (std::size_t a = 0; a + 1 < m; ++a)
      if (rng() % 3 == 0) p.inter_edges.push_back({a, a + 1});
    const bool fast = validate_constraints(g, p, spec).ok();
    const bool brute = ref::brute_force_check(g.num_nodes(), compose(g, p), spec).ok();
    EXPECT_EQ(fast, brute) << "trial " << trial;
    (fast ? ok_seen : bad_seen)++;
  }
  EXPECT_GT(ok_seen, 10);
  EXPECT_GT(bad_seen, 10);
}

TEST(ValidateConstraintsTest, MalformedPatchIsReportedNotThrown) {
  const auto g = fixtures::path3();
  const auto verdict = validate_constraints(g, one_node_patch({0.0, 0.0}, {42}), loose_spec());
  EXPECT_TRUE(verdict.has(ViolationKind::malformed));
}

TEST(NeighborSetTest, IsolatedPathAndStar) {
  auto iso = labeled_graph(2, {}, {{0}, {0}}, {0, 0}, {});
  EXPECT_TRUE(neighbor_set(iso, 0).empty());
  EXPECT_EQ(neighbor_set(fixtures::path3(), 1), (std::vector<NodeId>{0, 2}));
  auto star = labeled_graph(5, {{0, 1}, {0, 2}, {0, 3}, {0, 4}}, std::vector<std::vector<double>>(5, {0}),
                            std::vector<int>(5, 0), {});
  EXPECT_EQ(neighbor_set(star, 0).size(), 4u);
  EXPECT_THROW(neighbor_set(star, 5), IndexError);
}

TEST(TestNeighborScoreTest, CountsOnlyTestNeighbors) {
  std::vector<std::vector<double>> rows(5, {0});
  // node 0 has neighbors 1 (train), 2 (test), 3 (test); node 4 is isolated
  auto g = labeled_graph(5, {{0, 1}, {0, 2}, {0, 3}}, rows, std::vector<int>(5, 0), {0, 2, 3, 4});
  EXPECT_EQ(test_neighbor_score(g, 0), 2u);
  EXPECT_EQ(test_neighbor_score(g, 4), 0u);
  auto h = labeled_graph(3, {{0, 1}, {0, 2}}, {{0}, {0}, {0}}, {0, 0, 0}, {0});
  EXPECT_EQ(test_neighbor_score(h, 0), 0u);
  EXPECT_THROW(test_neighbor_score(g, 1), Error);
}

TEST(DefaultConstraintsTest, HundredNodesFivePercent) {
  std::vector<std::vector<double>> rows(100, {0.0});
  rows[3] = {1.0};
  const auto g = labeled_graph(100, {}, rows, std::vector<int>(100, 0), {});
  const auto spec = default_constraints(g, 0.05);
  EXPECT_EQ(spec.max_injected_nodes, 5u);
  EXPECT_EQ(spec.degree_cap, 1u);
  EXPECT_DOUBLE_EQ(spec.feature_min, 0.0);
  EXPECT_DOUBLE_EQ(spec.feature_max, 1.0);
}

TEST(DefaultConstraintsTest, FourCycle) {
  const auto spec = default_constraints(fixtures::four_cycle(), 0.25);
  EXPECT_EQ(spec.max_injected_nodes, 1u);
  EXPECT_EQ(spec.degree_cap, 2u);
  EXPECT_EQ(spec.max_injected_edges, 2u);
}

TEST(DefaultConstraintsTest, RejectsFractionOutsideUnitInterval) {
  EXPECT_THROW(default_constraints(fixtures::four_cycle(), 1.5), Error);
  EXPECT_THROW(default_constraints(fixtures::four_cycle(), -0.1), Error);
}
