#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iterator>
#include <random>
#include <string>
#include <vector>

#include "qugia/attack.hpp"
#include "qugia/graph.hpp"

namespace qugia {

enum class BaselineKind {
  random_edges_random_features,
  qugia_edges_random_features,
};

inline const char* to_string(BaselineKind kind) {
  return kind == BaselineKind::random_edges_random_features ? "random" : "random-feat";
}

namespace detail {

inline std::vector<double> random_features(std::size_t dim, const ConstraintSpec& constraints,
                                           FeatureKind kind, Rng& rng) {
  std::uniform_real_distribution<double> dist(constraints.feature_min, constraints.feature_max);
  const double mid = (constraints.feature_min + constraints.feature_max) / 2.0;
  std::vector<double> row(dim);
  for (double& x : row) {
    x = dist(rng);
    if (kind == FeatureKind::discrete) x = x >= mid ? constraints.feature_max : constraints.feature_min;
  }
  return row;
}

}  // namespace detail

/// Model-free reference injections. Both stay inside the constraint set:
/// every injected node gets between 1 and b edges and the edge budget is
/// never exceeded.
inline InjectionPatch run_baseline(const Graph& graph, BaselineKind kind,
                                   const ConstraintSpec& constraints, std::uint64_t seed,
                                   std::size_t neighbor_edges = 3) {
  constraints.validate();
  Rng rng(seed);
  InjectionPatch patch(graph.feature_dim());
  const auto test = graph.test_nodes();
  if (test.empty()) return patch;

  std::vector<NodeId> ranked;
  VictimQueue queue;
  if (kind == BaselineKind::qugia_edges_random_features) {
    queue = rank_victims(graph);
    ranked = queue.order();
  }

  std::size_t edges_left = constraints.max_injected_edges;
  for (std::size_t i = 0; i < constraints.max_injected_nodes; ++i) {
    const std::size_t nodes_left = constraints.max_injected_nodes - i;
    if (edges_left == 0) break;
    const std::size_t cap =
        edges_left >= nodes_left ? std::min(constraints.degree_cap, edges_left - (nodes_left - 1))
                                 : 1;
    std::vector<NodeId> targets;
    if (kind == BaselineKind::random_edges_random_features) {
      std::sample(test.begin(), test.end(), std::back_inserter(targets),
                  std::min(cap, test.size()), rng);
    } else {
      if (i >= ranked.size()) break;
      targets = generate_edges(graph, ranked[i], neighbor_edges, cap, rng);
    }
    const std::size_t idx =
        patch.add_node(detail::random_features(graph.feature_dim(), constraints,
                                               graph.feature_kind(), rng));
    for (NodeId t : targets) patch.cross_edges.push_back({idx, t});
    edges_left -= targets.size();
  }
  return patch;
}

}  // namespace qugia
