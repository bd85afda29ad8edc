#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "qugia/error.hpp"
#include "qugia/matrix.hpp"

namespace qugia {

using NodeId = std::size_t;

enum class FeatureKind { discrete, continuous };

inline const char* to_string(FeatureKind kind) {
  return kind == FeatureKind::discrete ? "discrete" : "continuous";
}

/// Undirected edge, stored with u < v.
struct Edge {
  NodeId u = 0;
  NodeId v = 0;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

/// Label value carried by nodes that have no class (injected nodes).
inline constexpr int kNoLabel = -1;

/// Immutable attributed graph: undirected deduplicated edges, dense node
/// features, labels and disjoint train/test masks.
class Graph {
 public:
  Graph() = default;

  Graph(std::size_t num_nodes, std::vector<Edge> edges, Matrix features,
        std::vector<int> labels, std::vector<bool> train_mask,
        std::vector<bool> test_mask, std::size_t num_classes,
        FeatureKind kind)
      : num_nodes_(num_nodes),
        num_classes_(num_classes),
        kind_(kind),
        edges_(std::move(edges)),
        features_(std::move(features)),
        labels_(std::move(labels)),
        train_mask_(std::move(train_mask)),
        test_mask_(std::move(test_mask)) {
    validate_and_index();
  }

  std::size_t num_nodes() const { return num_nodes_; }
  std::size_t num_edges() const { return edges_.size(); }
  std::size_t feature_dim() const { return features_.cols(); }
  std::size_t num_classes() const { return num_classes_; }
  FeatureKind feature_kind() const { return kind_; }

  const std::vector<Edge>& edges() const { return edges_; }
  const Matrix& features() const { return features_; }
  std::span<const double> features(NodeId v) const { return features_.row(v); }
  const std::vector<int>& labels() const { return labels_; }
  const std::vector<bool>& train_mask() const { return train_mask_; }
  const std::vector<bool>& test_mask() const { return test_mask_; }

  bool is_train(NodeId v) const { return train_mask_[v]; }
  bool is_test(NodeId v) const { return test_mask_[v]; }

  /// Sorted first-order neighbors.
  std::span<const NodeId> neighbors(NodeId v) const {
    check_node(v);
    return {adjacency_.data() + offsets_[v], offsets_[v + 1] - offsets_[v]};
  }
  std::size_t degree(NodeId v) const { return neighbors(v).size(); }

  bool has_edge(NodeId a, NodeId b) const {
    auto nb = neighbors(a);
    return std::binary_search(nb.begin(), nb.end(), b);
  }

  double average_degree() const {
    if (num_nodes_ == 0) return 0.0;
    return 2.0 * static_cast<double>(edges_.size()) /
           static_cast<double>(num_nodes_);
  }

  std::vector<NodeId> test_nodes() const {
    std::vector<NodeId> out;
    for (NodeId v = 0; v < num_nodes_; ++v)
      if (test_mask_[v]) out.push_back(v);
    return out;
  }

  void check_node(NodeId v) const {
    if (v >= num_nodes_)
      throw IndexError("node " + std::to_string(v) + " out of range (" +
                       std::to_string(num_nodes_) + " nodes)");
  }

  friend bool operator==(const Graph& a, const Graph& b) {
    return a.num_nodes_ == b.num_nodes_ && a.num_classes_ == b.num_classes_ &&
           a.kind_ == b.kind_ && a.edges_ == b.edges_ &&
           a.features_ == b.features_ && a.labels_ == b.labels_ &&
           a.train_mask_ == b.train_mask_ && a.test_mask_ == b.test_mask_;
  }

 private:
  void validate_and_index() {
    const std::size_t n = num_nodes_;
    if (features_.rows() != n)
      throw ShapeError("feature rows (" + std::to_string(features_.rows()) +
                       ") != num_nodes (" + std::to_string(n) + ")");
    if (labels_.size() != n || train_mask_.size() != n || test_mask_.size() != n)
      throw ShapeError("labels/masks must have one entry per node");
    for (NodeId v = 0; v < n; ++v) {
      if (train_mask_[v] && test_mask_[v])
        throw Error("node " + std::to_string(v) + " is in both train and test sets");
      const int y = labels_[v];
      if (y != kNoLabel && (y < 0 || static_cast<std::size_t>(y) >= num_classes_))
        throw Error("label of node " + std::to_string(v) + " out of range");
      if ((train_mask_[v] || test_mask_[v]) && y == kNoLabel)
        throw Error("masked node " + std::to_string(v) + " has no label");
    }
    if (kind_ == FeatureKind::discrete) {
      for (double x : features_.data())
        if (x != 0.0 && x != 1.0)
          throw Error("discrete graph has a feature value outside {0,1}");
    }
    for (double x : features_.data())
      if (!std::isfinite(x)) throw Error("non-finite feature value");

    for (auto& e : edges_) {
      if (e.u == e.v) throw Error("self-loop on node " + std::to_string(e.u));
      if (e.u >= n || e.v >= n)
        throw IndexError("edge endpoint out of range: (" + std::to_string(e.u) +
                         "," + std::to_string(e.v) + ")");
      if (e.u > e.v) std::swap(e.u, e.v);
    }
    std::vector<Edge> sorted = edges_;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
      throw Error("duplicate undirected edge");

    std::vector<std::size_t> deg(n, 0);
    for (const auto& e : edges_) {
      ++deg[e.u];
      ++deg[e.v];
    }
    offsets_.assign(n + 1, 0);
    for (std::size_t v = 0; v < n; ++v) offsets_[v + 1] = offsets_[v] + deg[v];
    adjacency_.resize(offsets_[n]);
    std::vector<std::size_t> cursor(offsets_.begin(), offsets_.end() - 1);
    for (const auto& e : edges_) {
      adjacency_[cursor[e.u]++] = e.v;
      adjacency_[cursor[e.v]++] = e.u;
    }
    for (std::size_t v = 0; v < n; ++v)
      std::sort(adjacency_.begin() + static_cast<std::ptrdiff_t>(offsets_[v]),
                adjacency_.begin() + static_cast<std::ptrdiff_t>(offsets_[v + 1]));
  }

  std::size_t num_nodes_ = 0;
  std::size_t num_classes_ = 0;
  FeatureKind kind_ = FeatureKind::continuous;
  std::vector<Edge> edges_;
  Matrix features_;
  std::vector<int> labels_;
  std::vector<bool> train_mask_;
  std::vector<bool> test_mask_;
  std::vector<std::size_t> offsets_{0};
  std::vector<NodeId> adjacency_;
};

/// Injected block of a graph injection attack: features of the new nodes,
/// edges from new nodes into the original graph, and edges among new nodes.
/// Injected node i receives id `graph.num_nodes() + i` once composed.
struct InjectionPatch {
  struct CrossEdge {
    std::size_t injected = 0;
    NodeId target = 0;
    friend auto operator<=>(const CrossEdge&, const CrossEdge&) = default;
  };
  struct InterEdge {
    std::size_t a = 0;
    std::size_t b = 0;
    friend auto operator<=>(const InterEdge&, const InterEdge&) = default;
  };

  Matrix injected_features;  // num_injected x feature_dim
  std::vector<CrossEdge> cross_edges;
  std::vector<InterEdge> inter_edges;

  InjectionPatch() = default;
  explicit InjectionPatch(std::size_t feature_dim)
      : injected_features(0, feature_dim) {}

  std::size_t num_injected() const { return injected_features.rows(); }
  std::size_t feature_dim() const { return injected_features.cols(); }
  std::size_t num_edges() const { return cross_edges.size() + inter_edges.size(); }

  std::size_t injected_degree(std::size_t i) const {
    std::size_t d = 0;
    for (const auto& e : cross_edges) d += (e.injected == i);
    for (const auto& e : inter_edges) d += (e.a == i) + (e.b == i);
    return d;
  }

  bool has_cross_edge(std::size_t i, NodeId target) const {
    return std::find(cross_edges.begin(), cross_edges.end(),
                     CrossEdge{i, target}) != cross_edges.end();
  }

  /// Appends an injected node and returns its patch-local index.
  std::size_t add_node(std::span<const double> features) {
    injected_features.append_row(features);
    return injected_features.rows() - 1;
  }

  friend bool operator==(const InjectionPatch&, const InjectionPatch&) = default;
};

/// Injection budget and feasibility bounds.
struct ConstraintSpec {
  std::size_t max_injected_nodes = 0;
  std::size_t max_injected_edges = 0;
  std::size_t degree_cap = 1;
  double feature_min = 0.0;
  double feature_max = 1.0;

  void validate() const {
    if (degree_cap < 1) throw Error("degree cap must be at least 1");
    if (!(feature_min <= feature_max))
      throw Error("feature_min must not exceed feature_max");
  }
};

enum class ViolationKind {
  too_many_nodes,
  too_many_edges,
  degree_out_of_range,
  feature_out_of_bounds,
  malformed,
};

struct Violation {
  ViolationKind kind;
  std::string message;
};

struct ConstraintVerdict {
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }
  bool has(ViolationKind kind) const {
    return std::any_of(violations.begin(), violations.end(),
                       [&](const Violation& v) { return v.kind == kind; });
  }
  std::string summary() const {
    if (ok()) return "ok";
    std::string out;
    for (const auto& v : violations) {
      if (!out.empty()) out += "; ";
      out += v.message;
    }
    return out;
  }
};

namespace detail {

// Structural problems of a patch against a graph; empty when well formed.
inline std::vector<std::string> patch_structure_errors(const Graph& graph,
                                                       const InjectionPatch& patch) {
  std::vector<std::string> errors;
  const std::size_t m = patch.num_injected();
  if (m > 0 && patch.feature_dim() != graph.feature_dim())
    errors.push_back("patch feature dimension " + std::to_string(patch.feature_dim()) +
                     " != graph feature dimension " + std::to_string(graph.feature_dim()));
  std::set<std::pair<std::size_t, NodeId>> cross;
  for (const auto& e : patch.cross_edges) {
    if (e.injected >= m)
      errors.push_back("cross edge references injected node " + std::to_string(e.injected));
    if (e.target >= graph.num_nodes())
      errors.push_back("cross edge references node " + std::to_string(e.target) +
                       " outside the original graph");
    if (!cross.insert({e.injected, e.target}).second)
      errors.push_back("duplicate cross edge (" + std::to_string(e.injected) + "," +
                       std::to_string(e.target) + ")");
  }
  std::set<std::pair<std::size_t, std::size_t>> inter;
  for (const auto& e : patch.inter_edges) {
    if (e.a >= m || e.b >= m)
      errors.push_back("inter edge references injected node out of range");
    if (e.a == e.b) errors.push_back("inter edge is a self-loop");
    if (!inter.insert(std::minmax(e.a, e.b)).second)
      errors.push_back("duplicate inter edge (" + std::to_string(e.a) + "," +
                       std::to_string(e.b) + ")");
  }
  return errors;
}

}  // namespace detail

/// Appends the patch to the graph. Original ids, edges and masks are kept;
/// injected nodes get ids >= num_nodes, no label and no mask membership.
inline Graph compose(const Graph& graph, const InjectionPatch& patch) {
  if (auto errors = detail::patch_structure_errors(graph, patch); !errors.empty()) {
    bool index_problem = std::any_of(errors.begin(), errors.end(), [](const std::string& s) {
      return s.find("references") != std::string::npos;
    });
    if (index_problem) throw IndexError(errors.front());
    if (errors.front().find("dimension") != std::string::npos) throw ShapeError(errors.front());
    throw Error(errors.front());
  }
  const std::size_t n = graph.num_nodes();
  const std::size_t m = patch.num_injected();
  if (m == 0 && patch.num_edges() == 0) return graph;

  std::vector<Edge> edges = graph.edges();
  edges.reserve(edges.size() + patch.num_edges());
  for (const auto& e : patch.cross_edges) edges.push_back({e.target, n + e.injected});
  for (const auto& e : patch.inter_edges) {
    auto [a, b] = std::minmax(e.a, e.b);
    edges.push_back({n + a, n + b});
  }

  std::vector<double> feats = graph.features().data();
  const auto& inj = patch.injected_features.data();
  feats.insert(feats.end(), inj.begin(), inj.end());

  std::vector<int> labels = graph.labels();
  labels.resize(n + m, kNoLabel);
  std::vector<bool> train = graph.train_mask();
  train.resize(n + m, false);
  std::vector<bool> test = graph.test_mask();
  test.resize(n + m, false);

  // Injected discrete nodes must still be binary; the Graph constructor
  // enforces that, so an out-of-domain patch surfaces as an error here.
  return Graph(n + m, std::move(edges), Matrix(n + m, graph.feature_dim(), std::move(feats)),
               std::move(labels), std::move(train), std::move(test), graph.num_classes(),
               graph.feature_kind());
}

/// Checks every injection clause: node budget, edge budget, per-node degree
/// in [1, b], and feature values inside [feature_min, feature_max].
inline ConstraintVerdict validate_constraints(const Graph& graph, const InjectionPatch& patch,
                                              const ConstraintSpec& spec) {
  ConstraintVerdict verdict;
  for (auto& msg : detail::patch_structure_errors(graph, patch))
    verdict.violations.push_back({ViolationKind::malformed, std::move(msg)});

  const std::size_t m = patch.num_injected();
  if (m > spec.max_injected_nodes)
    verdict.violations.push_back(
        {ViolationKind::too_many_nodes, "injected nodes " + std::to_string(m) +
                                            " > budget " + std::to_string(spec.max_injected_nodes)});
  if (patch.num_edges() > spec.max_injected_edges)
    verdict.violations.push_back(
        {ViolationKind::too_many_edges, "injected edges " + std::to_string(patch.num_edges()) +
                                            " > budget " + std::to_string(spec.max_injected_edges)});

  std::vector<std::size_t> degree(m, 0);
  for (const auto& e : patch.cross_edges)
    if (e.injected < m) ++degree[e.injected];
  for (const auto& e : patch.inter_edges) {
    if (e.a < m) ++degree[e.a];
    if (e.b < m) ++degree[e.b];
  }
  for (std::size_t i = 0; i < m; ++i) {
    if (degree[i] < 1)
      verdict.violations.push_back({ViolationKind::degree_out_of_range,
                                    "injected node " + std::to_string(i) + ": degree 0 < 1"});
    else if (degree[i] > spec.degree_cap)
      verdict.violations.push_back(
          {ViolationKind::degree_out_of_range,
           "injected node " + std::to_string(i) + ": degree " + std::to_string(degree[i]) +
               " > cap " + std::to_string(spec.degree_cap)});
  }
  for (std::size_t i = 0; i < m; ++i) {
    for (double x : patch.injected_features.row(i)) {
      if (!(x >= spec.feature_min && x <= spec.feature_max)) {
        verdict.violations.push_back({ViolationKind::feature_out_of_bounds,
                                      "injected node " + std::to_string(i) +
                                          ": feature out of bounds"});
        break;
      }
    }
  }
  return verdict;
}

/// First-order neighbors N(v), ascending.
inline std::vector<NodeId> neighbor_set(const Graph& graph, NodeId node) {
  auto nb = graph.neighbors(node);
  return {nb.begin(), nb.end()};
}

/// First-order neighbors of `node` that belong to the test set.
inline std::vector<NodeId> test_neighbors(const Graph& graph, NodeId node) {
  std::vector<NodeId> out;
  for (NodeId m : graph.neighbors(node))
    if (graph.is_test(m)) out.push_back(m);
  return out;
}

/// |p_u|: number of first-order neighbors of a test node that are test nodes.
inline std::size_t test_neighbor_score(const Graph& graph, NodeId node) {
  graph.check_node(node);
  if (!graph.is_test(node))
    throw Error("node " + std::to_string(node) + " is not in the test set");
  return test_neighbors(graph, node).size();
}

/// Budget derived from the evaluation protocol: ceil(a*n) injected nodes,
/// degree cap = rounded average degree, edge budget = nodes * cap.
inline ConstraintSpec default_constraints(const Graph& graph, double a) {
  if (!(a >= 0.0 && a <= 1.0)) throw Error("budget fraction must lie in [0, 1]");
  ConstraintSpec spec;
  const double raw = a * static_cast<double>(graph.num_nodes());
  // absorb representation error such as 0.07 * 100 = 7.000000000000001
  spec.max_injected_nodes = static_cast<std::size_t>(std::ceil(raw - 1e-9));
  spec.degree_cap = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(graph.average_degree())));
  spec.max_injected_edges = spec.max_injected_nodes * spec.degree_cap;
  const auto& data = graph.features().data();
  if (data.empty()) {
    spec.feature_min = spec.feature_max = 0.0;
  } else {
    auto [lo, hi] = std::minmax_element(data.begin(), data.end());
    spec.feature_min = *lo;
    spec.feature_max = *hi;
  }
  return spec;
}

}  // namespace qugia
