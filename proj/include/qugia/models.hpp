#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qugia/graph.hpp"
#include "qugia/matrix.hpp"
#include "qugia/sparse.hpp"

namespace qugia {

enum class ModelKind { gcn, appnp, gat };

inline const char* to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::gcn: return "gcn";
    case ModelKind::appnp: return "appnp";
    case ModelKind::gat: return "gat";
  }
  return "?";
}

inline ModelKind model_kind_from_string(const std::string& name) {
  if (name == "gcn") return ModelKind::gcn;
  if (name == "appnp") return ModelKind::appnp;
  if (name == "gat") return ModelKind::gat;
  throw ParseError("unknown model kind '" + name + "'");
}

/// Named row-major tensor.
struct Tensor {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<double> data;

  std::size_t element_count() const {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
  }
  friend bool operator==(const Tensor&, const Tensor&) = default;
};

/// Parameters of one of the supported victim architectures.
///
/// Tensor layout (W matrices are in_dim x out_dim, applied as X * W):
///   gcn:   W1, b1, W2, b2
///   appnp: W1, b1, W2, b2           hyper: alpha (0.1), steps (10)
///   gat:   W1, att_src1, att_dst1, b1, W2, att_src2, att_dst2, b2
///                                    hyper: negative_slope (0.2)
struct ModelWeights {
  ModelKind kind = ModelKind::gcn;
  std::vector<Tensor> layers;
  std::map<std::string, double> hyper;

  const Tensor* find(const std::string& name) const {
    for (const auto& t : layers)
      if (t.name == name) return &t;
    return nullptr;
  }
  const Tensor& layer(const std::string& name) const {
    if (const Tensor* t = find(name)) return *t;
    throw ShapeError("model is missing tensor '" + name + "'");
  }
  Tensor& layer(const std::string& name) {
    for (auto& t : layers)
      if (t.name == name) return t;
    throw ShapeError("model is missing tensor '" + name + "'");
  }

  Matrix matrix(const std::string& name) const {
    const Tensor& t = layer(name);
    if (t.shape.size() != 2) throw ShapeError("tensor '" + name + "' is not a matrix");
    return Matrix(t.shape[0], t.shape[1], t.data);
  }
  std::span<const double> vector(const std::string& name) const {
    const Tensor& t = layer(name);
    if (t.shape.size() != 1) throw ShapeError("tensor '" + name + "' is not a vector");
    return t.data;
  }

  double hyper_or(const std::string& key, double fallback) const {
    auto it = hyper.find(key);
    return it == hyper.end() ? fallback : it->second;
  }

  std::size_t input_dim() const { return layer("W1").shape.at(0); }
  std::size_t num_classes() const { return layer("W2").shape.at(1); }

  /// Checks tensor presence, declared-shape/data agreement and chaining.
  void validate() const {
    for (const auto& t : layers)
      if (t.element_count() != t.data.size())
        throw ShapeError("tensor '" + t.name + "' declares " + std::to_string(t.element_count()) +
                         " elements but holds " + std::to_string(t.data.size()));
    auto mat = [&](const std::string& n) {
      const Tensor& t = layer(n);
      if (t.shape.size() != 2) throw ShapeError("tensor '" + n + "' must be 2-D");
      return std::pair{t.shape[0], t.shape[1]};
    };
    auto vec = [&](const std::string& n, std::size_t len) {
      const Tensor& t = layer(n);
      if (t.shape.size() != 1 || t.shape[0] != len)
        throw ShapeError("tensor '" + n + "' must be a vector of length " + std::to_string(len));
    };
    auto [d, h] = mat("W1");
    auto [h2, c] = mat("W2");
    if (h != h2) throw ShapeError("W1 output dim does not match W2 input dim");
    vec("b1", h);
    vec("b2", c);
    if (kind == ModelKind::gat) {
      vec("att_src1", h);
      vec("att_dst1", h);
      vec("att_src2", c);
      vec("att_dst2", c);
    }
    if (kind == ModelKind::appnp) {
      const double alpha = hyper_or("alpha", 0.1);
      if (!(alpha >= 0.0 && alpha <= 1.0)) throw ShapeError("appnp alpha must lie in [0,1]");
      if (hyper_or("steps", 10) < 0) throw ShapeError("appnp steps must be non-negative");
    }
    (void)d;
  }

  friend bool operator==(const ModelWeights&, const ModelWeights&) = default;
};

/// Homophily edge-pruning defense applied before message passing.
struct DefenseConfig {
  bool enabled = false;
  double similarity_threshold = 0.1;
};

/// Cosine similarity; zero-norm vectors score 0.
inline double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

/// Edges whose endpoint features have cosine similarity >= threshold.
inline std::vector<Edge> guard_prune(const Graph& graph, double threshold) {
  std::vector<Edge> kept;
  kept.reserve(graph.num_edges());
  for (const auto& e : graph.edges())
    if (cosine_similarity(graph.features(e.u), graph.features(e.v)) >= threshold)
      kept.push_back(e);
  return kept;
}

namespace detail {

inline void relu_inplace(Matrix& m) {
  for (double& x : m.data()) x = std::max(0.0, x);
}

inline void elu_inplace(Matrix& m) {
  for (double& x : m.data()) x = x > 0.0 ? x : std::expm1(x);
}

// Single-head attention aggregation over self-loop neighborhoods.
inline Matrix gat_aggregate(const std::vector<std::vector<std::size_t>>& nbrs, const Matrix& wh,
                            std::span<const double> att_src, std::span<const double> att_dst,
                            std::span<const double> bias, double slope) {
  const std::size_t n = wh.rows();
  std::vector<double> s_src(n), s_dst(n);
  for (std::size_t v = 0; v < n; ++v) {
    auto r = wh.row(v);
    double a = 0.0, b = 0.0;
    for (std::size_t j = 0; j < r.size(); ++j) {
      a += att_src[j] * r[j];
      b += att_dst[j] * r[j];
    }
    s_src[v] = a;
    s_dst[v] = b;
  }
  Matrix out(n, wh.cols());
  std::vector<double> score;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& list = nbrs[i];
    score.resize(list.size());
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < list.size(); ++k) {
      double e = s_dst[i] + s_src[list[k]];
      e = e > 0.0 ? e : slope * e;
      score[k] = e;
      mx = std::max(mx, e);
    }
    double z = 0.0;
    for (double& e : score) {
      e = std::exp(e - mx);
      z += e;
    }
    auto dst = out.row(i);
    for (std::size_t k = 0; k < list.size(); ++k) {
      const double w = score[k] / z;
      auto src = wh.row(list[k]);
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += w * src[j];
    }
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += bias[j];
  }
  return out;
}

}  // namespace detail

/// Per-node input transform that does not depend on graph structure:
/// X*W1 for gcn/gat, the whole MLP for appnp. Rows are independent, which
/// lets a query oracle cache them for unchanged nodes.
inline Matrix project_inputs(const ModelWeights& w, const Matrix& features) {
  if (features.cols() != w.input_dim())
    throw ShapeError("feature dim " + std::to_string(features.cols()) +
                     " does not match model input dim " + std::to_string(w.input_dim()));
  Matrix h = detail::matmul(features, w.matrix("W1"));
  if (w.kind != ModelKind::appnp) return h;
  detail::add_row_bias(h, w.vector("b1"));
  detail::relu_inplace(h);
  Matrix out = detail::matmul(h, w.matrix("W2"));
  detail::add_row_bias(out, w.vector("b2"));
  return out;
}

/// Structure-dependent part of the forward pass over an explicit edge list.
inline Matrix propagate(const ModelWeights& w, std::size_t num_nodes, std::span<const Edge> edges,
                        const Matrix& projected) {
  if (projected.rows() != num_nodes) throw ShapeError("projected rows != num_nodes");
  switch (w.kind) {
    case ModelKind::gcn: {
      const SparseOperator adj = normalize_adjacency(num_nodes, edges);
      Matrix h = adj.apply(projected);
      detail::add_row_bias(h, w.vector("b1"));
      detail::relu_inplace(h);
      Matrix out = adj.apply(detail::matmul(h, w.matrix("W2")));
      detail::add_row_bias(out, w.vector("b2"));
      return out;
    }
    case ModelKind::appnp: {
      const double alpha = w.hyper_or("alpha", 0.1);
      const auto steps = static_cast<std::size_t>(w.hyper_or("steps", 10));
      if (alpha >= 1.0 || steps == 0) return projected;
      const SparseOperator adj = normalize_adjacency(num_nodes, edges);
      Matrix z = projected;
      for (std::size_t s = 0; s < steps; ++s) {
        Matrix next = adj.apply(z);
        auto& nd = next.data();
        const auto& h0 = projected.data();
        for (std::size_t i = 0; i < nd.size(); ++i) nd[i] = (1.0 - alpha) * nd[i] + alpha * h0[i];
        z = std::move(next);
      }
      return z;
    }
    case ModelKind::gat: {
      const double slope = w.hyper_or("negative_slope", 0.2);
      const auto nbrs = self_loop_neighborhoods(num_nodes, edges);
      Matrix h = detail::gat_aggregate(nbrs, projected, w.vector("att_src1"), w.vector("att_dst1"),
                                       w.vector("b1"), slope);
      detail::elu_inplace(h);
      Matrix wh2 = detail::matmul(h, w.matrix("W2"));
      return detail::gat_aggregate(nbrs, wh2, w.vector("att_src2"), w.vector("att_dst2"),
                                   w.vector("b2"), slope);
    }
  }
  throw Error("unsupported model kind");
}

/// Logits for every node of `graph` (num_nodes x num_classes).
inline Matrix forward(const ModelWeights& weights, const Graph& graph,
                      const DefenseConfig& defense = {}) {
  weights.validate();
  if (graph.num_classes() != 0 && weights.num_classes() != graph.num_classes())
    throw ShapeError("model has " + std::to_string(weights.num_classes()) +
                     " classes, graph has " + std::to_string(graph.num_classes()));
  const Matrix projected = project_inputs(weights, graph.features());
  if (defense.enabled) {
    const auto kept = guard_prune(graph, defense.similarity_threshold);
    return propagate(weights, graph.num_nodes(), kept, projected);
  }
  return propagate(weights, graph.num_nodes(), graph.edges(), projected);
}

/// Row-wise argmax; ties go to the lowest class id.
inline std::vector<int> argmax_rows(const Matrix& logits) {
  std::vector<int> out(logits.rows(), 0);
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    auto r = logits.row(i);
    std::size_t best = 0;
    for (std::size_t c = 1; c < r.size(); ++c)
      if (r[c] > r[best]) best = c;
    out[i] = static_cast<int>(best);
  }
  return out;
}

inline std::vector<int> predict(const ModelWeights& weights, const Graph& graph,
                                const DefenseConfig& defense = {}) {
  return argmax_rows(forward(weights, graph, defense));
}

/// Anything that answers a patch with the logits of the composed graph.
template <class O>
concept QueryOracle = requires(const O& oracle, const InjectionPatch& patch) {
  { oracle.query(patch) } -> std::convertible_to<Matrix>;
};

/// Black-box victim: a trained model bound to a clean graph. Each query
/// returns logits for the graph composed with the given patch. The clean
/// part of the input projection and the defense verdicts on clean edges are
/// computed once.
class ModelOracle {
 public:
  ModelOracle(ModelWeights weights, const Graph& base, DefenseConfig defense = {})
      : weights_(std::move(weights)), base_(&base), defense_(defense) {
    weights_.validate();
    if (weights_.num_classes() != base.num_classes())
      throw ShapeError("model has " + std::to_string(weights_.num_classes()) +
                       " classes, graph has " + std::to_string(base.num_classes()));
    base_projection_ = project_inputs(weights_, base.features());
    base_edges_ = defense_.enabled ? guard_prune(base, defense_.similarity_threshold)
                                   : base.edges();
  }

  ModelOracle(const ModelOracle& other)
      : weights_(other.weights_),
        base_(other.base_),
        defense_(other.defense_),
        base_projection_(other.base_projection_),
        base_edges_(other.base_edges_) {}

  Matrix query(const InjectionPatch& patch) const {
    ++queries_;
    const Graph& g = *base_;
    const std::size_t n = g.num_nodes();
    const std::size_t m = patch.num_injected();
    if (m > 0 && patch.feature_dim() != g.feature_dim())
      throw ShapeError("patch feature dimension does not match graph");

    Matrix projected = base_projection_;
    if (m > 0) {
      const Matrix extra = project_inputs(weights_, patch.injected_features);
      for (std::size_t i = 0; i < m; ++i) projected.append_row(extra.row(i));
    }

    std::vector<Edge> edges = base_edges_;
    auto keep = [&](std::span<const double> a, std::span<const double> b) {
      return !defense_.enabled || cosine_similarity(a, b) >= defense_.similarity_threshold;
    };
    for (const auto& e : patch.cross_edges) {
      if (e.injected >= m || e.target >= n) throw IndexError("patch edge out of range");
      if (keep(patch.injected_features.row(e.injected), g.features(e.target)))
        edges.push_back({e.target, n + e.injected});
    }
    for (const auto& e : patch.inter_edges) {
      if (e.a >= m || e.b >= m) throw IndexError("patch edge out of range");
      if (keep(patch.injected_features.row(e.a), patch.injected_features.row(e.b)))
        edges.push_back({n + std::min(e.a, e.b), n + std::max(e.a, e.b)});
    }
    return propagate(weights_, n + m, edges, projected);
  }

  std::size_t num_queries() const { return queries_.load(); }
  const ModelWeights& weights() const { return weights_; }
  const Graph& graph() const { return *base_; }
  const DefenseConfig& defense() const { return defense_; }

 private:
  ModelWeights weights_;
  const Graph* base_;
  DefenseConfig defense_;
  Matrix base_projection_;
  std::vector<Edge> base_edges_;
  mutable std::atomic<std::size_t> queries_{0};
};

static_assert(QueryOracle<ModelOracle>);

}  // namespace qugia
