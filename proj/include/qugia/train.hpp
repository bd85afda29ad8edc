#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "qugia/graph.hpp"
#include "qugia/matrix.hpp"
#include "qugia/models.hpp"
#include "qugia/sparse.hpp"

namespace qugia {

struct TrainConfig {
  std::size_t hidden = 64;
  double learning_rate = 0.01;
  std::size_t epochs = 200;
  double weight_decay = 5e-4;
  std::uint64_t seed = 0;
};

struct TrainResult {
  ModelWeights weights;
  /// Training objective before each update; the last entry is after the final update.
  std::vector<double> loss_history;
};

/// Glorot-uniform weights and zero biases for a 2-layer GCN.
inline ModelWeights init_gcn(std::size_t in_dim, std::size_t hidden, std::size_t classes,
                             std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto glorot = [&](std::size_t fan_in, std::size_t fan_out) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    std::vector<double> data(fan_in * fan_out);
    for (double& x : data) x = dist(rng);
    return data;
  };
  ModelWeights w;
  w.kind = ModelKind::gcn;
  w.layers.push_back({"W1", {in_dim, hidden}, glorot(in_dim, hidden)});
  w.layers.push_back({"b1", {hidden}, std::vector<double>(hidden, 0.0)});
  w.layers.push_back({"W2", {hidden, classes}, glorot(hidden, classes)});
  w.layers.push_back({"b2", {classes}, std::vector<double>(classes, 0.0)});
  return w;
}

struct GcnGradients {
  double loss = 0.0;
  Matrix dW1, dW2;
  std::vector<double> db1, db2;
};

/// Mean softmax cross-entropy over train nodes plus L2 penalty
/// (weight_decay / 2) * (|W1|^2 + |W2|^2), and its exact gradients.
inline GcnGradients gcn_loss_and_gradients(const Graph& graph, const SparseOperator& adj,
                                           const ModelWeights& w, double weight_decay) {
  const Matrix W1 = w.matrix("W1");
  const Matrix W2 = w.matrix("W2");
  const auto b1 = w.vector("b1");
  const auto b2 = w.vector("b2");
  const std::size_t n = graph.num_nodes();
  const std::size_t c = W2.cols();

  Matrix z1 = adj.apply(detail::matmul(graph.features(), W1));
  detail::add_row_bias(z1, b1);
  Matrix h = z1;
  detail::relu_inplace(h);
  Matrix z2 = adj.apply(detail::matmul(h, W2));
  detail::add_row_bias(z2, b2);

  std::size_t n_train = 0;
  for (NodeId v = 0; v < n; ++v) n_train += graph.is_train(v);
  if (n_train == 0) throw Error("graph has an empty train set");

  GcnGradients g;
  Matrix grad_out(n, c);
  const double scale = 1.0 / static_cast<double>(n_train);
  for (NodeId v = 0; v < n; ++v) {
    if (!graph.is_train(v)) continue;
    auto row = z2.row(v);
    double mx = row[0];
    for (double x : row) mx = std::max(mx, x);
    double z = 0.0;
    for (double x : row) z += std::exp(x - mx);
    const double log_z = mx + std::log(z);
    const auto y = static_cast<std::size_t>(graph.labels()[v]);
    g.loss += (log_z - row[y]) * scale;
    auto gr = grad_out.row(v);
    for (std::size_t k = 0; k < c; ++k) gr[k] = std::exp(row[k] - log_z) * scale;
    gr[y] -= scale;
  }
  double sq = 0.0;
  for (double x : W1.data()) sq += x * x;
  for (double x : W2.data()) sq += x * x;
  g.loss += 0.5 * weight_decay * sq;

  auto colsum = [](const Matrix& m) {
    std::vector<double> s(m.cols(), 0.0);
    for (std::size_t i = 0; i < m.rows(); ++i)
      for (std::size_t j = 0; j < m.cols(); ++j) s[j] += m(i, j);
    return s;
  };

  g.db2 = colsum(grad_out);
  const Matrix dq = adj.apply(grad_out);
  g.dW2 = detail::matmul_tn(h, dq);
  Matrix dz1 = detail::matmul_nt(dq, W2);
  for (std::size_t i = 0; i < dz1.data().size(); ++i)
    if (z1.data()[i] <= 0.0) dz1.data()[i] = 0.0;
  g.db1 = colsum(dz1);
  const Matrix dp = adj.apply(dz1);
  g.dW1 = detail::matmul_tn(graph.features(), dp);
  for (std::size_t i = 0; i < g.dW1.data().size(); ++i) g.dW1.data()[i] += weight_decay * W1.data()[i];
  for (std::size_t i = 0; i < g.dW2.data().size(); ++i) g.dW2.data()[i] += weight_decay * W2.data()[i];
  return g;
}

/// Full-batch Adam on the GCN cross-entropy objective.
inline TrainResult train_gcn_with_history(const Graph& graph, const TrainConfig& config) {
  bool any_train = false;
  for (NodeId v = 0; v < graph.num_nodes(); ++v) any_train |= graph.is_train(v);
  if (!any_train) throw Error("graph has an empty train set");
  if (graph.num_classes() < 2) throw Error("training needs at least two classes");

  TrainResult result;
  result.weights = init_gcn(graph.feature_dim(), config.hidden, graph.num_classes(), config.seed);
  if (config.epochs == 0) return result;

  const SparseOperator adj = normalize_adjacency(graph);
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  struct Moments {
    std::vector<double> m, v;
  };
  std::vector<Moments> moments(result.weights.layers.size());
  for (std::size_t i = 0; i < moments.size(); ++i) {
    moments[i].m.assign(result.weights.layers[i].data.size(), 0.0);
    moments[i].v.assign(result.weights.layers[i].data.size(), 0.0);
  }

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    GcnGradients g = gcn_loss_and_gradients(graph, adj, result.weights, config.weight_decay);
    if (!std::isfinite(g.loss)) throw Error("training diverged: non-finite loss");
    result.loss_history.push_back(g.loss);
    const std::vector<const std::vector<double>*> grads = {&g.dW1.data(), &g.db1, &g.dW2.data(),
                                                           &g.db2};
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(epoch));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(epoch));
    for (std::size_t li = 0; li < grads.size(); ++li) {
      auto& param = result.weights.layers[li].data;
      auto& mo = moments[li];
      const auto& grad = *grads[li];
      for (std::size_t i = 0; i < param.size(); ++i) {
        mo.m[i] = beta1 * mo.m[i] + (1.0 - beta1) * grad[i];
        mo.v[i] = beta2 * mo.v[i] + (1.0 - beta2) * grad[i] * grad[i];
        param[i] -= config.learning_rate * (mo.m[i] / c1) / (std::sqrt(mo.v[i] / c2) + eps);
      }
    }
  }
  const double final_loss =
      gcn_loss_and_gradients(graph, adj, result.weights, config.weight_decay).loss;
  if (!std::isfinite(final_loss)) throw Error("training diverged: non-finite loss");
  result.loss_history.push_back(final_loss);
  return result;
}

inline ModelWeights train_gcn(const Graph& graph, const TrainConfig& config) {
  return train_gcn_with_history(graph, config).weights;
}

}  // namespace qugia
