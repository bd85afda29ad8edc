#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "qugia/graph.hpp"
#include "qugia/models.hpp"
#include "qugia/synthetic.hpp"

namespace fixtures {

using qugia::Edge;
using qugia::FeatureKind;
using qugia::Graph;
using qugia::Matrix;

// Every node labeled; `test` lists test nodes, everything else is train.
inline Graph labeled_graph(std::size_t n, std::vector<Edge> edges, std::vector<std::vector<double>> rows,
                           std::vector<int> labels, const std::vector<std::size_t>& test,
                           std::size_t classes = 2, FeatureKind kind = FeatureKind::continuous) {
  const std::size_t d = rows.empty() ? 0 : rows[0].size();
  Matrix x(n, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) x(i, j) = rows[i][j];
  std::vector<bool> train(n, true), test_mask(n, false);
  for (auto v : test) {
    test_mask[v] = true;
    train[v] = false;
  }
  return Graph(n, std::move(edges), std::move(x), std::move(labels), std::move(train),
               std::move(test_mask), classes, kind);
}

inline Graph path3() {
  return labeled_graph(3, {{0, 1}, {1, 2}}, {{1, 0}, {0, 1}, {1, 1}}, {0, 1, 0}, {1});
}

inline Graph four_cycle() {
  return labeled_graph(4, {{0, 1}, {1, 2}, {2, 3}, {0, 3}}, {{0, 1}, {1, 0}, {0, 1}, {1, 0}},
                       {0, 1, 0, 1}, {2, 3}, 2, FeatureKind::discrete);
}

// Erdos-Renyi graph with Gaussian features and random labels/split.
inline Graph random_graph(std::mt19937_64& rng, std::size_t n, std::size_t d, std::size_t classes,
                          double p_edge, FeatureKind kind = FeatureKind::continuous) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Edge> edges;
  for (std::size_t u = 0; u < n; ++u)
    for (std::size_t v = u + 1; v < n; ++v)
      if (unit(rng) < p_edge) edges.push_back({u, v});
  Matrix x(n, d);
  for (double& v : x.data()) v = kind == FeatureKind::discrete ? (unit(rng) < 0.3 ? 1.0 : 0.0) : normal(rng);
  std::vector<int> labels(n);
  std::vector<bool> train(n), test(n);
  for (std::size_t v = 0; v < n; ++v) {
    labels[v] = static_cast<int>(rng() % classes);
    (unit(rng) < 0.5 ? train : test)[v] = true;
  }
  return Graph(n, std::move(edges), std::move(x), std::move(labels), std::move(train),
               std::move(test), classes, kind);
}

inline qugia::Tensor random_tensor(std::mt19937_64& rng, std::string name,
                                   std::vector<std::size_t> shape, double scale = 0.5) {
  std::normal_distribution<double> normal(0.0, scale);
  qugia::Tensor t{std::move(name), std::move(shape), {}};
  t.data.resize(t.element_count());
  for (double& v : t.data) v = normal(rng);
  return t;
}

inline qugia::ModelWeights random_weights(std::mt19937_64& rng, qugia::ModelKind kind, std::size_t d,
                                          std::size_t hidden, std::size_t classes) {
  qugia::ModelWeights w;
  w.kind = kind;
  w.layers.push_back(random_tensor(rng, "W1", {d, hidden}));
  w.layers.push_back(random_tensor(rng, "b1", {hidden}));
  w.layers.push_back(random_tensor(rng, "W2", {hidden, classes}));
  w.layers.push_back(random_tensor(rng, "b2", {classes}));
  if (kind == qugia::ModelKind::gat) {
    w.layers.push_back(random_tensor(rng, "att_src1", {hidden}));
    w.layers.push_back(random_tensor(rng, "att_dst1", {hidden}));
    w.layers.push_back(random_tensor(rng, "att_src2", {classes}));
    w.layers.push_back(random_tensor(rng, "att_dst2", {classes}));
  }
  if (kind == qugia::ModelKind::appnp) {
    w.hyper["alpha"] = 0.1;
    w.hyper["steps"] = 10;
  }
  return w;
}

// 100-node, 4-class planted partition with sparse 400-dim binary features.
// This is the graph the directional attack comparisons run on.
inline qugia::SbmConfig attack_fixture_config() {
  qugia::SbmConfig c;
  c.blocks = 4;
  c.block_size = 25;
  c.p_in = 0.1;
  c.p_out = 0.02;
  c.feature_dim = 400;
  c.topic_dims = 50;
  c.p_topic = 0.06;
  c.p_noise = 0.01;
  c.seed = 0;
  return c;
}

// Five nodes, d = 4. Test nodes 0 and 1 tie on |p_u| = 1, so node 0 is the
// first victim and its injected node is wired to {0, 1} (b = 2). A large
// class-0 bias keeps every target correctly classified whatever the
// injected features, so the search always runs its full T iterations.
struct SmallVictim {
  Graph graph;
  qugia::ModelWeights weights;
};

inline SmallVictim brute_force_fixture() {
  auto g = labeled_graph(5, {{0, 1}, {0, 2}, {2, 3}, {1, 3}, {3, 4}},
                         {{0.9, 0.1, 0.6, 0.3}, {0.2, 0.8, 0.4, 1.0}, {0.0, 0.5, 1.0, 0.7},
                          {1.0, 0.3, 0.0, 0.2}, {0.4, 0.0, 0.9, 0.6}},
                         {0, 0, 0, 1, 1}, {0, 1});
  std::mt19937_64 rng(2024);
  auto w = random_weights(rng, qugia::ModelKind::gcn, 4, 6, 2);
  w.layer("b2").data = {6.0, -6.0};
  return {std::move(g), std::move(w)};
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("qugia-" + tag + "-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

}  // namespace fixtures
