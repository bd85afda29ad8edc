#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <vector>

#include "qugia/graph.hpp"

namespace qugia {

/// Planted-partition graph with class-correlated sparse binary features.
///
/// Each block owns `topic_dims` feature dimensions; a node switches on its
/// own block's dimensions with probability `p_topic` and any other dimension
/// with probability `p_noise`.
struct SbmConfig {
  std::size_t blocks = 2;
  std::size_t block_size = 50;
  double p_in = 0.1;
  double p_out = 0.01;
  std::size_t feature_dim = 32;
  std::size_t topic_dims = 8;
  double p_topic = 0.35;
  double p_noise = 0.05;
  double train_fraction = 0.3;
  FeatureKind feature_kind = FeatureKind::discrete;
  std::uint64_t seed = 0;
};

inline Graph make_sbm(const SbmConfig& cfg) {
  if (cfg.blocks < 2) throw Error("sbm needs at least two blocks");
  if (cfg.topic_dims * cfg.blocks > cfg.feature_dim)
    throw Error("sbm topic dimensions exceed feature_dim");
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::size_t n = cfg.blocks * cfg.block_size;
  std::vector<int> labels(n);
  for (std::size_t v = 0; v < n; ++v) labels[v] = static_cast<int>(v / cfg.block_size);

  std::vector<Edge> edges;
  for (std::size_t u = 0; u < n; ++u)
    for (std::size_t v = u + 1; v < n; ++v)
      if (unit(rng) < (labels[u] == labels[v] ? cfg.p_in : cfg.p_out)) edges.push_back({u, v});

  Matrix x(n, cfg.feature_dim);
  for (std::size_t v = 0; v < n; ++v) {
    const auto block = static_cast<std::size_t>(labels[v]);
    bool any = false;
    for (std::size_t i = 0; i < cfg.feature_dim; ++i) {
      const bool own = i / cfg.topic_dims == block;
      if (unit(rng) < (own ? cfg.p_topic : cfg.p_noise)) {
        x(v, i) = cfg.feature_kind == FeatureKind::discrete ? 1.0 : 0.5 + 0.5 * unit(rng);
        any = true;
      }
    }
    if (!any) x(v, block * cfg.topic_dims) = 1.0;
  }

  // stratified split: the first train_fraction of each block (after a shuffle)
  std::vector<bool> train(n, false), test(n, false);
  for (std::size_t b = 0; b < cfg.blocks; ++b) {
    std::vector<std::size_t> members(cfg.block_size);
    for (std::size_t i = 0; i < cfg.block_size; ++i) members[i] = b * cfg.block_size + i;
    std::shuffle(members.begin(), members.end(), rng);
    const auto n_train = static_cast<std::size_t>(cfg.train_fraction * static_cast<double>(cfg.block_size));
    for (std::size_t i = 0; i < members.size(); ++i) (i < n_train ? train : test)[members[i]] = true;
  }
  return Graph(n, std::move(edges), std::move(x), std::move(labels), std::move(train),
               std::move(test), cfg.blocks, cfg.feature_kind);
}

}  // namespace qugia
