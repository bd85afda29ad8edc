#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "qugia/graph.hpp"
#include "qugia/matrix.hpp"

namespace qugia {

/// Square sparse operator in CSR form.
class SparseOperator {
 public:
  SparseOperator() = default;
  SparseOperator(std::size_t n, std::vector<std::size_t> offsets,
                 std::vector<std::size_t> cols, std::vector<double> values)
      : n_(n), offsets_(std::move(offsets)), cols_(std::move(cols)), values_(std::move(values)) {}

  std::size_t size() const { return n_; }
  std::size_t nnz() const { return values_.size(); }

  std::span<const std::size_t> row_cols(std::size_t r) const {
    return {cols_.data() + offsets_[r], offsets_[r + 1] - offsets_[r]};
  }
  std::span<const double> row_values(std::size_t r) const {
    return {values_.data() + offsets_[r], offsets_[r + 1] - offsets_[r]};
  }

  /// Entry (r, c), zero when not stored.
  double at(std::size_t r, std::size_t c) const {
    auto cols = row_cols(r);
    auto vals = row_values(r);
    for (std::size_t k = 0; k < cols.size(); ++k)
      if (cols[k] == c) return vals[k];
    return 0.0;
  }

  Matrix apply(const Matrix& x) const {
    if (x.rows() != n_) throw ShapeError("sparse operator applied to matrix with wrong row count");
    Matrix out(n_, x.cols());
    for (std::size_t r = 0; r < n_; ++r) {
      auto dst = out.row(r);
      auto cols = row_cols(r);
      auto vals = row_values(r);
      for (std::size_t k = 0; k < cols.size(); ++k) {
        auto src = x.row(cols[k]);
        const double w = vals[k];
        for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += w * src[j];
      }
    }
    return out;
  }

 private:
  std::size_t n_ = 0;
  std::vector<std::size_t> offsets_{0};
  std::vector<std::size_t> cols_;
  std::vector<double> values_;
};

/// Row-wise neighbor lists including the self-loop, sorted ascending.
inline std::vector<std::vector<std::size_t>> self_loop_neighborhoods(std::size_t n,
                                                                     std::span<const Edge> edges) {
  std::vector<std::vector<std::size_t>> nbrs(n);
  for (std::size_t v = 0; v < n; ++v) nbrs[v].push_back(v);
  for (const auto& e : edges) {
    nbrs[e.u].push_back(e.v);
    nbrs[e.v].push_back(e.u);
  }
  for (auto& list : nbrs) std::sort(list.begin(), list.end());
  return nbrs;
}

/// D^-1/2 (A + I) D^-1/2 over an explicit undirected edge list.
inline SparseOperator normalize_adjacency(std::size_t n, std::span<const Edge> edges) {
  auto nbrs = self_loop_neighborhoods(n, edges);
  std::vector<double> inv_sqrt(n);
  for (std::size_t v = 0; v < n; ++v)
    inv_sqrt[v] = 1.0 / std::sqrt(static_cast<double>(nbrs[v].size()));
  std::vector<std::size_t> offsets(n + 1, 0);
  std::vector<std::size_t> cols;
  std::vector<double> values;
  for (std::size_t v = 0; v < n; ++v) {
    for (std::size_t w : nbrs[v]) {
      cols.push_back(w);
      values.push_back(inv_sqrt[v] * inv_sqrt[w]);
    }
    offsets[v + 1] = cols.size();
  }
  return {n, std::move(offsets), std::move(cols), std::move(values)};
}

inline SparseOperator normalize_adjacency(const Graph& graph) {
  return normalize_adjacency(graph.num_nodes(), graph.edges());
}

}  // namespace qugia
