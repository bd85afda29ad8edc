#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <iterator>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "qugia/graph.hpp"
#include "qugia/matrix.hpp"
#include "qugia/models.hpp"

namespace qugia {

using Rng = std::mt19937_64;

/// Binary flip mask: 1 means the dimension takes its boundary value.
using Mask = std::vector<std::uint8_t>;

enum class LabelMode {
  predicted,     // labels are the victim's own clean predictions
  ground_truth,  // labels come from the graph
};

struct AttackConfig {
  /// K, number of flipped dimensions. Unset resolves to max(1, ceil(0.02 d)).
  std::optional<std::size_t> flip_budget;
  /// T, search iterations per injected node.
  std::size_t max_iters = 200;
  /// A and B of the exploration schedule lambda_t = A * B^t.
  double decay_init = 1.0;
  double decay_base = 0.97;
  /// gamma, CW confidence margin.
  double gamma = 0.05;
  /// k, test neighbors of the victim wired to each injected node.
  std::size_t neighbor_edges = 3;
  std::uint64_t rng_seed = 0;
  LabelMode label_mode = LabelMode::predicted;
  /// Reverses the importance condition to count improving flips instead.
  bool eq13_flip = false;

  void validate() const {
    if (flip_budget && *flip_budget < 1) throw Error("flip budget K must be at least 1");
    if (max_iters < 1) throw Error("max_iters T must be at least 1");
    if (!(decay_init > 0.0)) throw Error("decay_init A must be positive");
    if (!(decay_base > 0.0 && decay_base < 1.0)) throw Error("decay_base B must lie in (0,1)");
    if (!std::isfinite(gamma)) throw Error("gamma must be finite");
  }

  std::size_t resolved_flip_budget(std::size_t feature_dim) const {
    if (flip_budget) return *flip_budget;
    const auto k = static_cast<std::size_t>(std::ceil(0.02 * static_cast<double>(feature_dim)));
    return std::max<std::size_t>(1, k);
  }
};

/// Per-injected-node Bayesian search state.
struct SearchState {
  Mask mask;                       // s
  std::vector<double> alpha;       // Dirichlet concentrations
  std::vector<double> importance;  // q
  std::vector<double> visits;      // v
  std::size_t iteration = 0;
  double best_loss = std::numeric_limits<double>::infinity();
  double lambda = 1.0;

  std::size_t dim() const { return mask.size(); }
  std::size_t flipped() const {
    return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
  }

  /// Uniform prior and a random K-subset of flipped positions. When the
  /// dimension is smaller than K every position is flipped.
  static SearchState initial(std::size_t dim, std::size_t flip_budget, Rng& rng) {
    SearchState s;
    s.mask.assign(dim, 0);
    s.alpha.assign(dim, 1.0);
    s.importance.assign(dim, 0.0);
    s.visits.assign(dim, 0.0);
    std::vector<std::size_t> positions(dim);
    for (std::size_t i = 0; i < dim; ++i) positions[i] = i;
    std::vector<std::size_t> chosen;
    std::sample(positions.begin(), positions.end(), std::back_inserter(chosen),
                std::min(flip_budget, dim), rng);
    for (std::size_t i : chosen) s.mask[i] = 1;
    return s;
  }

  /// Posterior mean alpha / sum(alpha).
  std::vector<double> posterior_mean() const {
    double total = 0.0;
    for (double a : alpha) total += a;
    std::vector<double> theta(alpha.size());
    for (std::size_t i = 0; i < alpha.size(); ++i) theta[i] = alpha[i] / total;
    return theta;
  }
};

/// Candidate edge kept for leftover edge budget.
struct TripletRecord {
  std::size_t src = 0;  // injected node index within the patch
  NodeId dst = 0;       // original node
  double score = 0.0;   // CW loss of dst, lower is closer to flipping
};

/// Test nodes ordered by |p_u| (descending, ties by id), with attacked flags.
class VictimQueue {
 public:
  VictimQueue() = default;
  explicit VictimQueue(const Graph& graph)
      : scores_(graph.num_nodes(), 0), is_test_(graph.test_mask()),
        attacked_(graph.num_nodes(), false) {
    for (NodeId v = 0; v < graph.num_nodes(); ++v)
      if (graph.is_test(v)) scores_[v] = test_neighbor_score(graph, v);
  }

  std::size_t score(NodeId v) const { return scores_.at(v); }
  bool attacked(NodeId v) const { return attacked_.at(v); }
  void mark_attacked(NodeId v) { attacked_.at(v) = true; }
  void decrement(NodeId v) {
    if (scores_.at(v) > 0) --scores_[v];
  }

  /// Current ordering of all test nodes.
  std::vector<NodeId> order() const {
    std::vector<NodeId> out;
    for (NodeId v = 0; v < scores_.size(); ++v)
      if (is_test_[v]) out.push_back(v);
    std::stable_sort(out.begin(), out.end(),
                     [&](NodeId a, NodeId b) { return scores_[a] > scores_[b]; });
    return out;
  }

  /// Highest-scored test node not yet attacked that satisfies `eligible`.
  template <class Pred>
  std::optional<NodeId> next(Pred&& eligible) const {
    std::optional<NodeId> best;
    for (NodeId v = 0; v < scores_.size(); ++v) {
      if (!is_test_[v] || attacked_[v] || !eligible(v)) continue;
      if (!best || scores_[v] > scores_[*best]) best = v;
    }
    return best;
  }

 private:
  std::vector<std::size_t> scores_;
  std::vector<bool> is_test_;
  std::vector<bool> attacked_;
};

/// max(-gamma, f_y - max_{c != y} f_c)
inline double cw_loss(std::span<const double> logits, int true_label, double gamma) {
  if (logits.size() < 2) throw Error("cw_loss needs at least two classes");
  if (true_label < 0 || static_cast<std::size_t>(true_label) >= logits.size())
    throw IndexError("cw_loss label out of range");
  const auto y = static_cast<std::size_t>(true_label);
  double other = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < logits.size(); ++c)
    if (c != y) other = std::max(other, logits[c]);
  return std::max(-gamma, logits[y] - other);
}

/// Sum of cw_loss over p_u and the victim itself.
inline double attack_loss(const Matrix& logits, NodeId victim, std::span<const NodeId> test_nbrs,
                          std::span<const int> labels, double gamma) {
  double total = cw_loss(logits.row(victim), labels[victim], gamma);
  for (NodeId m : test_nbrs) total += cw_loss(logits.row(m), labels[m], gamma);
  return total;
}

inline VictimQueue rank_victims(const Graph& graph) {
  bool any = false;
  for (NodeId v = 0; v < graph.num_nodes() && !any; ++v) any = graph.is_test(v);
  if (!any) throw Error("graph has an empty test set");
  return VictimQueue(graph);
}

/// Original-graph endpoints for one injected node: the victim first, then
/// min(k, |p_u|, b - 1) distinct test neighbors drawn uniformly.
inline std::vector<NodeId> generate_edges(const Graph& graph, NodeId victim, std::size_t k,
                                          std::size_t degree_cap, Rng& rng) {
  if (degree_cap < 1) throw Error("degree cap must be at least 1");
  graph.check_node(victim);
  if (!graph.is_test(victim)) throw Error("victim must be a test node");
  const auto pool = test_neighbors(graph, victim);
  const std::size_t count = std::min({k, pool.size(), degree_cap - 1});
  std::vector<NodeId> targets{victim};
  std::sample(pool.begin(), pool.end(), std::back_inserter(targets), count, rng);
  return targets;
}

/// Boundary vector: feature_min where the value exceeds the midpoint,
/// feature_max otherwise.
inline std::vector<double> x_tilde(std::span<const double> features, double feature_min,
                                   double feature_max) {
  const double mid = (feature_min + feature_max) / 2.0;
  std::vector<double> out(features.size());
  for (std::size_t i = 0; i < features.size(); ++i)
    out[i] = features[i] > mid ? feature_min : feature_max;
  return out;
}

/// s * x_tilde + (1 - s) * x
inline std::vector<double> apply_mask(std::span<const std::uint8_t> mask,
                                      std::span<const double> features,
                                      std::span<const double> boundary) {
  if (mask.size() != features.size() || boundary.size() != features.size())
    throw ShapeError("apply_mask: length mismatch");
  std::vector<double> out(features.size());
  for (std::size_t i = 0; i < features.size(); ++i) out[i] = mask[i] ? boundary[i] : features[i];
  return out;
}

/// lambda_t = A * B^t clamped to [0, 1].
inline double decay(double a, double b, std::size_t t) {
  return std::clamp(a * std::pow(b, static_cast<double>(t)), 0.0, 1.0);
}

namespace detail {

// Draws `count` distinct entries of `pool` without replacement, each draw
// proportional to theta restricted to the remaining entries.
inline std::vector<std::size_t> draw_weighted(std::vector<std::size_t> pool,
                                              std::span<const double> theta, std::size_t count,
                                              Rng& rng) {
  std::vector<std::size_t> out;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  while (out.size() < count && !pool.empty()) {
    double total = 0.0;
    for (std::size_t i : pool) total += theta[i];
    const double r = unit(rng) * total;
    std::size_t pick = pool.size() - 1;
    double acc = 0.0;
    for (std::size_t j = 0; j < pool.size(); ++j) {
      acc += theta[pool[j]];
      if (r < acc) {
        pick = j;
        break;
      }
    }
    out.push_back(pool[pick]);
    pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(pick));
  }
  return out;
}

}  // namespace detail

/// New candidate mask with popcount K: ceil(K * lambda) positions (capped by
/// the number of unflipped positions) explored among currently unflipped
/// dimensions, the rest kept from currently flipped ones, both drawn by the
/// posterior mean restricted to each side.
inline Mask sample_mask(const SearchState& state, std::size_t flip_budget, double lambda,
                        Rng& rng) {
  const std::size_t d = state.dim();
  if (d < flip_budget) throw Error("feature dimension smaller than flip budget");
  if (state.flipped() != flip_budget) throw Error("state mask popcount differs from flip budget");
  std::vector<std::size_t> zeros, ones;
  for (std::size_t i = 0; i < d; ++i) (state.mask[i] ? ones : zeros).push_back(i);
  const auto wanted = static_cast<std::size_t>(std::ceil(static_cast<double>(flip_budget) *
                                                         std::clamp(lambda, 0.0, 1.0)));
  const std::size_t n_explore = std::min(wanted, zeros.size());
  const std::size_t n_exploit = flip_budget - n_explore;
  const auto theta = state.posterior_mean();
  Mask next(d, 0);
  for (std::size_t i : detail::draw_weighted(std::move(zeros), theta, n_explore, rng)) next[i] = 1;
  for (std::size_t i : detail::draw_weighted(std::move(ones), theta, n_exploit, rng)) next[i] = 1;
  return next;
}

/// Importance/visit bookkeeping and Dirichlet concentration update.
/// `state.mask` must still hold the previous (retained) mask.
inline void update_posterior(SearchState& state, std::span<const std::uint8_t> candidate,
                             double loss, double previous_loss, bool eq13_flip = false) {
  const std::size_t d = state.dim();
  if (candidate.size() != d) throw ShapeError("update_posterior: mask length mismatch");
  const bool condition = eq13_flip ? loss < previous_loss : loss >= previous_loss;
  for (std::size_t i = 0; i < d; ++i) {
    const bool now = candidate[i] != 0;
    const bool before = state.mask[i] != 0;
    if (condition && now && !before) state.importance[i] += 1.0;
    if (now || before) state.visits[i] += 1.0;
    const double observation = (state.importance[i] + 0.001) / (state.visits[i] + 0.001);
    state.alpha[i] += observation;
  }
}

/// Keeps the candidate iff it strictly lowers the loss.
inline bool accept(SearchState& state, std::span<const std::uint8_t> candidate, double loss,
                   double previous_loss) {
  state.best_loss = std::min({state.best_loss, loss, previous_loss});
  if (loss < previous_loss) {
    state.mask.assign(candidate.begin(), candidate.end());
    return true;
  }
  return false;
}

/// Everything one injection step produced.
struct InjectionOutcome {
  NodeId victim = 0;
  std::vector<double> features;
  std::vector<NodeId> targets;
  std::vector<TripletRecord> records;
  std::size_t queries = 0;
  std::size_t iterations = 0;
  /// Loss of the initial mask followed by every accepted candidate.
  std::vector<double> accepted_losses;
  double best_loss = 0.0;
  /// Logits of the graph with the retained node.
  Matrix logits;
  Mask mask;

  void apply_to(InjectionPatch& patch) const {
    const std::size_t idx = patch.add_node(features);
    for (NodeId t : targets) patch.cross_edges.push_back({idx, t});
  }
};

namespace detail {

inline bool correctly_classified(const Matrix& logits, NodeId v, std::span<const int> labels) {
  auto r = logits.row(v);
  std::size_t best = 0;
  for (std::size_t c = 1; c < r.size(); ++c)
    if (r[c] > r[best]) best = c;
  return static_cast<int>(best) == labels[v];
}

}  // namespace detail

/// Injects one node against `victim` on top of `current`: wires it, then
/// searches its K-sparse boundary flips with the Dirichlet-guided sampler
/// until every target is misclassified or T candidates were queried.
template <QueryOracle Oracle>
InjectionOutcome attack_one(const Graph& graph, const Oracle& oracle,
                            const InjectionPatch& current, NodeId victim,
                            const AttackConfig& config, const ConstraintSpec& constraints,
                            std::span<const int> labels, std::size_t edge_cap, Rng& rng) {
  InjectionOutcome out;
  out.victim = victim;
  const std::size_t d = graph.feature_dim();
  const std::size_t flip_budget = std::min(config.resolved_flip_budget(d), d);
  const auto nbrs = test_neighbors(graph, victim);

  out.targets = generate_edges(graph, victim, config.neighbor_edges,
                               std::min(edge_cap, constraints.degree_cap), rng);

  const auto victim_features = graph.features(victim);
  const auto boundary = x_tilde(victim_features, constraints.feature_min, constraints.feature_max);

  SearchState state = SearchState::initial(d, flip_budget, rng);

  InjectionPatch working = current;
  if (working.num_injected() == 0) working.injected_features = Matrix(0, d);
  const std::size_t idx = working.add_node(apply_mask(state.mask, victim_features, boundary));
  for (NodeId t : out.targets) working.cross_edges.push_back({idx, t});
  auto set_row = [&](const Mask& m) {
    const auto row = apply_mask(m, victim_features, boundary);
    std::copy(row.begin(), row.end(), working.injected_features.row(idx).begin());
  };

  out.logits = oracle.query(working);
  ++out.queries;
  double loss = attack_loss(out.logits, victim, nbrs, labels, config.gamma);
  state.best_loss = loss;
  out.accepted_losses.push_back(loss);

  auto targets_remaining = [&](const Matrix& logits) {
    if (detail::correctly_classified(logits, victim, labels)) return true;
    return std::any_of(nbrs.begin(), nbrs.end(), [&](NodeId m) {
      return detail::correctly_classified(logits, m, labels);
    });
  };

  while (state.iteration < config.max_iters && targets_remaining(out.logits)) {
    state.lambda = decay(config.decay_init, config.decay_base, state.iteration);
    Mask candidate = sample_mask(state, flip_budget, state.lambda, rng);
    set_row(candidate);
    Matrix logits = oracle.query(working);
    ++out.queries;
    const double cand_loss = attack_loss(logits, victim, nbrs, labels, config.gamma);
    update_posterior(state, candidate, cand_loss, loss, config.eq13_flip);
    if (accept(state, candidate, cand_loss, loss)) {
      loss = cand_loss;
      out.logits = std::move(logits);
      out.accepted_losses.push_back(loss);
    }
    ++state.iteration;
  }

  out.iterations = state.iteration;
  out.best_loss = loss;
  out.mask = state.mask;
  out.features = apply_mask(state.mask, victim_features, boundary);

  for (NodeId m : nbrs) {
    if (std::find(out.targets.begin(), out.targets.end(), m) != out.targets.end()) continue;
    if (!detail::correctly_classified(out.logits, m, labels)) continue;
    out.records.push_back({idx, m, cw_loss(out.logits.row(m), labels[m], config.gamma)});
  }
  return out;
}

/// Adds cross edges from the records, lowest score first, while the edge
/// budget allows and the injected node is below its degree cap.
inline InjectionPatch allocate_remaining_edges(std::vector<TripletRecord> records,
                                               InjectionPatch patch,
                                               const ConstraintSpec& constraints) {
  std::sort(records.begin(), records.end(), [](const TripletRecord& a, const TripletRecord& b) {
    if (a.score != b.score) return a.score < b.score;
    if (a.src != b.src) return a.src < b.src;
    return a.dst < b.dst;
  });
  std::size_t used = patch.num_edges();
  std::vector<std::size_t> degree(patch.num_injected(), 0);
  for (std::size_t i = 0; i < degree.size(); ++i) degree[i] = patch.injected_degree(i);
  for (const auto& r : records) {
    if (used >= constraints.max_injected_edges) break;
    if (r.src >= degree.size() || degree[r.src] >= constraints.degree_cap) continue;
    if (patch.has_cross_edge(r.src, r.dst)) continue;
    patch.cross_edges.push_back({r.src, r.dst});
    ++degree[r.src];
    ++used;
  }
  return patch;
}

/// Result of a full attack run.
struct AttackResult {
  InjectionPatch patch;
  std::vector<InjectionOutcome> steps;
  /// All oracle queries, including the initial clean query.
  std::size_t total_queries = 0;
  /// True when the run stopped early for lack of eligible victims.
  bool victims_exhausted = false;
  std::vector<int> clean_predictions;
};

/// Sequential injection: each step targets the highest-scored test node
/// that is not yet attacked and still correctly classified, then spare edge
/// budget is spent on the recorded triplets.
template <QueryOracle Oracle>
AttackResult run_attack(const Graph& graph, const Oracle& oracle, const AttackConfig& config,
                        const ConstraintSpec& constraints) {
  config.validate();
  constraints.validate();
  AttackResult result;
  result.patch = InjectionPatch(graph.feature_dim());
  if (constraints.max_injected_nodes == 0 || constraints.max_injected_edges == 0) return result;

  Rng rng(config.rng_seed);
  const Matrix clean = oracle.query(result.patch);
  ++result.total_queries;
  result.clean_predictions = argmax_rows(clean);
  result.clean_predictions.resize(graph.num_nodes());

  std::vector<int> labels(graph.num_nodes(), kNoLabel);
  for (NodeId v = 0; v < graph.num_nodes(); ++v) {
    if (!graph.is_test(v)) continue;
    labels[v] = config.label_mode == LabelMode::predicted ? result.clean_predictions[v]
                                                          : graph.labels()[v];
  }

  VictimQueue queue = rank_victims(graph);
  std::vector<int> current = result.clean_predictions;
  std::vector<TripletRecord> records;
  std::size_t edges_left = constraints.max_injected_edges;

  for (std::size_t i = 0; i < constraints.max_injected_nodes; ++i) {
    const std::size_t nodes_left = constraints.max_injected_nodes - i;
    if (edges_left == 0) break;
    // keep one edge in reserve for each later node
    const std::size_t cap =
        edges_left >= nodes_left ? std::min(constraints.degree_cap, edges_left - (nodes_left - 1))
                                 : 1;
    const auto victim = queue.next([&](NodeId v) { return current[v] == labels[v]; });
    if (!victim) {
      result.victims_exhausted = true;
      break;
    }
    InjectionOutcome step =
        attack_one(graph, oracle, result.patch, *victim, config, constraints, labels, cap, rng);
    result.total_queries += step.queries;
    step.apply_to(result.patch);
    edges_left -= step.targets.size();

    current = argmax_rows(step.logits);
    current.resize(graph.num_nodes());
    queue.mark_attacked(*victim);
    if (current[*victim] != labels[*victim])
      for (NodeId m : test_neighbors(graph, *victim)) queue.decrement(m);
    records.insert(records.end(), step.records.begin(), step.records.end());
    result.steps.push_back(std::move(step));
  }

  result.patch = allocate_remaining_edges(std::move(records), std::move(result.patch), constraints);
  if (auto verdict = validate_constraints(graph, result.patch, constraints); !verdict.ok())
    throw Error("attack produced an infeasible patch: " + verdict.summary());
  return result;
}

}  // namespace qugia
