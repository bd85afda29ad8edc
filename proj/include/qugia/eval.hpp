#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <mutex>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "qugia/attack.hpp"
#include "qugia/baselines.hpp"
#include "qugia/graph.hpp"
#include "qugia/io.hpp"
#include "qugia/models.hpp"

namespace qugia {

/// Fraction of masked nodes whose prediction equals the label.
inline double accuracy(std::span<const int> predictions, std::span<const int> labels,
                       const std::vector<bool>& mask) {
  std::size_t total = 0, correct = 0;
  for (std::size_t v = 0; v < mask.size(); ++v) {
    if (!mask[v]) continue;
    ++total;
    correct += predictions[v] == labels[v];
  }
  if (total == 0) throw Error("accuracy over an empty mask");
  return static_cast<double>(correct) / static_cast<double>(total);
}

/// Cosine similarity between each node's features and the mean of its
/// neighbors' features, for nodes with at least one neighbor (id order).
inline std::vector<double> node_similarity(const Graph& graph) {
  std::vector<double> out;
  std::vector<double> mean(graph.feature_dim());
  for (NodeId v = 0; v < graph.num_nodes(); ++v) {
    auto nb = graph.neighbors(v);
    if (nb.empty()) continue;
    std::fill(mean.begin(), mean.end(), 0.0);
    for (NodeId w : nb) {
      auto f = graph.features(w);
      for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += f[i];
    }
    for (double& m : mean) m /= static_cast<double>(nb.size());
    out.push_back(cosine_similarity(graph.features(v), mean));
  }
  return out;
}

/// Two-sample Kolmogorov-Smirnov statistic sup |F_a - F_b|.
inline double ks_statistic(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw Error("KS statistic needs two nonempty samples");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double best = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    best = std::max(best, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return best;
}

inline double similarity_shift(const Graph& clean, const Graph& perturbed) {
  return ks_statistic(node_similarity(clean), node_similarity(perturbed));
}

/// Fixed-width histogram over [lo, hi]; the upper edge falls in the last bin.
struct Histogram {
  double lo = -1.0;
  double hi = 1.0;
  std::vector<std::size_t> counts;

  static Histogram of(std::span<const double> values, std::size_t bins = 50, double lo = -1.0,
                      double hi = 1.0) {
    Histogram h{lo, hi, std::vector<std::size_t>(bins, 0)};
    const double width = (hi - lo) / static_cast<double>(bins);
    for (double x : values) {
      auto idx = static_cast<std::ptrdiff_t>(std::floor((x - lo) / width));
      idx = std::clamp<std::ptrdiff_t>(idx, 0, static_cast<std::ptrdiff_t>(bins) - 1);
      ++h.counts[static_cast<std::size_t>(idx)];
    }
    return h;
  }
  std::size_t mass() const { return std::accumulate(counts.begin(), counts.end(), std::size_t{0}); }
};

struct AttackReport {
  std::string dataset;
  std::string model;
  bool defense = false;
  double budget = 0.0;
  std::uint64_t seed = 0;
  double clean_accuracy = 0.0;
  double attacked_accuracy = 0.0;
  std::size_t queries = 0;
  double runtime_s = 0.0;
  double ks_similarity = 0.0;
  std::vector<double> similarity_clean;
  std::vector<double> similarity_attacked;
  Histogram histogram_clean;
  Histogram histogram_attacked;
};

struct AggregateRow {
  std::string dataset;
  std::string model;
  bool defense = false;
  double budget = 0.0;
  std::size_t runs = 0;
  double clean_mean = 0.0, clean_std = 0.0;
  double attacked_mean = 0.0, attacked_std = 0.0;
  double queries_mean = 0.0;
  double ks_mean = 0.0, ks_std = 0.0;
};

enum class AttackName { qugia, random, random_feat };

inline AttackName attack_name_from_string(const std::string& s) {
  if (s == "qugia") return AttackName::qugia;
  if (s == "random") return AttackName::random;
  if (s == "random-feat") return AttackName::random_feat;
  throw ParseError("unknown attack '" + s + "' (expected qugia, random or random-feat)");
}

inline const char* to_string(AttackName a) {
  switch (a) {
    case AttackName::qugia: return "qugia";
    case AttackName::random: return "random";
    case AttackName::random_feat: return "random-feat";
  }
  return "?";
}

struct AttackOutput {
  InjectionPatch patch;
  std::size_t queries = 0;
};

/// Runs the named attack against `oracle` with `config.rng_seed`.
inline AttackOutput run_named_attack(AttackName name, const Graph& graph, const ModelOracle& oracle,
                                     const AttackConfig& config, const ConstraintSpec& constraints) {
  switch (name) {
    case AttackName::qugia: {
      auto result = run_attack(graph, oracle, config, constraints);
      return {std::move(result.patch), result.total_queries};
    }
    case AttackName::random:
      return {run_baseline(graph, BaselineKind::random_edges_random_features, constraints,
                           config.rng_seed, config.neighbor_edges),
              0};
    case AttackName::random_feat:
      return {run_baseline(graph, BaselineKind::qugia_edges_random_features, constraints,
                           config.rng_seed, config.neighbor_edges),
              0};
  }
  throw Error("unsupported attack");
}

/// One (model, defense, budget, seed) evaluation on a loaded graph.
inline AttackReport evaluate_cell(const std::string& dataset, const Graph& graph,
                                  const std::string& model_name, const ModelWeights& weights,
                                  const DefenseConfig& defense, double budget, std::uint64_t seed,
                                  AttackName attack, AttackConfig config, bool record_runtime) {
  const auto start = std::chrono::steady_clock::now();
  AttackReport r;
  r.dataset = dataset;
  r.model = model_name;
  r.defense = defense.enabled;
  r.budget = budget;
  r.seed = seed;

  const ModelOracle oracle(weights, graph, defense);
  const auto clean_pred = predict(weights, graph, defense);
  r.clean_accuracy = accuracy(clean_pred, graph.labels(), graph.test_mask());

  config.rng_seed = seed;
  const ConstraintSpec constraints = default_constraints(graph, budget);
  AttackOutput out = run_named_attack(attack, graph, oracle, config, constraints);
  if (auto verdict = validate_constraints(graph, out.patch, constraints); !verdict.ok())
    throw Error("patch violates constraints: " + verdict.summary());
  r.queries = out.queries;

  const Graph attacked = compose(graph, out.patch);
  const auto attacked_pred = predict(weights, attacked, defense);
  r.attacked_accuracy = accuracy(attacked_pred, attacked.labels(), attacked.test_mask());

  r.similarity_clean = node_similarity(graph);
  r.similarity_attacked = node_similarity(attacked);
  r.ks_similarity = ks_statistic(r.similarity_clean, r.similarity_attacked);
  r.histogram_clean = Histogram::of(r.similarity_clean);
  r.histogram_attacked = Histogram::of(r.similarity_attacked);
  if (record_runtime)
    r.runtime_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

/// Experiment grid read from a manifest file.
///
/// {
///   "datasets": [{"name": "sbm", "graph": "sbm.json"}],
///   "models":   [{"name": "gcn", "weights": "gcn.json", "dataset": "sbm"}],
///   "defenses": [{"enabled": false}, {"enabled": true, "threshold": 0.1}],
///   "budgets":  [0.01, 0.03, 0.05],
///   "seeds":    [0, 1, 2, 3, 4],
///   "attack":   "qugia",
///   "attack_config": {"max_iters": 200},
///   "record_runtime": false
/// }
///
/// Relative paths resolve against the manifest's directory. A model without
/// "dataset" is evaluated on every dataset.
struct ExperimentManifest {
  struct Dataset {
    std::string name;
    std::string graph_path;
  };
  struct Model {
    std::string name;
    std::string weights_path;
    std::optional<std::string> dataset;
  };
  std::vector<Dataset> datasets;
  std::vector<Model> models;
  std::vector<DefenseConfig> defenses{DefenseConfig{}};
  std::vector<double> budgets{0.01, 0.03, 0.05};
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  AttackName attack = AttackName::qugia;
  AttackConfig attack_config;
  bool record_runtime = false;
};

inline ExperimentManifest manifest_from_json(const json& j, const std::filesystem::path& base_dir,
                                             const std::string& origin = "manifest") {
  using io::get_field;
  if (!j.is_object()) throw ParseError(origin + ": expected an object");
  static const std::vector<std::string> known = {"datasets", "models",        "defenses",
                                                 "budgets",  "seeds",         "attack",
                                                 "attack_config", "record_runtime"};
  for (const auto& [key, _] : j.items())
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw ParseError(origin + ": unknown key '" + key + "'");
  auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    return (path.is_absolute() ? path : base_dir / path).string();
  };
  ExperimentManifest m;
  if (j.contains("datasets"))
    for (const auto& d : j.at("datasets"))
      m.datasets.push_back({get_field<std::string>(d, "name", origin),
                            resolve(get_field<std::string>(d, "graph", origin))});
  if (j.contains("models"))
    for (const auto& md : j.at("models")) {
      ExperimentManifest::Model model{get_field<std::string>(md, "name", origin),
                                      resolve(get_field<std::string>(md, "weights", origin)),
                                      std::nullopt};
      if (md.contains("dataset")) model.dataset = get_field<std::string>(md, "dataset", origin);
      m.models.push_back(std::move(model));
    }
  if (j.contains("defenses")) {
    m.defenses.clear();
    for (const auto& d : j.at("defenses")) {
      DefenseConfig cfg;
      cfg.enabled = get_field<bool>(d, "enabled", origin);
      if (d.contains("threshold")) cfg.similarity_threshold = get_field<double>(d, "threshold", origin);
      if (!std::isfinite(cfg.similarity_threshold)) throw ParseError(origin + ": threshold must be finite");
      m.defenses.push_back(cfg);
    }
  }
  if (j.contains("budgets")) m.budgets = get_field<std::vector<double>>(j, "budgets", origin);
  if (j.contains("seeds")) m.seeds = get_field<std::vector<std::uint64_t>>(j, "seeds", origin);
  if (j.contains("attack")) m.attack = attack_name_from_string(get_field<std::string>(j, "attack", origin));
  if (j.contains("attack_config"))
    m.attack_config = attack_config_from_json(j.at("attack_config"), {}, origin + " attack_config");
  if (j.contains("record_runtime")) m.record_runtime = get_field<bool>(j, "record_runtime", origin);
  return m;
}

inline ExperimentManifest load_manifest(const std::string& path) {
  return manifest_from_json(io::read_json(path), std::filesystem::path(path).parent_path(), path);
}

struct CellFailure {
  std::string cell;
  std::string message;
};

struct ExperimentResult {
  std::vector<AttackReport> reports;
  std::vector<AggregateRow> aggregates;
  std::vector<CellFailure> failures;
};

namespace detail {

inline void mean_std(const std::vector<double>& xs, double& mean, double& sd) {
  mean = sd = 0.0;
  if (xs.empty()) return;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  if (xs.size() < 2) return;
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

}  // namespace detail

/// Mean and sample standard deviation across seeds for each
/// (dataset, model, defense, budget) group, in first-appearance order.
inline std::vector<AggregateRow> aggregate_reports(const std::vector<AttackReport>& reports) {
  std::vector<AggregateRow> rows;
  std::vector<std::vector<const AttackReport*>> groups;
  for (const auto& r : reports) {
    std::size_t g = 0;
    for (; g < rows.size(); ++g)
      if (rows[g].dataset == r.dataset && rows[g].model == r.model &&
          rows[g].defense == r.defense && rows[g].budget == r.budget)
        break;
    if (g == rows.size()) {
      rows.push_back({r.dataset, r.model, r.defense, r.budget});
      groups.emplace_back();
    }
    groups[g].push_back(&r);
  }
  for (std::size_t g = 0; g < rows.size(); ++g) {
    std::vector<double> clean, attacked, queries, ks;
    for (const auto* r : groups[g]) {
      clean.push_back(r->clean_accuracy);
      attacked.push_back(r->attacked_accuracy);
      queries.push_back(static_cast<double>(r->queries));
      ks.push_back(r->ks_similarity);
    }
    double unused = 0.0;
    rows[g].runs = groups[g].size();
    detail::mean_std(clean, rows[g].clean_mean, rows[g].clean_std);
    detail::mean_std(attacked, rows[g].attacked_mean, rows[g].attacked_std);
    detail::mean_std(queries, rows[g].queries_mean, unused);
    detail::mean_std(ks, rows[g].ks_mean, rows[g].ks_std);
  }
  return rows;
}

/// Evaluates every cell of the manifest. Cells run on up to `jobs` threads;
/// report order follows the manifest regardless of scheduling. Failed cells
/// are collected, not thrown.
inline ExperimentResult run_experiment(const ExperimentManifest& manifest, std::size_t jobs = 1) {
  struct Cell {
    std::size_t dataset, model;
    DefenseConfig defense;
    double budget;
    std::uint64_t seed;
  };
  ExperimentResult result;
  std::vector<std::optional<Graph>> graphs(manifest.datasets.size());
  std::vector<std::string> graph_errors(manifest.datasets.size());
  for (std::size_t i = 0; i < manifest.datasets.size(); ++i) {
    try {
      graphs[i] = load_graph(manifest.datasets[i].graph_path);
    } catch (const std::exception& e) {
      graph_errors[i] = e.what();
    }
  }

  std::vector<Cell> cells;
  for (std::size_t di = 0; di < manifest.datasets.size(); ++di)
    for (std::size_t mi = 0; mi < manifest.models.size(); ++mi) {
      const auto& model = manifest.models[mi];
      if (model.dataset && *model.dataset != manifest.datasets[di].name) continue;
      for (const auto& def : manifest.defenses)
        for (double a : manifest.budgets)
          for (auto seed : manifest.seeds) cells.push_back({di, mi, def, a, seed});
    }

  std::vector<std::optional<AttackReport>> slots(cells.size());
  std::vector<std::string> errors(cells.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t c = next++; c < cells.size(); c = next++) {
      const Cell& cell = cells[c];
      try {
        if (!graphs[cell.dataset]) throw Error(graph_errors[cell.dataset]);
        const auto& model = manifest.models[cell.model];
        const ModelWeights weights = load_weights(model.weights_path);
        slots[c] = evaluate_cell(manifest.datasets[cell.dataset].name, *graphs[cell.dataset],
                                 model.name, weights, cell.defense, cell.budget, cell.seed,
                                 manifest.attack, manifest.attack_config, manifest.record_runtime);
      } catch (const std::exception& e) {
        errors[c] = e.what();
      }
    }
  };
  const std::size_t n_threads = std::max<std::size_t>(1, std::min(jobs, cells.size()));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  for (std::size_t c = 0; c < cells.size(); ++c) {
    if (slots[c]) {
      result.reports.push_back(std::move(*slots[c]));
    } else {
      const Cell& cell = cells[c];
      std::ostringstream name;
      name << manifest.datasets[cell.dataset].name << '/' << manifest.models[cell.model].name
           << "/defense=" << cell.defense.enabled << "/a=" << cell.budget << "/seed=" << cell.seed;
      result.failures.push_back({name.str(), errors[c]});
    }
  }
  result.aggregates = aggregate_reports(result.reports);
  return result;
}

// ---------------------------------------------------------------- report files

namespace detail {

inline std::string fmt_real(double x, int precision = 6) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", precision, x);
  return buf;
}

inline std::string fmt_budget(double a) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%g", a);
  return buf;
}

}  // namespace detail

inline const char* kReportHeader =
    "dataset,model,defense,a,seed,clean_acc,attacked_acc,queries,runtime_s,ks_similarity";
inline const char* kAggregateHeader =
    "dataset,model,defense,a,runs,clean_acc_mean,clean_acc_std,attacked_acc_mean,"
    "attacked_acc_std,queries_mean,ks_similarity_mean,ks_similarity_std";

inline std::string reports_csv(const std::vector<AttackReport>& reports) {
  std::string out = std::string(kReportHeader) + "\n";
  for (const auto& r : reports) {
    out += r.dataset + "," + r.model + "," + (r.defense ? "on" : "off") + "," +
           detail::fmt_budget(r.budget) + "," + std::to_string(r.seed) + "," +
           detail::fmt_real(r.clean_accuracy) + "," + detail::fmt_real(r.attacked_accuracy) + "," +
           std::to_string(r.queries) + "," + detail::fmt_real(r.runtime_s, 3) + "," +
           detail::fmt_real(r.ks_similarity) + "\n";
  }
  return out;
}

inline std::string aggregate_csv(const std::vector<AggregateRow>& rows) {
  std::string out = std::string(kAggregateHeader) + "\n";
  for (const auto& r : rows) {
    out += r.dataset + "," + r.model + "," + (r.defense ? "on" : "off") + "," +
           detail::fmt_budget(r.budget) + "," + std::to_string(r.runs) + "," +
           detail::fmt_real(r.clean_mean) + "," + detail::fmt_real(r.clean_std) + "," +
           detail::fmt_real(r.attacked_mean) + "," + detail::fmt_real(r.attacked_std) + "," +
           detail::fmt_real(r.queries_mean, 1) + "," + detail::fmt_real(r.ks_mean) + "," +
           detail::fmt_real(r.ks_std) + "\n";
  }
  return out;
}

inline json histogram_to_json(const Histogram& h) {
  return {{"lo", h.lo}, {"hi", h.hi}, {"counts", h.counts}};
}

inline json similarity_to_json(const std::vector<double>& clean,
                               const std::vector<double>& attacked, double ks) {
  json j;
  j["clean"] = clean;
  j["attacked"] = attacked;
  j["histogram_clean"] = histogram_to_json(Histogram::of(clean));
  j["histogram_attacked"] = histogram_to_json(Histogram::of(attacked));
  j["ks_similarity"] = ks;
  return j;
}

/// Writes reports.csv, aggregate.csv and similarity/<cell>.json into `dir`.
inline void write_experiment(const ExperimentResult& result, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "similarity");
  io::write_text((dir / "reports.csv").string(), reports_csv(result.reports));
  io::write_text((dir / "aggregate.csv").string(), aggregate_csv(result.aggregates));
  for (const auto& r : result.reports) {
    const std::string name = r.dataset + "_" + r.model + "_defense-" + (r.defense ? "on" : "off") +
                             "_a-" + detail::fmt_budget(r.budget) + "_seed-" +
                             std::to_string(r.seed) + ".json";
    io::write_json((dir / "similarity" / name).string(),
                   similarity_to_json(r.similarity_clean, r.similarity_attacked, r.ks_similarity));
  }
}

}  // namespace qugia
