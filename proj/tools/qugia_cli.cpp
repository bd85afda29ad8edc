// qugia: train victims, run injection attacks, evaluate and analyse homophily.
//
// Exit codes: 0 success, 1 usage error, 2 runtime failure.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "qugia/attack.hpp"
#include "qugia/baselines.hpp"
#include "qugia/eval.hpp"
#include "qugia/graph.hpp"
#include "qugia/io.hpp"
#include "qugia/models.hpp"
#include "qugia/synthetic.hpp"
#include "qugia/train.hpp"

namespace {

using namespace qugia;

constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Turns a JSON config object into "--key value" arguments. They are placed
// before the user's own arguments and every option takes its last value, so
// explicit flags win over the file.
std::vector<std::string> config_arguments(const std::string& path) {
  const json j = io::read_json(path);
  if (!j.is_object()) throw UsageError("config file must hold a JSON object");
  std::vector<std::string> args;
  for (const auto& [key, value] : j.items()) {
    const std::string flag = "--" + key;
    if (value.is_boolean()) {
      if (value.get<bool>()) args.push_back(flag);
    } else if (value.is_string()) {
      args.push_back(flag);
      args.push_back(value.get<std::string>());
    } else if (value.is_number()) {
      args.push_back(flag);
      args.push_back(value.dump());
    } else {
      throw UsageError("config key '" + key + "' must be a scalar");
    }
  }
  return args;
}

// Locates "--config <path>" or "--config=<path>" in the raw arguments.
std::string find_config_path(const std::vector<std::string>& args) {
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) return args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) return args[i].substr(9);
  }
  return {};
}

struct TrainOptions {
  std::string graph, out, config;
  TrainConfig train;
};

struct AttackOptions {
  std::string graph, weights, out, report, config;
  std::string attack = "qugia";
  double budget = 0.05;
  std::uint64_t seed = 0;
  bool defense = false;
  double threshold = 0.1;
  std::size_t flip_budget = 0;
  std::size_t iters = 200;
  double decay_init = 1.0;
  double decay_base = 0.97;
  double gamma = 0.05;
  std::size_t neighbor_edges = 3;
  std::string label_mode = "predicted";
  bool eq13_flip = false;
};

struct EvaluateOptions {
  std::string manifest, out = "results", config;
  std::size_t jobs = 1;
  std::vector<std::uint64_t> seeds;
};

struct SimilarityOptions {
  std::string graph, patch, out, config;
};

struct SynthOptions {
  std::string out, config;
  SbmConfig sbm;
  bool continuous = false;
};

int cmd_train(const TrainOptions& o) {
  const Graph g = load_graph(o.graph);
  TrainResult result = train_gcn_with_history(g, o.train);
  result.weights.hyper["train_hidden"] = static_cast<double>(o.train.hidden);
  result.weights.hyper["train_learning_rate"] = o.train.learning_rate;
  result.weights.hyper["train_epochs"] = static_cast<double>(o.train.epochs);
  result.weights.hyper["train_weight_decay"] = o.train.weight_decay;
  result.weights.hyper["train_seed"] = static_cast<double>(o.train.seed);
  save_weights(result.weights, o.out);
  const auto pred = predict(result.weights, g);
  std::printf("train accuracy: %.4f\n", accuracy(pred, g.labels(), g.train_mask()));
  bool any_test = false;
  for (NodeId v = 0; v < g.num_nodes(); ++v) any_test |= g.is_test(v);
  if (any_test) std::printf("test accuracy: %.4f\n", accuracy(pred, g.labels(), g.test_mask()));
  if (!result.loss_history.empty())
    std::printf("final loss: %.6f\n", result.loss_history.back());
  return 0;
}

AttackConfig to_attack_config(const AttackOptions& o) {
  AttackConfig c;
  if (o.flip_budget > 0) c.flip_budget = o.flip_budget;
  c.max_iters = o.iters;
  c.decay_init = o.decay_init;
  c.decay_base = o.decay_base;
  c.gamma = o.gamma;
  c.neighbor_edges = o.neighbor_edges;
  c.rng_seed = o.seed;
  c.label_mode = o.label_mode == "ground_truth" ? LabelMode::ground_truth : LabelMode::predicted;
  c.eq13_flip = o.eq13_flip;
  return c;
}

int cmd_attack(const AttackOptions& o) {
  const Graph g = load_graph(o.graph);
  const ModelWeights w = load_weights(o.weights);
  const DefenseConfig defense{o.defense, o.threshold};
  const AttackConfig config = to_attack_config(o);
  config.validate();
  const AttackName name = attack_name_from_string(o.attack);
  const ConstraintSpec constraints = default_constraints(g, o.budget);
  const ModelOracle oracle(w, g, defense);

  AttackOutput out = run_named_attack(name, g, oracle, config, constraints);
  const ConstraintVerdict verdict = validate_constraints(g, out.patch, constraints);

  json echo = attack_config_to_json(config);
  echo["attack"] = o.attack;
  echo["budget"] = o.budget;
  echo["defense"] = o.defense;
  echo["defense_threshold"] = o.threshold;
  echo["resolved_flip_budget"] = config.resolved_flip_budget(g.feature_dim());
  echo["max_injected_nodes"] = constraints.max_injected_nodes;
  echo["max_injected_edges"] = constraints.max_injected_edges;
  echo["degree_cap"] = constraints.degree_cap;
  save_patch({out.patch, echo, out.queries}, o.out);

  std::printf("injected nodes: %zu\n", out.patch.num_injected());
  std::printf("injected edges: %zu\n", out.patch.num_edges());
  std::printf("queries: %zu\n", out.queries);
  std::printf("constraints: %s\n", verdict.summary().c_str());
  if (!verdict.ok()) return kExitRuntime;

  const Graph attacked = compose(g, out.patch);
  const double clean_acc = accuracy(predict(w, g, defense), g.labels(), g.test_mask());
  const double attacked_acc =
      accuracy(predict(w, attacked, defense), attacked.labels(), attacked.test_mask());
  std::printf("clean accuracy: %.4f\n", clean_acc);
  std::printf("attacked accuracy: %.4f\n", attacked_acc);

  if (!o.report.empty()) {
    json report;
    report["config_echo"] = echo;
    report["injected_nodes"] = out.patch.num_injected();
    report["injected_edges"] = out.patch.num_edges();
    report["queries"] = out.queries;
    report["constraints"] = verdict.summary();
    report["clean_accuracy"] = clean_acc;
    report["attacked_accuracy"] = attacked_acc;
    report["ks_similarity"] = similarity_shift(g, attacked);
    io::write_json(o.report, report);
  }
  return 0;
}

int cmd_evaluate(const EvaluateOptions& o) {
  ExperimentManifest manifest = load_manifest(o.manifest);
  if (!o.seeds.empty()) manifest.seeds = o.seeds;
  const ExperimentResult result = run_experiment(manifest, o.jobs);
  write_experiment(result, o.out);
  json echo;
  echo["manifest"] = o.manifest;
  echo["attack"] = to_string(manifest.attack);
  echo["attack_config"] = attack_config_to_json(manifest.attack_config);
  echo["seeds"] = manifest.seeds;
  echo["budgets"] = manifest.budgets;
  io::write_json((std::filesystem::path(o.out) / "config_echo.json").string(), echo);
  std::printf("cells: %zu ok, %zu failed\n", result.reports.size(), result.failures.size());
  for (const auto& f : result.failures)
    std::fprintf(stderr, "cell %s failed: %s\n", f.cell.c_str(), f.message.c_str());
  return result.failures.empty() ? 0 : kExitRuntime;
}

int cmd_similarity(const SimilarityOptions& o) {
  const Graph g = load_graph(o.graph);
  const PatchFile patch = load_patch(o.patch);
  const Graph attacked = compose(g, patch.patch);
  const auto clean = node_similarity(g);
  const auto perturbed = node_similarity(attacked);
  const double ks = ks_statistic(clean, perturbed);
  json out = similarity_to_json(clean, perturbed, ks);
  out["config_echo"] = {{"graph", o.graph}, {"patch", o.patch}};
  io::write_json(o.out, out);
  std::printf("ks similarity: %.6f\n", ks);
  return 0;
}

int cmd_synth(const SynthOptions& o) {
  SbmConfig cfg = o.sbm;
  cfg.feature_kind = o.continuous ? FeatureKind::continuous : FeatureKind::discrete;
  const Graph g = make_sbm(cfg);
  save_graph(g, o.out);
  std::printf("nodes: %zu edges: %zu features: %zu\n", g.num_nodes(), g.num_edges(),
              g.feature_dim());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Query-based graph injection attack toolkit"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  TrainOptions train;
  auto* train_cmd = app.add_subcommand("train", "Train a 2-layer GCN victim");
  train_cmd->add_option("--graph", train.graph, "Graph file (.json or .json.gz)")->required();
  train_cmd->add_option("--out", train.out, "Output weights file")->required();
  train_cmd->add_option("--hidden", train.train.hidden, "Hidden width")->capture_default_str();
  train_cmd->add_option("--lr", train.train.learning_rate, "Adam learning rate")->capture_default_str();
  train_cmd->add_option("--epochs", train.train.epochs, "Full-batch epochs")->capture_default_str();
  train_cmd->add_option("--weight-decay", train.train.weight_decay, "L2 penalty")->capture_default_str();
  train_cmd->add_option("--seed", train.train.seed, "Initialization seed")->capture_default_str();
  train_cmd->add_option("--config", train.config, "JSON file with flag defaults");

  AttackOptions attack;
  auto* attack_cmd = app.add_subcommand("attack", "Run an injection attack and write a patch");
  attack_cmd->add_option("--graph", attack.graph, "Clean graph file")->required();
  attack_cmd->add_option("--weights", attack.weights, "Victim weights file")->required();
  attack_cmd->add_option("--out", attack.out, "Output patch file")->required();
  attack_cmd->add_option("--report", attack.report, "Optional JSON summary file");
  attack_cmd->add_option("--attack", attack.attack, "qugia | random | random-feat")
      ->check(CLI::IsMember({"qugia", "random", "random-feat"}))
      ->capture_default_str();
  attack_cmd->add_option("--budget", attack.budget, "Injected nodes as a fraction of |V|")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  attack_cmd->add_option("--seed", attack.seed, "RNG seed")->capture_default_str();
  attack_cmd->add_flag("--defense", attack.defense, "Enable edge-pruning defense on the victim");
  attack_cmd->add_option("--defense-threshold", attack.threshold, "Cosine threshold for pruning")
      ->capture_default_str();
  attack_cmd->add_option("--flip-budget", attack.flip_budget,
                         "K, flipped dimensions per node (0 = max(1, ceil(0.02 d)))")
      ->capture_default_str();
  attack_cmd->add_option("--iters", attack.iters, "T, search iterations per node")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  attack_cmd->add_option("--decay-init", attack.decay_init, "A in lambda_t = A B^t")->capture_default_str();
  attack_cmd->add_option("--decay-base", attack.decay_base, "B in lambda_t = A B^t")->capture_default_str();
  attack_cmd->add_option("--gamma", attack.gamma, "CW confidence margin")->capture_default_str();
  attack_cmd->add_option("--neighbor-edges", attack.neighbor_edges, "k, test neighbors wired per node")
      ->capture_default_str();
  attack_cmd->add_option("--label-mode", attack.label_mode, "predicted | ground_truth")
      ->check(CLI::IsMember({"predicted", "ground_truth"}))
      ->capture_default_str();
  attack_cmd->add_flag("--eq13-flip", attack.eq13_flip,
                       "Count importance on improving flips instead of non-improving ones");
  attack_cmd->add_option("--config", attack.config, "JSON file with flag defaults");

  EvaluateOptions evaluate;
  auto* eval_cmd = app.add_subcommand("evaluate", "Run an experiment manifest and write CSV reports");
  eval_cmd->add_option("--manifest", evaluate.manifest, "Manifest JSON file")->required();
  eval_cmd->add_option("--out", evaluate.out, "Output directory")->capture_default_str();
  eval_cmd->add_option("--jobs", evaluate.jobs, "Cells evaluated in parallel")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  eval_cmd->add_option("--seed", evaluate.seeds, "Override the manifest seeds (repeatable)")
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  eval_cmd->add_option("--config", evaluate.config, "JSON file with flag defaults");

  SimilarityOptions similarity;
  auto* sim_cmd = app.add_subcommand("similarity", "Node-similarity distributions and KS shift");
  sim_cmd->add_option("--graph", similarity.graph, "Clean graph file")->required();
  sim_cmd->add_option("--patch", similarity.patch, "Patch file")->required();
  sim_cmd->add_option("--out", similarity.out, "Output JSON file")->required();
  sim_cmd->add_option("--config", similarity.config, "JSON file with flag defaults");

  SynthOptions synth;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a planted-partition fixture graph");
  synth_cmd->add_option("--out", synth.out, "Output graph file")->required();
  synth_cmd->add_option("--blocks", synth.sbm.blocks, "Classes")->capture_default_str();
  synth_cmd->add_option("--block-size", synth.sbm.block_size, "Nodes per class")->capture_default_str();
  synth_cmd->add_option("--p-in", synth.sbm.p_in, "Intra-block edge probability")->capture_default_str();
  synth_cmd->add_option("--p-out", synth.sbm.p_out, "Inter-block edge probability")->capture_default_str();
  synth_cmd->add_option("--feature-dim", synth.sbm.feature_dim, "Feature dimension")->capture_default_str();
  synth_cmd->add_option("--topic-dims", synth.sbm.topic_dims, "Dimensions owned by each class")
      ->capture_default_str();
  synth_cmd->add_option("--p-topic", synth.sbm.p_topic, "On-probability of own-class dimensions")
      ->capture_default_str();
  synth_cmd->add_option("--p-noise", synth.sbm.p_noise, "On-probability of other dimensions")
      ->capture_default_str();
  synth_cmd->add_option("--train-fraction", synth.sbm.train_fraction, "Train share per class")
      ->capture_default_str();
  synth_cmd->add_flag("--continuous", synth.continuous, "Real-valued features instead of binary");
  synth_cmd->add_option("--seed", synth.sbm.seed, "RNG seed")->capture_default_str();
  synth_cmd->add_option("--config", synth.config, "JSON file with flag defaults");

  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    const std::string config_path = find_config_path(args);
    if (!config_path.empty() && !args.empty()) {
      auto extra = config_arguments(config_path);
      args.insert(args.begin() + 1, extra.begin(), extra.end());
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*train_cmd) return cmd_train(train);
    if (*attack_cmd) return cmd_attack(attack);
    if (*eval_cmd) return cmd_evaluate(evaluate);
    if (*sim_cmd) return cmd_similarity(similarity);
    if (*synth_cmd) return cmd_synth(synth);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
  return kExitUsage;
}
