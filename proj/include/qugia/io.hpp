#pragma once

#include <zlib.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "qugia/attack.hpp"
#include "qugia/graph.hpp"
#include "qugia/models.hpp"

namespace qugia {

using json = nlohmann::json;

namespace io {

inline bool is_gzip_path(const std::string& path) {
  return path.size() >= 3 && path.compare(path.size() - 3, 3, ".gz") == 0;
}

/// Whole file as text; `.gz` paths are inflated.
inline std::string read_text(const std::string& path) {
  if (!std::filesystem::exists(path)) throw ParseError("file not found: " + path);
  if (!is_gzip_path(path)) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }
  gzFile f = gzopen(path.c_str(), "rb");
  if (f == nullptr) throw ParseError("cannot open " + path);
  std::string out;
  char buf[1 << 16];
  int n = 0;
  while ((n = gzread(f, buf, sizeof(buf))) > 0) out.append(buf, static_cast<std::size_t>(n));
  int err = 0;
  const char* msg = gzerror(f, &err);
  const bool failed = n < 0 || (err != Z_OK && err != Z_STREAM_END);
  std::string what = failed ? std::string(msg) : "";
  gzclose(f);
  if (failed) throw ParseError("gzip read failed for " + path + ": " + what);
  return out;
}

inline void write_text(const std::string& path, const std::string& text) {
  if (!is_gzip_path(path)) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path);
    out << text;
    if (!out) throw Error("write failed for " + path);
    return;
  }
  // mtime is not written by gzwrite, so equal text gives equal bytes
  gzFile f = gzopen(path.c_str(), "wb9");
  if (f == nullptr) throw Error("cannot write " + path);
  const int written = gzwrite(f, text.data(), static_cast<unsigned>(text.size()));
  const int closed = gzclose(f);
  if ((written == 0 && !text.empty()) || closed != Z_OK) throw Error("gzip write failed for " + path);
}

inline json parse_json(const std::string& text, const std::string& origin) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(origin + ": " + e.what());
  }
}

inline json read_json(const std::string& path) { return parse_json(read_text(path), path); }

inline void write_json(const std::string& path, const json& j) { write_text(path, j.dump() + "\n"); }

template <class T>
T get_field(const json& j, const char* key, const std::string& origin) {
  if (!j.is_object() || !j.contains(key))
    throw ParseError(origin + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ParseError(origin + ": field '" + key + "' has the wrong type (" + e.what() + ")");
  }
}

}  // namespace io

// ---------------------------------------------------------------- graphs

inline json graph_to_json(const Graph& g) {
  json j;
  j["num_nodes"] = g.num_nodes();
  j["feature_dim"] = g.feature_dim();
  j["feature_kind"] = to_string(g.feature_kind());
  json edges = json::array();
  for (const auto& e : g.edges()) edges.push_back({e.u, e.v});
  j["edges"] = std::move(edges);
  if (g.feature_kind() == FeatureKind::discrete) {
    std::vector<int> ints;
    ints.reserve(g.features().data().size());
    for (double x : g.features().data()) ints.push_back(static_cast<int>(x));
    j["features"] = ints;
  } else {
    j["features"] = g.features().data();
  }
  j["labels"] = g.labels();
  std::vector<int> train, test;
  for (NodeId v = 0; v < g.num_nodes(); ++v) {
    train.push_back(g.is_train(v) ? 1 : 0);
    test.push_back(g.is_test(v) ? 1 : 0);
  }
  j["train_mask"] = train;
  j["test_mask"] = test;
  j["num_classes"] = g.num_classes();
  return j;
}

inline Graph graph_from_json(const json& j, const std::string& origin = "graph") {
  using io::get_field;
  const auto n = get_field<std::size_t>(j, "num_nodes", origin);
  const auto d = get_field<std::size_t>(j, "feature_dim", origin);
  const auto kind_name = get_field<std::string>(j, "feature_kind", origin);
  FeatureKind kind;
  if (kind_name == "discrete") kind = FeatureKind::discrete;
  else if (kind_name == "continuous") kind = FeatureKind::continuous;
  else throw ParseError(origin + ": unknown feature_kind '" + kind_name + "'");
  const auto pairs = get_field<std::vector<std::vector<std::size_t>>>(j, "edges", origin);
  std::vector<Edge> edges;
  edges.reserve(pairs.size());
  for (const auto& p : pairs) {
    if (p.size() != 2) throw ParseError(origin + ": edge entries must be [u, v] pairs");
    edges.push_back({p[0], p[1]});
  }
  auto features = get_field<std::vector<double>>(j, "features", origin);
  if (features.size() != n * d)
    throw ShapeError(origin + ": features holds " + std::to_string(features.size()) +
                     " values, expected num_nodes*feature_dim = " + std::to_string(n * d));
  auto labels = get_field<std::vector<int>>(j, "labels", origin);
  auto to_mask = [&](const char* key) {
    const auto raw = get_field<std::vector<int>>(j, key, origin);
    std::vector<bool> m(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
      if (raw[i] != 0 && raw[i] != 1) throw ParseError(origin + ": mask values must be 0 or 1");
      m[i] = raw[i] == 1;
    }
    return m;
  };
  auto train = to_mask("train_mask");
  auto test = to_mask("test_mask");
  const auto classes = get_field<std::size_t>(j, "num_classes", origin);
  return Graph(n, std::move(edges), Matrix(n, d, std::move(features)), std::move(labels),
               std::move(train), std::move(test), classes, kind);
}

inline Graph load_graph(const std::string& path) {
  return graph_from_json(io::read_json(path), path);
}

inline void save_graph(const Graph& g, const std::string& path) {
  io::write_json(path, graph_to_json(g));
}

// ---------------------------------------------------------------- weights

inline json weights_to_json(const ModelWeights& w) {
  json j;
  j["kind"] = to_string(w.kind);
  j["hyper"] = json::object();
  for (const auto& [k, v] : w.hyper) j["hyper"][k] = v;
  j["layers"] = json::array();
  for (const auto& t : w.layers)
    j["layers"].push_back({{"name", t.name}, {"shape", t.shape}, {"data", t.data}});
  return j;
}

inline ModelWeights weights_from_json(const json& j, const std::string& origin = "weights") {
  using io::get_field;
  ModelWeights w;
  w.kind = model_kind_from_string(get_field<std::string>(j, "kind", origin));
  if (j.contains("hyper")) w.hyper = get_field<std::map<std::string, double>>(j, "hyper", origin);
  const auto layers = get_field<std::vector<json>>(j, "layers", origin);
  for (const auto& l : layers) {
    Tensor t;
    t.name = get_field<std::string>(l, "name", origin);
    t.shape = get_field<std::vector<std::size_t>>(l, "shape", origin);
    t.data = get_field<std::vector<double>>(l, "data", origin);
    w.layers.push_back(std::move(t));
  }
  w.validate();
  return w;
}

inline ModelWeights load_weights(const std::string& path) {
  return weights_from_json(io::read_json(path), path);
}

inline void save_weights(const ModelWeights& w, const std::string& path) {
  io::write_json(path, weights_to_json(w));
}

// ---------------------------------------------------------------- attack config

inline json attack_config_to_json(const AttackConfig& c) {
  json j;
  j["flip_budget"] = c.flip_budget ? json(*c.flip_budget) : json(nullptr);
  j["max_iters"] = c.max_iters;
  j["decay_init"] = c.decay_init;
  j["decay_base"] = c.decay_base;
  j["gamma"] = c.gamma;
  j["neighbor_edges"] = c.neighbor_edges;
  j["rng_seed"] = c.rng_seed;
  j["label_mode"] = c.label_mode == LabelMode::predicted ? "predicted" : "ground_truth";
  j["eq13_flip"] = c.eq13_flip;
  return j;
}

/// Overlays the keys present in `j` onto `base`; unknown keys are rejected.
inline AttackConfig attack_config_from_json(const json& j, AttackConfig base = {},
                                            const std::string& origin = "attack config") {
  if (!j.is_object()) throw ParseError(origin + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "flip_budget") {
        if (value.is_null()) base.flip_budget.reset();
        else base.flip_budget = value.get<std::size_t>();
      } else if (key == "max_iters") base.max_iters = value.get<std::size_t>();
      else if (key == "decay_init") base.decay_init = value.get<double>();
      else if (key == "decay_base") base.decay_base = value.get<double>();
      else if (key == "gamma") base.gamma = value.get<double>();
      else if (key == "neighbor_edges") base.neighbor_edges = value.get<std::size_t>();
      else if (key == "rng_seed") base.rng_seed = value.get<std::uint64_t>();
      else if (key == "eq13_flip") base.eq13_flip = value.get<bool>();
      else if (key == "label_mode") {
        const auto mode = value.get<std::string>();
        if (mode == "predicted") base.label_mode = LabelMode::predicted;
        else if (mode == "ground_truth") base.label_mode = LabelMode::ground_truth;
        else throw ParseError(origin + ": unknown label_mode '" + mode + "'");
      } else {
        throw ParseError(origin + ": unknown key '" + key + "'");
      }
    } catch (const json::exception& e) {
      throw ParseError(origin + ": bad value for '" + key + "' (" + e.what() + ")");
    }
  }
  return base;
}

// ---------------------------------------------------------------- patches

struct PatchFile {
  InjectionPatch patch;
  json config_echo = json::object();
  std::size_t query_count = 0;
};

inline json patch_to_json(const PatchFile& file) {
  const auto& p = file.patch;
  json j;
  j["num_injected"] = p.num_injected();
  j["feature_dim"] = p.feature_dim();
  j["injected_features"] = p.injected_features.data();
  json cross = json::array();
  for (const auto& e : p.cross_edges) cross.push_back({e.injected, e.target});
  j["cross_edges"] = std::move(cross);
  json inter = json::array();
  for (const auto& e : p.inter_edges) inter.push_back({e.a, e.b});
  j["inter_edges"] = std::move(inter);
  j["config_echo"] = file.config_echo;
  j["query_count"] = file.query_count;
  return j;
}

inline PatchFile patch_from_json(const json& j, const std::string& origin = "patch") {
  using io::get_field;
  PatchFile file;
  const auto m = get_field<std::size_t>(j, "num_injected", origin);
  const auto d = get_field<std::size_t>(j, "feature_dim", origin);
  auto feats = get_field<std::vector<double>>(j, "injected_features", origin);
  if (feats.size() != m * d)
    throw ShapeError(origin + ": injected_features holds " + std::to_string(feats.size()) +
                     " values, expected " + std::to_string(m * d));
  file.patch.injected_features = Matrix(m, d, std::move(feats));
  for (const auto& p : get_field<std::vector<std::vector<std::size_t>>>(j, "cross_edges", origin)) {
    if (p.size() != 2) throw ParseError(origin + ": cross_edges entries must be pairs");
    file.patch.cross_edges.push_back({p[0], p[1]});
  }
  for (const auto& p : get_field<std::vector<std::vector<std::size_t>>>(j, "inter_edges", origin)) {
    if (p.size() != 2) throw ParseError(origin + ": inter_edges entries must be pairs");
    file.patch.inter_edges.push_back({p[0], p[1]});
  }
  if (j.contains("config_echo")) file.config_echo = j.at("config_echo");
  if (j.contains("query_count")) file.query_count = get_field<std::size_t>(j, "query_count", origin);
  return file;
}

inline PatchFile load_patch(const std::string& path) {
  return patch_from_json(io::read_json(path), path);
}

inline void save_patch(const PatchFile& file, const std::string& path) {
  io::write_json(path, patch_to_json(file));
}

}  // namespace qugia
