#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tinylight/dqn.hpp"
#include "tinylight/mlp.hpp"
#include "tinylight/supergraph.hpp"

namespace tinylight {

inline constexpr int kCheckpointVersion = 1;

namespace detail {

using json = nlohmann::json;

template <class Model>
std::vector<Tensor*> all_tensors(Model& m) {
  auto v = m.theta_tensors();
  for (Tensor* t : m.alpha_tensors()) v.push_back(t);
  return v;
}

inline json tensors_json(const std::vector<Tensor*>& ts) {
  json out = json::array();
  for (const Tensor* t : ts)
    out.push_back({{"name", t->name}, {"rows", t->rows}, {"cols", t->cols}, {"values", t->value}});
  return out;
}

inline void load_tensors(const json& arr, const std::vector<Tensor*>& ts, const std::string& where) {
  if (!arr.is_array() || arr.size() != ts.size())
    throw ConfigError(where + ": expected " + std::to_string(ts.size()) + " tensors");
  for (std::size_t k = 0; k < ts.size(); ++k) {
    const json& j = arr[k];
    Tensor& t = *ts[k];
    if (j.at("name").get<std::string>() != t.name || j.at("rows").get<std::size_t>() != t.rows ||
        j.at("cols").get<std::size_t>() != t.cols)
      throw ConfigError(where + ": tensor " + std::to_string(k) + " does not match " + t.name + " [" +
                        std::to_string(t.rows) + "x" + std::to_string(t.cols) + "]");
    auto v = j.at("values").get<std::vector<double>>();
    if (v.size() != t.size()) throw ConfigError(where + ": tensor " + t.name + " has the wrong number of values");
    t.value = std::move(v);
  }
}

inline json optimizer_json(const OptimizerState& s) {
  return {{"lr", s.config.lr},     {"beta1", s.config.beta1}, {"beta2", s.config.beta2}, {"eps", s.config.eps},
          {"sgd", s.config.sgd},   {"step_count", s.step_count}, {"m", s.m},           {"v", s.v}};
}

inline OptimizerState optimizer_from(const json& j) {
  OptimizerState s;
  s.config = {j.at("lr").get<double>(), j.at("beta1").get<double>(), j.at("beta2").get<double>(),
              j.at("eps").get<double>(), j.at("sgd").get<bool>()};
  s.step_count = j.at("step_count").get<long>();
  s.m = j.at("m").get<std::vector<std::vector<double>>>();
  s.v = j.at("v").get<std::vector<std::vector<double>>>();
  return s;
}

inline json model_meta(const SubGraph& s) {
  return {{"kind", "subgraph"},         {"feature_ids", s.feature_ids},   {"feature_slots", s.feature_slots},
          {"input_dims", s.input_dims}, {"input_scale", s.input_scale},   {"layer2_blocks", s.layer2_blocks},
          {"layer2_dims", s.layer2_dims}, {"layer3_blocks", s.layer3_blocks}, {"layer3_dims", s.layer3_dims},
          {"output_dim", s.output_dim}};
}

inline json model_meta(const SuperGraph& g) {
  const auto& s = g.spec();
  return {{"kind", "supergraph"},       {"feature_ids", s.feature_ids}, {"input_dims", s.input_dims},
          {"input_scale", s.input_scale}, {"layer2_dims", s.layer2_dims}, {"layer3_dims", s.layer3_dims},
          {"output_dim", s.output_dim}, {"segments", s.feature_options.segments}, {"grid", s.feature_options.grid}};
}

inline json model_meta(const Mlp& m) { return {{"kind", "mlp"}, {"dims", m.dims()}}; }

inline void expect_kind(const json& meta, const char* kind) {
  if (meta.at("kind").get<std::string>() != kind)
    throw ConfigError(std::string("checkpoint holds a ") + meta.at("kind").get<std::string>() + ", expected " + kind);
}

// Skeleton with the right shapes; weights are overwritten by load_tensors.
inline void skeleton(const json& meta, SubGraph& s) {
  expect_kind(meta, "subgraph");
  s = SubGraph{};
  s.feature_ids = meta.at("feature_ids").get<std::vector<int>>();
  s.feature_slots = meta.at("feature_slots").get<std::vector<int>>();
  s.input_dims = meta.at("input_dims").get<std::vector<int>>();
  s.input_scale = meta.at("input_scale").get<std::vector<double>>();
  s.layer2_blocks = meta.at("layer2_blocks").get<std::vector<int>>();
  s.layer2_dims = meta.at("layer2_dims").get<std::vector<int>>();
  s.layer3_blocks = meta.at("layer3_blocks").get<std::vector<int>>();
  s.layer3_dims = meta.at("layer3_dims").get<std::vector<int>>();
  s.output_dim = meta.at("output_dim").get<int>();
  if (s.input_dims.size() != s.feature_ids.size() || s.layer2_dims.size() != s.layer2_blocks.size() ||
      s.layer3_dims.size() != s.layer3_blocks.size() || s.output_dim <= 0)
    throw ConfigError("checkpoint: inconsistent sub-graph metadata");
  for (std::size_t i = 0; i < s.input_dims.size(); ++i) {
    s.edges1.emplace_back();
    for (std::size_t j = 0; j < s.layer2_dims.size(); ++j)
      s.edges1.back().emplace_back(s.input_dims[i], s.layer2_dims[j], "theta.1");
  }
  for (int d2 : s.layer2_dims) {
    s.edges2.emplace_back();
    for (int d3 : s.layer3_dims) s.edges2.back().emplace_back(d2, d3, "theta.2");
  }
  for (int d3 : s.layer3_dims) s.head.emplace_back(d3, s.output_dim, "theta.3");
}

inline void skeleton(const json& meta, SuperGraph& g) {
  expect_kind(meta, "supergraph");
  SuperGraphSpec s;
  s.feature_ids = meta.at("feature_ids").get<std::vector<int>>();
  s.input_dims = meta.at("input_dims").get<std::vector<int>>();
  s.input_scale = meta.at("input_scale").get<std::vector<double>>();
  s.layer2_dims = meta.at("layer2_dims").get<std::vector<int>>();
  s.layer3_dims = meta.at("layer3_dims").get<std::vector<int>>();
  s.output_dim = meta.at("output_dim").get<int>();
  s.feature_options.segments = meta.at("segments").get<int>();
  s.feature_options.grid = meta.at("grid").get<int>();
  g = SuperGraph(s, 0);
}

inline void skeleton(const json& meta, Mlp& m) {
  expect_kind(meta, "mlp");
  m = Mlp(meta.at("dims").get<std::vector<int>>(), 0);
}

// Sub-graph tensor names carry their position, so rename after building.
inline void name_subgraph(SubGraph& s) {
  for (std::size_t i = 0; i < s.edges1.size(); ++i)
    for (std::size_t j = 0; j < s.edges1[i].size(); ++j) {
      s.edges1[i][j].weight.name = "theta.1." + std::to_string(i) + "." + std::to_string(j) + ".weight";
      s.edges1[i][j].bias.name = "theta.1." + std::to_string(i) + "." + std::to_string(j) + ".bias";
    }
  for (std::size_t i = 0; i < s.edges2.size(); ++i)
    for (std::size_t j = 0; j < s.edges2[i].size(); ++j) {
      s.edges2[i][j].weight.name = "theta.2." + std::to_string(i) + "." + std::to_string(j) + ".weight";
      s.edges2[i][j].bias.name = "theta.2." + std::to_string(i) + "." + std::to_string(j) + ".bias";
    }
  for (std::size_t k = 0; k < s.head.size(); ++k) {
    s.head[k].weight.name = "theta.3." + std::to_string(k) + ".weight";
    s.head[k].bias.name = "theta.3." + std::to_string(k) + ".bias";
  }
}

inline void normalize_names(SubGraph& s) { name_subgraph(s); }
inline void normalize_names(SuperGraph&) {}
inline void normalize_names(Mlp&) {}

}  // namespace detail

// {"format", "schema_version", "intersection", "model", "online", "target",
//  "theta_optimizer", "alpha_optimizer"}; tensors as row-major value arrays.
template <class Model>
nlohmann::json agent_checkpoint(const DqnAgent<Model>& agent, const std::string& intersection) {
  auto& a = const_cast<DqnAgent<Model>&>(agent);
  Model online = a.online, target = a.target;
  detail::normalize_names(online);
  detail::normalize_names(target);
  return {{"format", "tinylight-checkpoint"},
          {"schema_version", kCheckpointVersion},
          {"intersection", intersection},
          {"model", detail::model_meta(a.online)},
          {"online", detail::tensors_json(detail::all_tensors(online))},
          {"target", detail::tensors_json(detail::all_tensors(target))},
          {"theta_optimizer", detail::optimizer_json(a.theta_opt)},
          {"alpha_optimizer", detail::optimizer_json(a.alpha_opt)}};
}

inline void check_checkpoint_header(const nlohmann::json& doc) {
  if (!doc.is_object() || doc.value("format", "") != "tinylight-checkpoint")
    throw ConfigError("not a tinylight checkpoint");
  if (doc.value("schema_version", 0) != kCheckpointVersion)
    throw ConfigError("unsupported checkpoint schema_version " + doc.value("schema_version", nlohmann::json()).dump());
}

// Online network only.
template <class Model>
Model load_model(const nlohmann::json& doc) {
  check_checkpoint_header(doc);
  Model m;
  detail::skeleton(doc.at("model"), m);
  detail::normalize_names(m);
  detail::load_tensors(doc.at("online"), detail::all_tensors(m), "checkpoint online");
  return m;
}

// Networks and optimizer moments; the replay buffer is not persisted.
template <class Model>
void restore_agent(DqnAgent<Model>& agent, const nlohmann::json& doc) {
  agent.online = load_model<Model>(doc);
  Model target;
  detail::skeleton(doc.at("model"), target);
  detail::normalize_names(target);
  detail::load_tensors(doc.at("target"), detail::all_tensors(target), "checkpoint target");
  agent.target = std::move(target);
  agent.theta_opt = detail::optimizer_from(doc.at("theta_optimizer"));
  agent.alpha_opt = detail::optimizer_from(doc.at("alpha_optimizer"));
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

}  // namespace tinylight
