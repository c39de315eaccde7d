#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "tinylight/checkpoint.hpp"
#include "tinylight/experiment.hpp"

using namespace tinylight;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  fs::path d = fs::temp_directory_path() / ("tinylight-test-" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

int lines(const std::string& s) { return static_cast<int>(std::count(s.begin(), s.end(), '\n')); }

nlohmann::json base_config(const std::string& kind) {
  return {{"schema_version", 1},
          {"name", kind},
          {"scenario", "builtin:desk"},
          {"agent", {{"kind", kind}}},
          {"seeds", {1}},
          {"evaluation", {{"duration_s", 600}, {"jitter_s", 60}}},
          {"output_dir", "unused"}};
}

std::string config_error(const nlohmann::json& doc) {
  try {
    parse_config(doc);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

HyperParams tiny_budget() {
  HyperParams hp;
  hp.search_episodes = 2;
  hp.refine_episodes = 2;
  hp.episode_seconds = 300;
  hp.refine_episode_seconds = 300;
  return hp;
}

}  // namespace

TEST(Config, SamplesParse) {
  int n = 0;
  for (const auto& e : fs::directory_iterator(fs::path(TINYLIGHT_SOURCE_DIR) / "samples")) {
    const ExperimentConfig c = load_config(e.path().string());
    EXPECT_FALSE(c.seeds.empty()) << e.path();
    ++n;
  }
  EXPECT_GE(n, 6);
}

TEST(Config, DefaultsFillMissingFields) {
  const ExperimentConfig c = parse_config(base_config("MaxPressure"));
  EXPECT_EQ(c.agent.max_pressure_interval_s, 10);
  EXPECT_EQ(c.hyper_params.batch_size, 32u);
  EXPECT_EQ(c.hyper_params.buffer_capacity, 100000u);
  EXPECT_DOUBLE_EQ(c.hyper_params.gamma, 0.9);
  EXPECT_DOUBLE_EQ(c.hyper_params.beta, 16.0);
  EXPECT_EQ(c.agent.keep, (std::array<int, 3>{2, 1, 1}));
}

TEST(Config, UnknownKeysRejected) {
  auto doc = base_config("FixedTime");
  doc["sedes"] = {1};
  doc["hyper_params"] = {{"gama", 0.5}};
  const std::string msg = config_error(doc);
  EXPECT_NE(msg.find("sedes"), std::string::npos) << msg;
  EXPECT_NE(msg.find("gama"), std::string::npos) << msg;
}

TEST(Config, EnumeratesAllViolations) {
  auto doc = base_config("Nope");
  doc["seeds"] = nlohmann::json::array();
  doc["evaluation"]["duration_s"] = 0;
  doc["hyper_params"] = {{"gamma", 2.0}, {"batch_size", "many"}};
  doc["scenario"] = "missing.json";
  doc.erase("schema_version");
  const std::string msg = config_error(doc);
  for (const char* want : {"agent.kind", "seeds", "duration_s", "gamma", "batch_size", "file not found", "schema_version"})
    EXPECT_NE(msg.find(want), std::string::npos) << want << "\n" << msg;
  EXPECT_NE(msg.find("7 problems"), std::string::npos) << msg;
}

TEST(Config, ScenarioPathsResolveAgainstConfigDirectory) {
  const fs::path dir = scratch("config-dir");
  std::ofstream(dir / "net.json") << to_json(make_four_way()).dump();
  auto doc = base_config("FixedTime");
  doc["scenario"] = "net.json";
  std::ofstream(dir / "c.json") << doc.dump();
  const ExperimentConfig c = load_config((dir / "c.json").string());
  EXPECT_EQ(load_experiment_scenario(c).vehicle_count(), 0u);
}

TEST(Config, HashIsStableAndSensitive) {
  const ExperimentConfig a = parse_config(base_config("FixedTime"));
  ExperimentConfig b = a;
  EXPECT_EQ(config_hash(a), config_hash(b));
  b.seeds = {2};
  EXPECT_NE(config_hash(a), config_hash(b));
  EXPECT_EQ(config_hash(parse_config(to_json(a))), config_hash(a));
}

TEST(Summary, SampleStatistics) {
  const Stat s = summarize({1, 2, 3, 4});
  EXPECT_DOUBLE_EQ(s.mean, 2.5);
  EXPECT_DOUBLE_EQ(*s.std, std::sqrt(5.0 / 3.0));
  EXPECT_FALSE(summarize({7}).std.has_value());
  EXPECT_EQ(summarize({}).n, 0);
  EXPECT_EQ(format_stat(s), "2.50 +- 1.29");
  EXPECT_EQ(format_stat(summarize({7})), "7.00");
}

TEST(Commands, EmptyDemandGivesZeroThroughput) {
  const fs::path out = scratch("empty");
  auto doc = base_config("FixedTime");
  doc["scenario"] = "builtin:empty";
  RunOptions opt;
  opt.output_dir = out.string();
  const RunSummary s = cmd_simulate(parse_config(doc), opt);
  EXPECT_EQ(s.throughput().mean, 0.0);
  EXPECT_EQ(s.travel_time().n, 0);
  EXPECT_TRUE(fs::exists(out / "summary.csv"));
  EXPECT_TRUE(fs::exists(out / "seed_1" / "decisions.csv"));
  const auto manifest = read_json_file((out / "manifest.json").string());
  EXPECT_EQ(manifest["config_hash"], config_hash(parse_config(doc)));
  EXPECT_EQ(manifest["seeds"], nlohmann::json({1}));
  const std::string summary = slurp(out / "summary.csv");
  EXPECT_NE(summary.find("\n1,,,0,0,0\n"), std::string::npos) << summary;
}

TEST(Commands, SimulateAndTrainCheckAgentKind) {
  EXPECT_THROW(cmd_simulate(parse_config(base_config("TinyLight"))), ConfigError);
  EXPECT_THROW(cmd_train(parse_config(base_config("MaxPressure"))), ConfigError);
}

TEST(Commands, RunsAreByteIdentical) {
  auto doc = base_config("SOTL");
  doc["seeds"] = {3, 4};
  const ExperimentConfig c = parse_config(doc);
  std::array<fs::path, 2> dirs = {scratch("det-a"), scratch("det-b")};
  for (const auto& d : dirs) {
    RunOptions opt;
    opt.output_dir = d.string();
    cmd_simulate(c, opt);
  }
  for (const char* f : {"summary.csv", "seed_3/decisions.csv", "seed_4/decisions.csv", "manifest.json"})
    EXPECT_EQ(slurp(dirs[0] / f), slurp(dirs[1] / f)) << f;
  EXPECT_NE(slurp(dirs[0] / "seed_3/decisions.csv"), slurp(dirs[0] / "seed_4/decisions.csv"));
}

TEST(Commands, CompareWritesOneRowPerConfig) {
  const fs::path out = scratch("compare");
  auto ft = base_config("FixedTime"), mp = base_config("MaxPressure");
  ft["seeds"] = mp["seeds"] = {1, 2};
  ft["evaluation"]["duration_s"] = mp["evaluation"]["duration_s"] = 1800;
  const auto runs = cmd_compare({parse_config(ft), parse_config(mp)}, out.string());
  ASSERT_EQ(runs.size(), 2u);
  EXPECT_LT(runs[1].travel_time_all().mean, runs[0].travel_time_all().mean);
  const std::string csv = slurp(out / "comparison.csv");
  EXPECT_EQ(lines(csv), 3);
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "model,travel_time,travel_time_std,travel_time_all,travel_time_all_std,throughput,throughput_std,seeds");
  EXPECT_NE(csv.find("\nMaxPressure,"), std::string::npos);
  EXPECT_TRUE(fs::exists(out / "FixedTime" / "summary.csv"));
  EXPECT_THROW(cmd_compare({parse_config(ft), parse_config(ft)}, out.string()), ConfigError);
}

TEST(Commands, ShortTinyLightTraining) {
  const fs::path out = scratch("train");
  ExperimentConfig c = parse_config(base_config("TinyLight"));
  c.hyper_params = tiny_budget();
  c.evaluation.duration_s = 600;
  RunOptions opt;
  opt.output_dir = out.string();
  const RunSummary s = cmd_train(c, opt);
  ASSERT_EQ(s.per_seed.size(), 1u);
  const fs::path seed = out / "seed_1";
  EXPECT_EQ(lines(slurp(seed / "episodes.csv")), 1 + 4);
  EXPECT_EQ(lines(slurp(seed / "alpha.csv")), 1 + 2 * 3);
  EXPECT_EQ(lines(slurp(seed / "decisions.csv")), 1 + 60);
  const auto doc = read_json_file((seed / "checkpoints" / "I0.json").string());
  const SubGraph sub = load_model<SubGraph>(doc);
  EXPECT_EQ(sub.feature_ids.size(), 2u);
  EXPECT_TRUE(sub.connected());
  const SuperGraph sg = load_model<SuperGraph>(read_json_file((seed / "checkpoints" / "supergraph_I0.json").string()));
  EXPECT_EQ(sg.spec().feature_ids.size(), 37u);
  const auto states = record_subgraph_states(sub, make_desk_scenario(300), "I0", 300);
  EXPECT_EQ(states.size(), 30u);
  for (const auto& x : states) ASSERT_EQ(x.size(), 2u);
  EXPECT_THROW(record_subgraph_states(sub, make_desk_scenario(300), "I9", 300), ConfigError);
}

TEST(Checkpoint, RoundTripsNetworksAndOptimizers) {
  SuperGraphSpec spec;
  spec.feature_ids = {3, 7};
  spec.input_dims = {2, 3};
  spec.input_scale = {0.5, 0.25};
  spec.layer2_dims = {3, 4};
  spec.layer3_dims = {2};
  spec.output_dim = 3;
  HyperParams hp;
  hp.batch_size = 1;
  DqnAgent<SuperGraph> agent(SuperGraph(spec, 4), hp, 1);
  Transition t{{{0.1, 0.2}, {0.3, 0.4, 0.5}}, 1, -0.5, {{0.2, 0.1}, {0.0, 0.4, 0.1}}, false};
  agent.train_step({&t});
  const std::string text = agent_checkpoint(agent, "I0").dump();
  const auto doc = nlohmann::json::parse(text);
  EXPECT_EQ(doc["format"], "tinylight-checkpoint");
  EXPECT_EQ(doc["schema_version"], 1);

  DqnAgent<SuperGraph> restored(SuperGraph(spec, 99), hp, 2);
  restore_agent(restored, doc);
  const Observation obs = {{0.7, -0.1}, {0.2, 0.2, -0.3}};
  EXPECT_EQ(restored.online.forward(obs), agent.online.forward(obs));
  EXPECT_EQ(restored.target.forward(obs), agent.target.forward(obs));
  EXPECT_EQ(restored.theta_opt.m, agent.theta_opt.m);
  EXPECT_EQ(restored.alpha_opt.v, agent.alpha_opt.v);
  EXPECT_EQ(restored.alpha_opt.step_count, 1);
  EXPECT_EQ(agent_checkpoint(restored, "I0").dump(), text);

  const SubGraph sub = extract(agent.online, {1, 2, 1});
  DqnAgent<SubGraph> sa(sub, hp, 3);
  const SubGraph back = load_model<SubGraph>(agent_checkpoint(sa, "I0"));
  EXPECT_EQ(back.forward(obs), sub.forward(obs));
  EXPECT_EQ(back.input_scale, sub.input_scale);
  EXPECT_EQ(back.feature_slots, sub.feature_slots);

  DqnAgent<Mlp> m(Mlp({2, 4, 2}, 1), hp, 1);
  EXPECT_EQ(load_model<Mlp>(agent_checkpoint(m, "I0")).forward(obs), m.online.forward(obs));
}

TEST(Checkpoint, RejectsMismatches) {
  DqnAgent<Mlp> m(Mlp({2, 4, 2}, 1), HyperParams{}, 1);
  auto doc = agent_checkpoint(m, "I0");
  EXPECT_THROW(load_model<SubGraph>(doc), ConfigError);
  auto bad = doc;
  bad["schema_version"] = 7;
  EXPECT_THROW(load_model<Mlp>(bad), ConfigError);
  bad = doc;
  bad["online"][0]["values"].erase(0);
  EXPECT_THROW(load_model<Mlp>(bad), ConfigError);
  bad = doc;
  bad["model"]["dims"] = {2, 5, 2};
  EXPECT_THROW(load_model<Mlp>(bad), ConfigError);
  EXPECT_THROW(check_checkpoint_header(nlohmann::json::array()), ConfigError);
  EXPECT_THROW(read_json_file("/nonexistent.json"), ConfigError);
}
