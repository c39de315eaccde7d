#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tinylight/builders.hpp"
#include "tinylight/checkpoint.hpp"
#include "tinylight/search.hpp"

namespace tinylight {

inline constexpr int kConfigVersion = 1;

struct AgentConfig {
  std::string kind = "MaxPressure";  // FixedTime, MaxPressure, SOTL, TinyLight, TLRP, EcoLight
  int cycle_s = 30;
  int max_pressure_interval_s = 10;
  SotlParams sotl;
  std::array<int, 3> keep{2, 1, 1};
};

struct EvaluationPlan {
  int duration_s = 3600;
  int jitter_s = 60;
};

struct ExperimentConfig {
  std::string name = "experiment";
  std::string scenario = "builtin:desk";  // builtin:desk, builtin:empty or a JSON path
  AgentConfig agent;
  HyperParams hyper_params;
  std::vector<std::uint64_t> seeds{1};
  EvaluationPlan evaluation;
  std::string output_dir = "runs/experiment";  // relative to the working directory
  std::filesystem::path base_dir;  // scenario paths resolve against this; not serialized
};

inline bool is_learned(const std::string& kind) { return kind == "TinyLight" || kind == "TLRP" || kind == "EcoLight"; }

inline const std::vector<std::string>& agent_kinds() {
  static const std::vector<std::string> k = {"FixedTime", "MaxPressure", "SOTL", "TinyLight", "TLRP", "EcoLight"};
  return k;
}

namespace detail {

using json = nlohmann::json;

// Reads known keys from an object and records every problem instead of
// stopping at the first.
class Reader {
 public:
  Reader(const json& obj, std::string path, std::vector<std::string>& errors)
      : obj_(obj), path_(std::move(path)), errors_(errors) {
    if (!obj_.is_object()) errors_.push_back(path_ + ": expected an object");
  }

  template <class T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    if (!obj_.is_object() || !obj_.contains(key)) return;
    try {
      out = obj_.at(key).get<T>();
    } catch (const json::exception&) {
      errors_.push_back(path_ + "." + key + ": wrong type (" + std::string(obj_.at(key).type_name()) + ")");
    }
  }

  const json* child(const std::string& key) {
    seen_.insert(key);
    return obj_.is_object() && obj_.contains(key) ? &obj_.at(key) : nullptr;
  }

  void finish() {
    if (!obj_.is_object()) return;
    for (auto it = obj_.begin(); it != obj_.end(); ++it)
      if (!seen_.count(it.key())) errors_.push_back(path_ + ": unknown key '" + it.key() + "'");
  }

 private:
  const json& obj_;
  std::string path_;
  std::vector<std::string>& errors_;
  std::set<std::string> seen_;
};

inline json hyper_json(const HyperParams& h) {
  return {{"buffer_capacity", h.buffer_capacity},
          {"batch_size", h.batch_size},
          {"gamma", h.gamma},
          {"epsilon_start", h.epsilon_start},
          {"epsilon_end", h.epsilon_end},
          {"tau", h.tau},
          {"lr", h.lr},
          {"alpha_lr", h.alpha_lr},
          {"beta", h.beta},
          {"sgd", h.sgd},
          {"search_episodes", h.search_episodes},
          {"refine_episodes", h.refine_episodes},
          {"episode_seconds", h.episode_seconds},
          {"refine_episode_seconds", h.refine_episode_seconds},
          {"keep_best", h.keep_best},
          {"decision_interval", h.decision_interval},
          {"reward_scale", h.reward_scale}};
}

inline void read_hyper(const json& j, HyperParams& h, std::vector<std::string>& errors) {
  Reader r(j, "hyper_params", errors);
  r.get("buffer_capacity", h.buffer_capacity);
  r.get("batch_size", h.batch_size);
  r.get("gamma", h.gamma);
  r.get("epsilon_start", h.epsilon_start);
  r.get("epsilon_end", h.epsilon_end);
  r.get("tau", h.tau);
  r.get("lr", h.lr);
  r.get("alpha_lr", h.alpha_lr);
  r.get("beta", h.beta);
  r.get("sgd", h.sgd);
  r.get("search_episodes", h.search_episodes);
  r.get("refine_episodes", h.refine_episodes);
  r.get("episode_seconds", h.episode_seconds);
  r.get("refine_episode_seconds", h.refine_episode_seconds);
  r.get("keep_best", h.keep_best);
  r.get("decision_interval", h.decision_interval);
  r.get("reward_scale", h.reward_scale);
  r.finish();
}

}  // namespace detail

// Every field, defaults included; the hash of its dump identifies a run.
inline nlohmann::json to_json(const ExperimentConfig& c) {
  return {{"schema_version", kConfigVersion},
          {"name", c.name},
          {"scenario", c.scenario},
          {"agent",
           {{"kind", c.agent.kind},
            {"cycle_s", c.agent.cycle_s},
            {"max_pressure_interval_s", c.agent.max_pressure_interval_s},
            {"sotl_theta_green", c.agent.sotl.theta_green},
            {"sotl_theta_red", c.agent.sotl.theta_red},
            {"sotl_min_green_s", c.agent.sotl.min_green_s},
            {"keep", c.agent.keep}}},
          {"hyper_params", detail::hyper_json(c.hyper_params)},
          {"seeds", c.seeds},
          {"evaluation", {{"duration_s", c.evaluation.duration_s}, {"jitter_s", c.evaluation.jitter_s}}},
          {"output_dir", c.output_dir}};
}

inline std::string config_hash(const ExperimentConfig& c) { return hex64(fnv1a64(to_json(c).dump())); }

inline std::filesystem::path resolve(const ExperimentConfig& c, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() || c.base_dir.empty() ? path : c.base_dir / path;
}

// All violations in one ConfigError.
inline ExperimentConfig parse_config(const nlohmann::json& doc, const std::filesystem::path& base_dir = {}) {
  std::vector<std::string> errors;
  ExperimentConfig c;
  c.base_dir = base_dir;
  detail::Reader top(doc, "config", errors);
  int version = 0;
  top.get("schema_version", version);
  if (version != kConfigVersion) errors.push_back("config.schema_version: expected " + std::to_string(kConfigVersion));
  top.get("name", c.name);
  top.get("scenario", c.scenario);
  top.get("seeds", c.seeds);
  top.get("output_dir", c.output_dir);
  if (const auto* a = top.child("agent")) {
    detail::Reader r(*a, "agent", errors);
    r.get("kind", c.agent.kind);
    r.get("cycle_s", c.agent.cycle_s);
    r.get("max_pressure_interval_s", c.agent.max_pressure_interval_s);
    r.get("sotl_theta_green", c.agent.sotl.theta_green);
    r.get("sotl_theta_red", c.agent.sotl.theta_red);
    r.get("sotl_min_green_s", c.agent.sotl.min_green_s);
    r.get("keep", c.agent.keep);
    r.finish();
  }
  if (const auto* h = top.child("hyper_params")) detail::read_hyper(*h, c.hyper_params, errors);
  if (const auto* e = top.child("evaluation")) {
    detail::Reader r(*e, "evaluation", errors);
    r.get("duration_s", c.evaluation.duration_s);
    r.get("jitter_s", c.evaluation.jitter_s);
    r.finish();
  }
  top.finish();

  if (std::find(agent_kinds().begin(), agent_kinds().end(), c.agent.kind) == agent_kinds().end())
    errors.push_back("agent.kind: unknown agent '" + c.agent.kind + "'");
  if (c.agent.cycle_s <= 0) errors.push_back("agent.cycle_s must be positive");
  if (c.agent.max_pressure_interval_s <= 0) errors.push_back("agent.max_pressure_interval_s must be positive");
  if (c.agent.sotl.theta_green < 0 || c.agent.sotl.theta_red < 0) errors.push_back("agent: SOTL thresholds must be >= 0");
  if (c.agent.sotl.min_green_s < 0) errors.push_back("agent.sotl_min_green_s must be >= 0");
  for (int k : c.agent.keep)
    if (k < 1) errors.push_back("agent.keep entries must be >= 1");
  if (c.seeds.empty()) errors.push_back("config.seeds must not be empty");
  if (c.evaluation.duration_s <= 0) errors.push_back("evaluation.duration_s must be positive");
  if (c.evaluation.jitter_s < 0) errors.push_back("evaluation.jitter_s must be >= 0");
  if (c.output_dir.empty()) errors.push_back("config.output_dir must not be empty");
  for (auto& v : c.hyper_params.violations()) errors.push_back("hyper_params: " + v);
  if (c.scenario.rfind("builtin:", 0) == 0) {
    if (c.scenario != "builtin:desk" && c.scenario != "builtin:empty")
      errors.push_back("config.scenario: unknown builtin '" + c.scenario + "'");
  } else if (!std::filesystem::exists(resolve(c, c.scenario))) {
    errors.push_back("config.scenario: file not found: " + resolve(c, c.scenario).string());
  }
  if (!errors.empty()) {
    std::string msg = "invalid config (" + std::to_string(errors.size()) + " problem" + (errors.size() > 1 ? "s" : "") + "):";
    for (const auto& e : errors) msg += "\n  - " + e;
    throw ConfigError(msg);
  }
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  return parse_config(read_json_file(path), std::filesystem::path(path).parent_path());
}

inline Scenario load_experiment_scenario(const ExperimentConfig& c) {
  if (c.scenario == "builtin:desk") return make_desk_scenario(c.evaluation.duration_s);
  if (c.scenario == "builtin:empty") return make_four_way();
  return load_scenario(resolve(c, c.scenario).string());
}


// Network-scale inputs of `sub` seen at every decision of a MaxPressure run;
// used to calibrate Q15 scales and to draw test vectors.
inline std::vector<SubGraphInput> record_subgraph_states(const SubGraph& sub, const Scenario& sc,
                                                         const std::string& intersection_id, int duration_s) {
  class Recorder : public MaxPressureController {
   public:
    Recorder(const SubGraph& sub, int idx, ObserveFn f, std::vector<SubGraphInput>& out)
        : sub_(sub), idx_(idx), observe_(std::move(f)), out_(out) {}
    int decide(const Simulator& sim, int inter_idx) override {
      if (inter_idx == idx_) out_.push_back(sub_.select(observe_(sim, inter_idx)));
      return MaxPressureController::decide(sim, inter_idx);
    }

   private:
    const SubGraph& sub_;
    int idx_;
    ObserveFn observe_;
    std::vector<SubGraphInput>& out_;
  };
  Simulator sim(sc);
  int idx = -1;
  for (int i : sim.signalized())
    if (sim.network().intersections[i].id == intersection_id) idx = i;
  if (idx < 0) throw ConfigError("scenario has no signalized intersection '" + intersection_id + "'");
  std::vector<SubGraphInput> out;
  Recorder rec(sub, idx, full_observer(sim), out);
  std::vector<Controller*> raw(sim.signalized().size(), &rec);
  run_episode(sim, raw, duration_s);
  return out;
}

// --- summaries -------------------------------------------------------------

struct Stat {
  double mean = 0.0;
  std::optional<double> std;  // sample std over >= 2 values
  int n = 0;
};

inline Stat summarize(const std::vector<double>& v) {
  Stat s;
  s.n = static_cast<int>(v.size());
  if (v.empty()) return s;
  for (double x : v) s.mean += x;
  s.mean /= static_cast<double>(v.size());
  if (v.size() >= 2) {
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return s;
}

struct SeedResult {
  std::uint64_t seed = 0;
  EpisodeResult result;
};

struct RunSummary {
  std::string model;
  std::vector<SeedResult> per_seed;

  Stat travel_time() const {
    std::vector<double> v;
    for (const auto& s : per_seed)
      if (s.result.metrics.avg_travel_time) v.push_back(*s.result.metrics.avg_travel_time);
    return summarize(v);
  }
  Stat travel_time_all() const {
    std::vector<double> v;
    for (const auto& s : per_seed)
      if (s.result.metrics.avg_travel_time_all) v.push_back(*s.result.metrics.avg_travel_time_all);
    return summarize(v);
  }
  Stat throughput() const {
    std::vector<double> v;
    for (const auto& s : per_seed) v.push_back(s.result.metrics.throughput);
    return summarize(v);
  }
};

namespace detail {

inline std::string opt_real(const std::optional<double>& v) { return v ? format_real(*v) : std::string(); }

inline std::string stat_cells(const Stat& s) {
  return (s.n ? format_real(s.mean) : std::string()) + "," + opt_real(s.std);
}

}  // namespace detail

// seed rows, then mean and std rows.
inline void write_summary_csv(std::ostream& os, const RunSummary& s) {
  os << "seed,avg_travel_time,avg_travel_time_all,throughput_per_min,finished,released\n";
  for (const auto& r : s.per_seed)
    os << r.seed << ',' << detail::opt_real(r.result.metrics.avg_travel_time) << ','
       << detail::opt_real(r.result.metrics.avg_travel_time_all) << ',' << format_real(r.result.metrics.throughput) << ','
       << r.result.finished << ',' << r.result.released << '\n';
  const Stat t = s.travel_time(), a = s.travel_time_all(), q = s.throughput();
  os << "mean," << (t.n ? format_real(t.mean) : "") << ',' << (a.n ? format_real(a.mean) : "") << ','
     << format_real(q.mean) << ",,\n";
  os << "std," << detail::opt_real(t.std) << ',' << detail::opt_real(a.std) << ',' << detail::opt_real(q.std) << ",,\n";
}

// One row per model: travel time and throughput with their std.
inline void write_comparison_csv(std::ostream& os, const std::vector<RunSummary>& runs) {
  os << "model,travel_time,travel_time_std,travel_time_all,travel_time_all_std,throughput,throughput_std,seeds\n";
  for (const auto& r : runs)
    os << r.model << ',' << detail::stat_cells(r.travel_time()) << ',' << detail::stat_cells(r.travel_time_all()) << ','
       << detail::stat_cells(r.throughput()) << ',' << r.per_seed.size() << '\n';
}

inline std::string format_stat(const Stat& s, int digits = 2) {
  if (s.n == 0) return "n/a";
  return format_fixed(s.mean, digits) + (s.std ? " +- " + format_fixed(*s.std, digits) : std::string());
}

// --- commands ----------------------------------------------------------------

using Progress = std::function<void(const std::string&)>;

struct RunOptions {
  std::optional<std::string> output_dir;          // overrides the config
  std::optional<std::vector<std::uint64_t>> seeds;  // overrides the config
  Progress progress;
};

namespace detail {

inline void write_text(const std::filesystem::path& p, const std::string& s) {
  std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error("cannot write " + p.string());
  out << s;
}

template <class F>
std::string to_string_with(F&& f) {
  std::ostringstream os;
  f(os);
  return os.str();
}

inline std::unique_ptr<Controller> rule_controller(const AgentConfig& a) {
  if (a.kind == "FixedTime") return std::make_unique<FixedTimeController>(a.cycle_s);
  if (a.kind == "MaxPressure") return std::make_unique<MaxPressureController>(a.max_pressure_interval_s);
  if (a.kind == "SOTL") return std::make_unique<SotlController>(a.sotl);
  throw ConfigError("agent '" + a.kind + "' is not rule-based");
}

inline void write_manifest(const std::filesystem::path& dir, const std::string& command, const ExperimentConfig& c,
                           const std::vector<std::uint64_t>& seeds) {
  const nlohmann::json m = {{"format", "tinylight-run"},
                            {"schema_version", kConfigVersion},
                            {"command", command},
                            {"config_hash", config_hash(c)},
                            {"seeds", seeds},
                            {"config", to_json(c)}};
  write_text(dir / "manifest.json", m.dump(2) + "\n");
}

template <class Model>
void write_checkpoints(const std::filesystem::path& dir, const std::string& stem, const Simulator& probe,
                       const std::vector<DqnAgent<Model>>& agents) {
  const auto& sig = probe.signalized();
  for (std::size_t k = 0; k < agents.size(); ++k) {
    const std::string id = probe.network().intersections[sig[k]].id;
    write_text(dir / (stem + id + ".json"), agent_checkpoint(agents[k], id).dump() + "\n");
  }
}

}  // namespace detail

// Runs one seed of any agent kind and writes its artifacts under `dir`.
inline EpisodeResult run_seed(const ExperimentConfig& c, const Scenario& base, std::uint64_t seed,
                              const std::filesystem::path& dir, const Progress& progress = {}) {
  const ScenarioSource source{base, seed, c.evaluation.jitter_s};
  const Scenario eval = source.evaluation();
  std::vector<DecisionRow> log;
  EpisodeResult res;
  Simulator probe(base);
  const HyperParams& hp = c.hyper_params;
  auto note = [&](const std::string& s) {
    if (progress) progress("seed " + std::to_string(seed) + ": " + s);
  };
  if (!is_learned(c.agent.kind)) {
    Simulator sim(eval);
    std::vector<std::unique_ptr<Controller>> ctl;
    std::vector<Controller*> raw;
    for (std::size_t k = 0; k < sim.signalized().size(); ++k) {
      ctl.push_back(detail::rule_controller(c.agent));
      raw.push_back(ctl.back().get());
    }
    res = run_episode(sim, raw, c.evaluation.duration_s, &log);
  } else if (c.agent.kind == "TinyLight") {
    note("search");
    auto sr = run_search(source, hp, seed);
    detail::write_text(dir / "alpha.csv", detail::to_string_with([&](std::ostream& os) { write_alpha_csv(os, sr.alpha_log); }));
    detail::write_checkpoints(dir / "checkpoints", "supergraph_", probe, sr.agents);
    note("refine");
    auto rr = run_refine(source, sr, hp, c.agent.keep);
    std::vector<EpisodeRecord> all = sr.episodes;
    all.insert(all.end(), rr.episodes.begin(), rr.episodes.end());
    detail::write_text(dir / "episodes.csv", detail::to_string_with([&](std::ostream& os) { write_episode_csv(os, all); }));
    detail::write_checkpoints(dir / "checkpoints", "", probe, rr.agents);
    res = evaluate_agents(rr.agents, eval, c.evaluation.duration_s, full_observer(probe), identity_action, &log);
  } else if (c.agent.kind == "TLRP") {
    note("train random path");
    auto rr = run_tlrp(source, hp, seed, c.agent.keep);
    detail::write_text(dir / "episodes.csv", detail::to_string_with([&](std::ostream& os) { write_episode_csv(os, rr.episodes); }));
    detail::write_checkpoints(dir / "checkpoints", "", probe, rr.agents);
    res = evaluate_agents(rr.agents, eval, c.evaluation.duration_s, full_observer(probe), identity_action, &log);
  } else {
    note("train EcoLight");
    auto er = run_ecolight(source, hp, seed);
    detail::write_text(dir / "episodes.csv", detail::to_string_with([&](std::ostream& os) { write_episode_csv(os, er.episodes); }));
    detail::write_checkpoints(dir / "checkpoints", "ecolight_", probe, er.agents);
    res = evaluate_agents(er.agents, eval, c.evaluation.duration_s, ecolight_observe, keep_or_switch, &log);
  }
  detail::write_text(dir / "decisions.csv", detail::to_string_with([&](std::ostream& os) { write_decision_csv(os, log); }));
  return res;
}

inline RunSummary run_experiment(const ExperimentConfig& c, const std::string& command, const RunOptions& opt = {}) {
  const std::filesystem::path out = opt.output_dir.value_or(c.output_dir);
  const auto seeds = opt.seeds.value_or(c.seeds);
  if (seeds.empty()) throw ConfigError("no seeds to run");
  const Scenario base = load_experiment_scenario(c);
  detail::write_manifest(out, command, c, seeds);
  RunSummary s;
  s.model = c.agent.kind;
  for (std::uint64_t seed : seeds)
    s.per_seed.push_back({seed, run_seed(c, base, seed, out / ("seed_" + std::to_string(seed)), opt.progress)});
  detail::write_text(out / "summary.csv", detail::to_string_with([&](std::ostream& os) { write_summary_csv(os, s); }));
  return s;
}

inline RunSummary cmd_simulate(const ExperimentConfig& c, const RunOptions& opt = {}) {
  if (is_learned(c.agent.kind)) throw ConfigError("simulate runs rule-based agents; use train for " + c.agent.kind);
  return run_experiment(c, "simulate", opt);
}

inline RunSummary cmd_train(const ExperimentConfig& c, const RunOptions& opt = {}) {
  if (!is_learned(c.agent.kind)) throw ConfigError("train needs a learned agent; use simulate for " + c.agent.kind);
  return run_experiment(c, "train", opt);
}

// Each config writes under <out>/<name>; the comparison CSV lands in <out>.
inline std::vector<RunSummary> cmd_compare(const std::vector<ExperimentConfig>& configs, const std::string& out_dir,
                                           const RunOptions& opt = {}) {
  std::set<std::string> names;
  for (const auto& c : configs)
    if (!names.insert(c.name).second) throw ConfigError("compare: duplicate config name '" + c.name + "'");
  std::vector<RunSummary> runs;
  for (const auto& c : configs) {
    RunOptions o = opt;
    o.output_dir = (std::filesystem::path(out_dir) / c.name).string();
    RunSummary s = run_experiment(c, "compare", o);
    s.model = c.name;
    runs.push_back(std::move(s));
  }
  detail::write_text(std::filesystem::path(out_dir) / "comparison.csv",
                     detail::to_string_with([&](std::ostream& os) { write_comparison_csv(os, runs); }));
  return runs;
}

}  // namespace tinylight
