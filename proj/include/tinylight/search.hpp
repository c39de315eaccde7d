#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "tinylight/control.hpp"
#include "tinylight/dqn.hpp"
#include "tinylight/mlp.hpp"

namespace tinylight {

using ObserveFn = std::function<Observation(const Simulator&, int)>;
// Maps an agent action to the requested phase.
using ActionMap = std::function<int(const Simulator&, int, int)>;

inline int identity_action(const Simulator&, int, int a) { return a; }

// EcoLight actions: 0 keeps the current phase, 1 advances cyclically.
inline int keep_or_switch(const Simulator& sim, int inter_idx, int a) {
  const int cur = sim.signal(inter_idx).current_phase;
  return a == 0 ? cur : (cur + 1) % sim.network().intersections[inter_idx].phase_count();
}

template <class Model>
class DqnController : public Controller {
 public:
  DqnController(DqnAgent<Model>& agent, ObserveFn observe, ActionMap map, double epsilon, bool learn)
      : agent_(agent), observe_(std::move(observe)), map_(std::move(map)), epsilon_(epsilon), learn_(learn) {}

  std::string name() const override { return "DQN"; }
  int interval() const override { return agent_.hyper_params().decision_interval; }

  int decide(const Simulator& sim, int inter_idx) override {
    Observation obs = observe_(sim, inter_idx);
    if (learn_ && has_prev_) record(sim, inter_idx, obs, false);
    prev_a_ = agent_.act(obs, epsilon_);
    prev_obs_ = std::move(obs);
    has_prev_ = true;
    return map_(sim, inter_idx, prev_a_);
  }

  void finish(const Simulator& sim, int inter_idx) override {
    if (learn_ && has_prev_) record(sim, inter_idx, observe_(sim, inter_idx), true);
    has_prev_ = false;
  }

  long train_steps() const { return steps_; }
  double mean_td() const { return steps_ ? td_sum_ / static_cast<double>(steps_) : 0.0; }
  double last_entropy() const { return entropy_; }

 private:
  void record(const Simulator& sim, int inter_idx, Observation next, bool done) {
    const double r = intersection_reward(sim, inter_idx) * agent_.hyper_params().reward_scale;
    agent_.buffer.push({std::move(prev_obs_), prev_a_, r, std::move(next), done});
    if (auto l = agent_.maybe_train()) {
      ++steps_;
      td_sum_ += l->td;
      entropy_ = l->entropy;
    }
  }

  DqnAgent<Model>& agent_;
  ObserveFn observe_;
  ActionMap map_;
  double epsilon_;
  bool learn_;
  bool has_prev_ = false;
  Observation prev_obs_;
  int prev_a_ = 0;
  long steps_ = 0;
  double td_sum_ = 0.0;
  double entropy_ = 0.0;
};

// Demand seen in training episode e: the base scenario with every vehicle
// shifted by a seeded jitter.
struct ScenarioSource {
  Scenario base;
  std::uint64_t seed = 0;
  int jitter_s = 60;

  Scenario episode(int e) const {
    if (jitter_s == 0) return base;
    Scenario s = base;
    s.flows = jitter_flow(base.flows, seed * 1000003ULL + static_cast<std::uint64_t>(e) + 1, jitter_s);
    return s;
  }

  // Demand never drawn by episode(e) for e >= 0.
  Scenario validation() const { return episode(-1); }

  // Held-out demand for reporting; distinct from training and validation.
  Scenario evaluation() const {
    if (jitter_s == 0) return base;
    Scenario s = base;
    s.flows = jitter_flow(base.flows, seed * 1000003ULL + 0x9e3779b9ULL, jitter_s);
    return s;
  }
};

struct EpisodeRecord {
  std::string stage;
  int episode = 0;
  double epsilon = 0.0;
  Metrics metrics;
  double mean_reward = 0.0;
  double td_loss = 0.0;
  double entropy = 0.0;
  long train_steps = 0;
  std::optional<double> validation_travel_time;
};

struct AlphaRecord {
  int episode = 0;
  std::string intersection;
  int layer = 0;
  std::vector<double> alpha;
};

inline void write_episode_csv(std::ostream& os, const std::vector<EpisodeRecord>& rows) {
  os << "stage,episode,epsilon,avg_travel_time,avg_travel_time_all,throughput,mean_reward,td_loss,entropy,train_steps,"
        "validation_travel_time\n";
  auto opt = [](const std::optional<double>& v) { return v ? format_real(*v) : std::string(); };
  for (const auto& r : rows)
    os << r.stage << ',' << r.episode << ',' << format_real(r.epsilon) << ','
       << opt(r.metrics.avg_travel_time) << ',' << opt(r.metrics.avg_travel_time_all) << ','
       << format_real(r.metrics.throughput) << ',' << format_real(r.mean_reward) << ',' << format_real(r.td_loss)
       << ',' << format_real(r.entropy) << ',' << r.train_steps << ',' << opt(r.validation_travel_time) << '\n';
}

// One row per (episode, intersection, layer); alpha values in component order.
inline void write_alpha_csv(std::ostream& os, const std::vector<AlphaRecord>& rows) {
  os << "episode,intersection,layer,alpha\n";
  for (const auto& r : rows) {
    os << r.episode << ',' << r.intersection << ',' << r.layer << ',';
    for (std::size_t k = 0; k < r.alpha.size(); ++k) os << (k ? ";" : "") << format_real(r.alpha[k]);
    os << '\n';
  }
}

// Runs `episodes` learning episodes with one agent per signalized
// intersection, appending to `records`.
template <class Model>
void train_episodes(std::vector<DqnAgent<Model>>& agents, const ScenarioSource& source, const ObserveFn& observe,
                    const ActionMap& map, const std::string& stage, int first_episode, int episodes,
                    const std::function<double(int)>& epsilon, std::vector<EpisodeRecord>& records,
                    const std::function<void(int)>& after_episode = {}, int duration = 0) {
  for (int e = 0; e < episodes; ++e) {
    const int episode = first_episode + e;
    Simulator sim(source.episode(episode));
    if (agents.size() != sim.signalized().size()) throw Error("train: one agent per signalized intersection required");
    const double eps = epsilon(e);
    std::vector<std::unique_ptr<DqnController<Model>>> ctl;
    std::vector<Controller*> raw;
    for (auto& a : agents) {
      ctl.push_back(std::make_unique<DqnController<Model>>(a, observe, map, eps, true));
      raw.push_back(ctl.back().get());
    }
    if (duration <= 0) duration = agents.empty() ? 0 : agents.front().hyper_params().episode_seconds;
    const EpisodeResult res = run_episode(sim, raw, duration);
    EpisodeRecord rec;
    rec.stage = stage;
    rec.episode = episode;
    rec.epsilon = eps;
    rec.metrics = res.metrics;
    rec.mean_reward = res.mean_reward;
    double td = 0.0, ent = 0.0;
    for (const auto& c : ctl) {
      rec.train_steps += c->train_steps();
      td += c->mean_td();
      ent += c->last_entropy();
    }
    rec.td_loss = ctl.empty() ? 0.0 : td / static_cast<double>(ctl.size());
    rec.entropy = ctl.empty() ? 0.0 : ent / static_cast<double>(ctl.size());
    records.push_back(rec);
    if (after_episode) after_episode(episode);
  }
}

// Evaluates trained agents greedily without learning.
template <class Model>
EpisodeResult evaluate_agents(std::vector<DqnAgent<Model>>& agents, const Scenario& sc, int duration,
                              const ObserveFn& observe, const ActionMap& map = identity_action,
                              std::vector<DecisionRow>* log = nullptr) {
  Simulator sim(sc);
  std::vector<std::unique_ptr<DqnController<Model>>> ctl;
  std::vector<Controller*> raw;
  for (auto& a : agents) {
    ctl.push_back(std::make_unique<DqnController<Model>>(a, observe, map, 0.0, false));
    raw.push_back(ctl.back().get());
  }
  return run_episode(sim, raw, duration, log);
}

struct SearchResult {
  std::vector<DqnAgent<SuperGraph>> agents;
  std::vector<EpisodeRecord> episodes;
  std::vector<AlphaRecord> alpha_log;
};

inline ObserveFn supergraph_observer(const SuperGraphSpec& spec) {
  return [spec](const Simulator& sim, int inter_idx) { return observe(sim, inter_idx, spec); };
}

inline SearchResult run_search(const ScenarioSource& source, const HyperParams& hp, std::uint64_t seed,
                               const FeatureOptions& opt = {}) {
  hp.validate();
  Simulator probe(source.base);
  SearchResult out;
  const auto& sig = probe.signalized();
  std::vector<SuperGraphSpec> specs;
  for (std::size_t k = 0; k < sig.size(); ++k) {
    specs.push_back(default_spec(probe.network(), sig[k], opt));
    out.agents.emplace_back(SuperGraph(specs.back(), seed * 7919ULL + k), hp, seed * 104729ULL + k);
  }
  auto observe_fn = [specs, sig](const Simulator& sim, int inter_idx) {
    for (std::size_t k = 0; k < sig.size(); ++k)
      if (sig[k] == inter_idx) return observe(sim, inter_idx, specs[k]);
    throw Error("no super-graph for intersection " + std::to_string(inter_idx));
  };
  auto log_alpha = [&](int episode) {
    for (std::size_t k = 0; k < out.agents.size(); ++k)
      for (int l = 0; l < 3; ++l)
        out.alpha_log.push_back({episode, probe.network().intersections[sig[k]].id, l + 1, out.agents[k].online.alpha(l)});
  };
  train_episodes<SuperGraph>(out.agents, source, observe_fn, identity_action, "search", 0, hp.search_episodes,
                             [&](int e) { return hp.epsilon(e); }, out.episodes, log_alpha, hp.episode_seconds);
  return out;
}

struct RefineResult {
  std::vector<DqnAgent<SubGraph>> agents;
  std::vector<EpisodeRecord> episodes;
};

inline ObserveFn full_observer(const Simulator& probe, const FeatureOptions& opt = {}) {
  std::vector<int> sig = probe.signalized();
  std::vector<SuperGraphSpec> specs;
  for (int i : sig) specs.push_back(default_spec(probe.network(), i, opt));
  return [specs, sig](const Simulator& sim, int inter_idx) {
    for (std::size_t k = 0; k < sig.size(); ++k)
      if (sig[k] == inter_idx) return observe(sim, inter_idx, specs[k]);
    throw Error("no observation spec for intersection " + std::to_string(inter_idx));
  };
}

// Trains agents greedily (epsilon_end) for `episodes` refine-length episodes.
// With keep_best, the greedy policy is scored after every episode on a fixed
// validation demand and the lowest-travel-time weights are restored at the end.
template <class Model>
void refine_with_selection(std::vector<DqnAgent<Model>>& agents, const ScenarioSource& source, const ObserveFn& observe_fn,
                           const ActionMap& map, int first_episode, int episodes, std::vector<EpisodeRecord>& records) {
  if (agents.empty()) return;
  const HyperParams& hp = agents.front().hyper_params();
  const Scenario validation = source.validation();
  double best = std::numeric_limits<double>::infinity();
  std::vector<Model> best_online, best_target;
  auto score = [&](int) {
    if (!hp.keep_best) return;
    const auto m = evaluate_agents(agents, validation, hp.refine_episode_seconds, observe_fn, map).metrics;
    const double v = m.avg_travel_time_all.value_or(std::numeric_limits<double>::infinity());
    records.back().validation_travel_time = v;
    if (v < best) {
      best = v;
      best_online.clear();
      best_target.clear();
      for (const auto& a : agents) {
        best_online.push_back(a.online);
        best_target.push_back(a.target);
      }
    }
  };
  train_episodes<Model>(agents, source, observe_fn, map, "refine", first_episode, episodes,
                        [&](int) { return hp.epsilon_end; }, records, score, hp.refine_episode_seconds);
  if (best_online.empty()) return;
  for (std::size_t k = 0; k < agents.size(); ++k) {
    agents[k].online = std::move(best_online[k]);
    agents[k].target = std::move(best_target[k]);
  }
}

// Trains sub-graph agents on L1 only; `first_episode` offsets the demand seeds.
inline void refine_agents(std::vector<DqnAgent<SubGraph>>& agents, const ScenarioSource& source, int first_episode,
                          int episodes, std::vector<EpisodeRecord>& records, const FeatureOptions& opt = {}) {
  Simulator probe(source.base);
  refine_with_selection(agents, source, full_observer(probe, opt), identity_action, first_episode, episodes, records);
}

// Extracts each searched super-graph, keeps its replay buffer and trains the
// sub-graph's weights.
inline RefineResult run_refine(const ScenarioSource& source, SearchResult& search, const HyperParams& hp,
                               const std::array<int, 3>& keep = {2, 1, 1}, const FeatureOptions& opt = {}) {
  RefineResult out;
  for (auto& a : search.agents) {
    DqnAgent<SubGraph> sub(extract(a.online, keep), hp, a.rng());
    sub.buffer = std::move(a.buffer);
    out.agents.push_back(std::move(sub));
  }
  refine_agents(out.agents, source, hp.search_episodes, hp.refine_episodes, out.episodes, opt);
  return out;
}


// Same episode plan as search + refine, for models without architecture
// weights: exploring episodes with the epsilon schedule, then greedy
// refine-length episodes with checkpoint selection.
template <class Model>
void train_two_stage(std::vector<DqnAgent<Model>>& agents, const ScenarioSource& source, const ObserveFn& observe_fn,
                     const ActionMap& map, const HyperParams& hp, std::vector<EpisodeRecord>& records) {
  hp.validate();
  train_episodes<Model>(agents, source, observe_fn, map, "search", 0, hp.search_episodes,
                        [&](int e) { return hp.epsilon(e); }, records, {}, hp.episode_seconds);
  refine_with_selection(agents, source, observe_fn, map, hp.search_episodes, hp.refine_episodes, records);
}

// Random-path baseline: a path drawn uniformly from a fresh super-graph and
// trained with the full episode plan, without architecture search.
inline RefineResult run_tlrp(const ScenarioSource& source, const HyperParams& hp, std::uint64_t seed,
                             const std::array<int, 3>& keep = {2, 1, 1}, const FeatureOptions& opt = {}) {
  Simulator probe(source.base);
  RefineResult out;
  const auto& sig = probe.signalized();
  for (std::size_t k = 0; k < sig.size(); ++k) {
    const SuperGraph sg(default_spec(probe.network(), sig[k], opt), seed * 7919ULL + k);
    out.agents.emplace_back(random_path(sg, seed * 15485863ULL + k, keep), hp, seed * 104729ULL + k);
  }
  train_two_stage(out.agents, source, full_observer(probe, opt), identity_action, hp, out.episodes);
  return out;
}

struct EcoLightResult {
  std::vector<DqnAgent<Mlp>> agents;
  std::vector<EpisodeRecord> episodes;
};

inline EcoLightResult run_ecolight(const ScenarioSource& source, const HyperParams& hp, std::uint64_t seed) {
  Simulator probe(source.base);
  EcoLightResult out;
  for (std::size_t k = 0; k < probe.signalized().size(); ++k)
    out.agents.emplace_back(ecolight_model(seed * 7919ULL + k), hp, seed * 104729ULL + k);
  train_two_stage(out.agents, source, ecolight_observe, keep_or_switch, hp, out.episodes);
  return out;
}

}  // namespace tinylight
