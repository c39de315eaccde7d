#pragma once

#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "tinylight/simulator.hpp"

namespace tinylight {

// --- baselines -----------------------------------------------------------

inline int act_fixed_time(int t, int cycle_s, int phase_count) {
  if (cycle_s <= 0) throw ConfigError("fixed time: cycle must be positive");
  if (phase_count <= 0) throw ConfigError("fixed time: phase count must be positive");
  return (t / cycle_s) % phase_count;
}

inline long phase_pressure(const Simulator& sim, int inter_idx, int phase) {
  const Intersection& inter = sim.network().intersections.at(inter_idx);
  long s = 0;
  for (int link : inter.phases.at(phase).links) s += movement_pressure(sim, inter_idx, link);
  return s;
}

// Phase with the largest summed movement pressure; ties go to the lower index.
inline int act_max_pressure(const Simulator& sim, int inter_idx) {
  const Intersection& inter = sim.network().intersections.at(inter_idx);
  int best = 0;
  long best_p = phase_pressure(sim, inter_idx, 0);
  for (int p = 1; p < inter.phase_count(); ++p) {
    const long v = phase_pressure(sim, inter_idx, p);
    if (v > best_p) {
      best_p = v;
      best = p;
    }
  }
  return best;
}

struct SotlParams {
  double theta_green = 4.0;
  double theta_red = 6.0;
  int min_green_s = 10;
};

enum class SotlAction { kKeep, kAdvance };

struct SotlCounts {
  long green_vehicles = 0;
  long red_waiting = 0;
};

// Vehicles on incoming lanes served by `phase` and waiting vehicles on the
// remaining incoming lanes.
inline SotlCounts sotl_counts(const Simulator& sim, int inter_idx, int phase) {
  const Intersection& inter = sim.network().intersections.at(inter_idx);
  SotlCounts c;
  for (int lane : inter.in_lanes) {
    bool green = false;
    for (int link : inter.phases.at(phase).links)
      if (inter.links[link].in_lane == lane) green = true;
    if (green) {
      c.green_vehicles += sim.lane_count(lane);
    } else {
      for (int id : sim.lane_vehicles(lane)) c.red_waiting += sim.vehicle(id).waiting ? 1 : 0;
    }
  }
  return c;
}

inline SotlAction act_sotl(const SotlCounts& c, int green_elapsed_s, const SotlParams& p = {}) {
  if (p.theta_green < 0 || p.theta_red < 0) throw ConfigError("sotl: thresholds must be non-negative");
  const bool advance = static_cast<double>(c.red_waiting) > p.theta_red &&
                       static_cast<double>(c.green_vehicles) < p.theta_green && green_elapsed_s >= p.min_green_s;
  return advance ? SotlAction::kAdvance : SotlAction::kKeep;
}

inline SotlAction act_sotl(const Simulator& sim, int inter_idx, int green_elapsed_s, const SotlParams& p = {}) {
  return act_sotl(sotl_counts(sim, inter_idx, sim.signal(inter_idx).current_phase), green_elapsed_s, p);
}

// --- controllers and the episode runner ----------------------------------

// Chooses the requested phase of one intersection every interval() seconds.
class Controller {
 public:
  virtual ~Controller() = default;
  virtual std::string name() const = 0;
  virtual int interval() const { return 1; }
  virtual int decide(const Simulator& sim, int inter_idx) = 0;
  // Called once after the last simulated second.
  virtual void finish(const Simulator&, int) {}
};

class FixedTimeController : public Controller {
 public:
  explicit FixedTimeController(int cycle_s = 30) : cycle_(cycle_s) {}
  std::string name() const override { return "FixedTime"; }
  int decide(const Simulator& sim, int inter_idx) override {
    return act_fixed_time(sim.time(), cycle_, sim.network().intersections[inter_idx].phase_count());
  }

 private:
  int cycle_;
};

class MaxPressureController : public Controller {
 public:
  explicit MaxPressureController(int interval_s = 10) : interval_(interval_s) {}
  std::string name() const override { return "MaxPressure"; }
  int interval() const override { return interval_; }
  int decide(const Simulator& sim, int inter_idx) override { return act_max_pressure(sim, inter_idx); }

 private:
  int interval_;
};

class SotlController : public Controller {
 public:
  explicit SotlController(SotlParams p = {}) : p_(p) {}
  std::string name() const override { return "SOTL"; }
  int decide(const Simulator& sim, int inter_idx) override {
    const SignalState& s = sim.signal(inter_idx);
    if (s.in_yellow()) return requested_;
    if (s.current_phase != phase_) {
      phase_ = s.current_phase;
      since_ = sim.time();
    }
    requested_ = phase_;
    if (act_sotl(sim, inter_idx, sim.time() - since_, p_) == SotlAction::kAdvance)
      requested_ = (phase_ + 1) % sim.network().intersections[inter_idx].phase_count();
    return requested_;
  }

 private:
  SotlParams p_;
  int phase_ = 0;
  int since_ = 0;
  int requested_ = 0;
};

struct DecisionRow {
  int t = 0;
  std::string intersection;
  int phase = 0;
  double reward = 0.0;
  long cumulative_throughput = 0;
};

inline void write_decision_csv(std::ostream& os, const std::vector<DecisionRow>& rows) {
  os << "t,intersection,phase,reward,cumulative_throughput\n";
  for (const auto& r : rows)
    os << r.t << ',' << r.intersection << ',' << r.phase << ',' << format_real(r.reward) << ','
       << r.cumulative_throughput << '\n';
}

struct EpisodeResult {
  Metrics metrics;
  long finished = 0;
  long released = 0;
  double mean_reward = 0.0;  // over decisions of all intersections
};

// Steps `sim` for `duration` seconds; controllers[k] drives the k-th
// signalized intersection.
inline EpisodeResult run_episode(Simulator& sim, const std::vector<Controller*>& controllers, int duration,
                                 std::vector<DecisionRow>* log = nullptr) {
  const auto& sig = sim.signalized();
  if (controllers.size() != sig.size())
    throw Error("run_episode: " + std::to_string(controllers.size()) + " controllers for " +
                std::to_string(sig.size()) + " signalized intersections");
  std::vector<int> cmd(sig.size());
  for (std::size_t k = 0; k < sig.size(); ++k) cmd[k] = sim.signal(sig[k]).current_phase;
  double reward_sum = 0.0;
  long decisions = 0;
  for (int t = 0; t < duration; ++t) {
    for (std::size_t k = 0; k < sig.size(); ++k) {
      Controller* c = controllers[k];
      if (sim.time() % c->interval() != 0) continue;
      cmd[k] = c->decide(sim, sig[k]);
      sim.mark_decision(sig[k]);
      const double r = intersection_reward(sim, sig[k]);
      reward_sum += r;
      ++decisions;
      if (log) log->push_back({sim.time(), sim.network().intersections[sig[k]].id, cmd[k], r, sim.finished_count()});
    }
    sim.step(cmd);
  }
  for (std::size_t k = 0; k < sig.size(); ++k) controllers[k]->finish(sim, sig[k]);
  EpisodeResult res;
  res.metrics = sim.metrics();
  res.finished = sim.finished_count();
  res.released = sim.released();
  res.mean_reward = decisions ? reward_sum / static_cast<double>(decisions) : 0.0;
  return res;
}

}  // namespace tinylight
