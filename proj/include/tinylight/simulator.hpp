#pragma once

#include <algorithm>
#include <climits>
#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tinylight/scenario.hpp"

namespace tinylight {

inline constexpr int kYellowSeconds = 3;
inline constexpr int kServiceHeadwaySeconds = 2;  // one vehicle per green lane link per 2 s

enum class VehicleStatus { kPending, kAtSource, kOnLane, kFinished };

struct Vehicle {
  int flow = 0;
  int spawn_time = 0;
  VehicleStatus status = VehicleStatus::kPending;
  int route_pos = 0;  // index into the flow's route
  int lane = -1;
  int link = -1;       // planned lane link (local index) at the node ahead, -1 on the last road
  int remaining = 0;   // transit seconds left; 0 means queued at the stop line
  bool waiting = false;
  int waiting_since = 0;
  int arrive_time = -1;

  bool moving() const { return status == VehicleStatus::kOnLane && !waiting; }
};

struct SignalState {
  int current_phase = 0;
  int pending_phase = -1;
  int yellow_remaining = 0;
  bool changed_since_decision = false;

  bool in_yellow() const { return yellow_remaining > 0; }
};

struct Metrics {
  std::optional<double> avg_travel_time;  // s/veh, unset when nothing finished
  double throughput = 0.0;                // veh/min
  // Over every vehicle whose spawn time has passed; unfinished trips are
  // counted up to the current time.
  std::optional<double> avg_travel_time_all;
};

// Deterministic 1-second point-queue simulator. Each lane is a FIFO: vehicles
// traverse it in free-flow time, then queue at the stop line and leave
// through their planned lane link when it is green, its headway has elapsed
// and the downstream lane has room.
class Simulator {
 public:
  explicit Simulator(Scenario scenario) : sc_(std::move(scenario)) {
    validate(sc_);
    const RoadNetwork& net = sc_.network;
    lanes_.resize(net.lanes.size());
    source_.resize(net.roads.size());
    signal_.resize(net.intersections.size());
    signalized_ = net.signalized();
    last_discharge_.resize(net.intersections.size());
    for (std::size_t i = 0; i < net.intersections.size(); ++i)
      last_discharge_[i].assign(net.intersections[i].links.size(), INT_MIN / 2);
    lane_members_.resize(net.lanes.size());
    for (int i : signalized_) {
      for (int l : net.intersections[i].in_lanes) lane_members_[l].push_back(i);
      for (int l : net.intersections[i].out_lanes) lane_members_[l].push_back(i);
    }
    interval_.resize(net.intersections.size());

    // viable_[f][k]: lanes of route road k from which the rest of the route is reachable.
    viable_.resize(sc_.flows.size());
    for (std::size_t f = 0; f < sc_.flows.size(); ++f) {
      const auto& route = sc_.flows[f].route;
      auto& v = viable_[f];
      v.resize(route.size());
      const Road& last = net.roads[route.back()];
      for (int k = 0; k < last.lane_count; ++k) v.back().push_back(last.first_lane + k);
      for (int k = static_cast<int>(route.size()) - 2; k >= 0; --k) {
        const Road& road = net.roads[route[k]];
        const Intersection& node = net.intersections[road.to];
        for (int l = 0; l < road.lane_count; ++l) {
          const int lane = road.first_lane + l;
          for (const auto& link : node.links)
            if (link.in_lane == lane &&
                std::find(v[k + 1].begin(), v[k + 1].end(), link.out_lane) != v[k + 1].end()) {
              v[k].push_back(lane);
              break;
            }
        }
        if (v[k].empty())
          throw ScenarioError("flow " + std::to_string(f) + ": no lane-level path along the route");
      }
    }

    for (std::size_t f = 0; f < sc_.flows.size(); ++f)
      for (int t : sc_.flows[f].spawn_times) {
        Vehicle v;
        v.flow = static_cast<int>(f);
        v.spawn_time = t;
        vehicles_.push_back(v);
      }
    std::stable_sort(vehicles_.begin(), vehicles_.end(),
                     [](const Vehicle& a, const Vehicle& b) { return a.spawn_time < b.spawn_time; });
  }

  const Scenario& scenario() const { return sc_; }
  const RoadNetwork& network() const { return sc_.network; }
  int time() const { return t_; }
  const std::vector<int>& signalized() const { return signalized_; }
  const SignalState& signal(int intersection) const { return signal_[intersection]; }
  const std::deque<int>& lane_vehicles(int lane) const { return lanes_[lane]; }
  const Vehicle& vehicle(int id) const { return vehicles_[id]; }
  const std::vector<Vehicle>& vehicles() const { return vehicles_; }
  int lane_count(int lane) const { return static_cast<int>(lanes_[lane].size()); }

  int intersection_vehicle_count(int intersection) const {
    const Intersection& inter = sc_.network.intersections[intersection];
    int n = 0;
    for (int l : inter.in_lanes) n += lane_count(l);
    for (int l : inter.out_lanes) n += lane_count(l);
    return n;
  }

  // Per-decision-interval counters used by the "since last action" features.
  struct IntervalCounters {
    int vehicles_at_decision = 0;
    int exits = 0;
    long exit_travel_time = 0;
  };
  const IntervalCounters& interval(int intersection) const { return interval_[intersection]; }

  void mark_decision(int intersection) {
    interval_[intersection].vehicles_at_decision = intersection_vehicle_count(intersection);
    interval_[intersection].exits = 0;
    interval_[intersection].exit_travel_time = 0;
    signal_[intersection].changed_since_decision = false;
  }

  long released() const { return released_; }
  long finished_count() const { return finished_; }
  long sum_travel_time() const { return sum_travel_time_; }
  long at_source() const {
    long n = 0;
    for (const auto& q : source_) n += static_cast<long>(q.size());
    return n;
  }
  long on_lanes() const {
    long n = 0;
    for (const auto& q : lanes_) n += static_cast<long>(q.size());
    return n;
  }
  bool done() const { return finished_ == static_cast<long>(vehicles_.size()); }

  Metrics metrics() const {
    Metrics m;
    if (finished_ > 0) m.avg_travel_time = static_cast<double>(sum_travel_time_) / static_cast<double>(finished_);
    m.throughput = t_ > 0 ? static_cast<double>(finished_) / (static_cast<double>(t_) / 60.0) : 0.0;
    long n = 0;
    double total = 0.0;
    for (const Vehicle& v : vehicles_) {
      if (v.status == VehicleStatus::kPending) continue;
      ++n;
      total += v.status == VehicleStatus::kFinished ? v.arrive_time - v.spawn_time : t_ - v.spawn_time;
    }
    if (n > 0) m.avg_travel_time_all = total / static_cast<double>(n);
    return m;
  }

  bool link_green(int intersection, int link) const {
    const Intersection& inter = sc_.network.intersections[intersection];
    if (!inter.signalized) return true;
    const SignalState& s = signal_[intersection];
    if (s.in_yellow()) return false;
    const auto& links = inter.phases[s.current_phase].links;
    return std::find(links.begin(), links.end(), link) != links.end();
  }

  // Advances one second. `commands[k]` is the requested phase of the k-th
  // signalized intersection (see signalized()).
  void step(std::span<const int> commands) {
    if (commands.size() != signalized_.size())
      throw Error("step: expected " + std::to_string(signalized_.size()) + " commands, got " +
                  std::to_string(commands.size()));
    for (std::size_t k = 0; k < commands.size(); ++k) {
      const int i = signalized_[k];
      if (commands[k] < 0 || commands[k] >= sc_.network.intersections[i].phase_count())
        throw Error("step: invalid phase id " + std::to_string(commands[k]) + " for intersection " +
                    sc_.network.intersections[i].id);
    }
    for (std::size_t k = 0; k < commands.size(); ++k) {
      SignalState& s = signal_[signalized_[k]];
      // Commands during yellow are ignored; the pending phase still takes effect.
      if (!s.in_yellow() && commands[k] != s.current_phase) {
        s.pending_phase = commands[k];
        s.yellow_remaining = kYellowSeconds;
        s.changed_since_decision = true;
      }
    }
    advance_transit();
    discharge();
    spawn();
    for (auto& s : signal_) {
      if (s.yellow_remaining > 0 && --s.yellow_remaining == 0) {
        s.current_phase = s.pending_phase;
        s.pending_phase = -1;
      }
    }
    ++t_;
  }

  void step_uniform(int phase) {
    std::vector<int> cmd(signalized_.size(), phase);
    step(cmd);
  }

 private:
  void record_exit(int vehicle, int from_lane, int to_lane) {
    for (int i : lane_members_[from_lane]) {
      if (to_lane >= 0 &&
          std::find(lane_members_[to_lane].begin(), lane_members_[to_lane].end(), i) != lane_members_[to_lane].end())
        continue;
      interval_[i].exits += 1;
      interval_[i].exit_travel_time += t_ - vehicles_[vehicle].spawn_time;
    }
  }

  void advance_transit() {
    const RoadNetwork& net = sc_.network;
    for (std::size_t l = 0; l < lanes_.size(); ++l) {
      auto& q = lanes_[l];
      bool any_finished = false;
      for (int id : q) {
        Vehicle& v = vehicles_[id];
        if (v.remaining == 0) continue;
        if (--v.remaining > 0) continue;
        const auto& route = sc_.flows[v.flow].route;
        if (v.route_pos + 1 == static_cast<int>(route.size())) {
          v.status = VehicleStatus::kFinished;
          v.arrive_time = t_;
          ++finished_;
          sum_travel_time_ += t_ - v.spawn_time;
          record_exit(id, static_cast<int>(l), -1);
          any_finished = true;
        } else {
          v.waiting = true;
          v.waiting_since = t_;
        }
      }
      if (any_finished)
        q.erase(std::remove_if(q.begin(), q.end(),
                               [&](int id) { return vehicles_[id].status == VehicleStatus::kFinished; }),
                q.end());
    }
    (void)net;
  }

  void discharge() {
    const RoadNetwork& net = sc_.network;
    for (std::size_t i = 0; i < net.intersections.size(); ++i) {
      const Intersection& inter = net.intersections[i];
      if (inter.links.empty()) continue;
      if (inter.signalized && signal_[i].in_yellow()) continue;
      for (int lane : inter.in_lanes) {
        auto& q = lanes_[lane];
        if (q.empty()) continue;
        const int id = q.front();
        Vehicle& v = vehicles_[id];
        if (v.remaining > 0 || v.link < 0) continue;
        if (!link_green(static_cast<int>(i), v.link)) continue;
        if (t_ - last_discharge_[i][v.link] < kServiceHeadwaySeconds) continue;
        const int out = inter.links[v.link].out_lane;
        if (lane_count(out) >= net.lanes[out].capacity) continue;
        last_discharge_[i][v.link] = t_;
        q.pop_front();
        record_exit(id, lane, out);
        v.route_pos += 1;
        enter_lane(id, out);
      }
    }
  }

  void spawn() {
    const RoadNetwork& net = sc_.network;
    while (next_spawn_ < vehicles_.size() && vehicles_[next_spawn_].spawn_time <= t_) {
      Vehicle& v = vehicles_[next_spawn_];
      v.status = VehicleStatus::kAtSource;
      source_[sc_.flows[v.flow].route.front()].push_back(static_cast<int>(next_spawn_));
      ++released_;
      ++next_spawn_;
    }
    for (auto& q : source_) {
      while (!q.empty()) {
        const int id = q.front();
        const auto& options = viable_[vehicles_[id].flow][0];
        int best = -1;
        for (int lane : options)
          if (lane_count(lane) < net.lanes[lane].capacity && (best < 0 || lane_count(lane) < lane_count(best)))
            best = lane;
        if (best < 0) break;
        q.pop_front();
        enter_lane(id, best);
      }
    }
  }

  void enter_lane(int id, int lane) {
    const RoadNetwork& net = sc_.network;
    Vehicle& v = vehicles_[id];
    v.status = VehicleStatus::kOnLane;
    v.lane = lane;
    v.remaining = net.lanes[lane].free_flow_s;
    v.waiting = false;
    v.link = -1;
    lanes_[lane].push_back(id);
    const auto& route = sc_.flows[v.flow].route;
    if (v.route_pos + 1 < static_cast<int>(route.size())) {
      const Intersection& node = net.intersections[net.roads[route[v.route_pos]].to];
      const auto& next_viable = viable_[v.flow][v.route_pos + 1];
      for (std::size_t li = 0; li < node.links.size(); ++li) {
        const LaneLink& link = node.links[li];
        if (link.in_lane != lane) continue;
        if (std::find(next_viable.begin(), next_viable.end(), link.out_lane) == next_viable.end()) continue;
        if (v.link < 0 || lane_count(link.out_lane) < lane_count(node.links[v.link].out_lane))
          v.link = static_cast<int>(li);
      }
    }
  }

  Scenario sc_;
  int t_ = 0;
  std::vector<Vehicle> vehicles_;
  std::size_t next_spawn_ = 0;
  std::vector<std::deque<int>> lanes_;
  std::vector<std::deque<int>> source_;  // per first-road virtual queue
  std::vector<SignalState> signal_;
  std::vector<int> signalized_;
  std::vector<std::vector<int>> last_discharge_;
  std::vector<std::vector<int>> lane_members_;
  std::vector<IntervalCounters> interval_;
  std::vector<std::vector<std::vector<int>>> viable_;
  long released_ = 0;
  long finished_ = 0;
  long sum_travel_time_ = 0;
};

// Vehicles on the incoming lane minus vehicles on the outgoing lane.
inline int movement_pressure(const Simulator& sim, int intersection, int link) {
  const LaneLink& l = sim.network().intersections[intersection].links.at(link);
  return sim.lane_count(l.in_lane) - sim.lane_count(l.out_lane);
}

// Negative absolute intersection pressure.
inline double intersection_reward(const Simulator& sim, int intersection) {
  const Intersection& inter = sim.network().intersections[intersection];
  long total = 0;
  for (std::size_t l = 0; l < inter.links.size(); ++l) total += movement_pressure(sim, intersection, static_cast<int>(l));
  return -static_cast<double>(total < 0 ? -total : total);
}

}  // namespace tinylight
