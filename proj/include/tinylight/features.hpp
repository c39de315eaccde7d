#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <ostream>
#include <string>
#include <vector>

#include "tinylight/simulator.hpp"

namespace tinylight {

inline constexpr int kFeatureCount = 37;

enum class FeatureScale { kLane, kInLane, kOutLane, kInRoad, kPhase, kIntersection, kLaneLink };

// What a feature measures; drives input normalization in the super-graph.
enum class FeatureUnit { kCount, kTime, kIndicator };

struct FeatureOptions {
  int segments = 3;  // K for the *_seg_by_k features
  int grid = 8;      // side of the occupancy image
};

struct FeatureSpec {
  int id = 0;  // 1-based, F1..F37
  const char* name = "";
  FeatureScale scale = FeatureScale::kLane;
  FeatureUnit unit = FeatureUnit::kCount;
  bool segmented = false;
};

inline const std::array<FeatureSpec, kFeatureCount>& feature_specs() {
  using S = FeatureScale;
  using U = FeatureUnit;
  static const std::array<FeatureSpec, kFeatureCount> specs = {{
      {1, "lane_2_num_vehicle", S::kLane, U::kCount},
      {2, "lane_2_num_waiting_vehicle", S::kLane, U::kCount},
      {3, "lane_2_sum_waiting_time", S::kLane, U::kTime},
      {4, "lane_2_delay", S::kLane, U::kTime},
      {5, "lane_2_num_vehicle_seg_by_k", S::kLane, U::kCount, true},
      {6, "inlane_2_num_vehicle", S::kInLane, U::kCount},
      {7, "inlane_2_num_waiting_vehicle", S::kInLane, U::kCount},
      {8, "inlane_2_sum_waiting_time", S::kInLane, U::kTime},
      {9, "inlane_2_delay", S::kInLane, U::kTime},
      {10, "inlane_2_num_vehicle_seg_by_k", S::kInLane, U::kCount, true},
      {11, "inlane_2_pressure", S::kInLane, U::kCount},
      {12, "outlane_2_num_vehicle", S::kOutLane, U::kCount},
      {13, "outlane_2_num_waiting_vehicle", S::kOutLane, U::kCount},
      {14, "outlane_2_sum_waiting_time", S::kOutLane, U::kTime},
      {15, "outlane_2_delay", S::kOutLane, U::kTime},
      {16, "outlane_2_num_vehicle_seg_by_k", S::kOutLane, U::kCount, true},
      {17, "inroad_2_num_vehicle", S::kInRoad, U::kCount},
      {18, "inroad_2_num_waiting_vehicle", S::kInRoad, U::kCount},
      {19, "inroad_2_sum_waiting_time", S::kInRoad, U::kTime},
      {20, "inroad_2_delay", S::kInRoad, U::kTime},
      {21, "phase_2_num_vehicle", S::kPhase, U::kCount},
      {22, "phase_2_num_waiting_vehicle", S::kPhase, U::kCount},
      {23, "phase_2_sum_waiting_time", S::kPhase, U::kTime},
      {24, "phase_2_delay", S::kPhase, U::kTime},
      {25, "phase_2_pressure", S::kPhase, U::kCount},
      {26, "inter_2_num_vehicle", S::kIntersection, U::kCount},
      {27, "inter_2_num_waiting_vehicle", S::kIntersection, U::kCount},
      {28, "inter_2_sum_waiting_time", S::kIntersection, U::kTime},
      {29, "inter_2_delay", S::kIntersection, U::kTime},
      {30, "inter_2_pressure", S::kIntersection, U::kCount},
      {31, "inter_2_vehicle_position_image", S::kIntersection, U::kCount},
      {32, "inter_2_current_phase", S::kIntersection, U::kIndicator},
      {33, "inter_2_phase_has_changed", S::kIntersection, U::kIndicator},
      {34, "inter_2_num_passed_vehicle_since_last_action", S::kIntersection, U::kCount},
      {35, "inter_2_sum_travel_time_since_last_action", S::kIntersection, U::kTime},
      {36, "lanelink_2_pressure", S::kLaneLink, U::kCount},
      {37, "lanelink_2_num_vehicle", S::kLaneLink, U::kCount},
  }};
  return specs;
}

inline const FeatureSpec& feature_spec(int id) {
  if (id < 1 || id > kFeatureCount) throw Error("unknown feature id F" + std::to_string(id));
  return feature_specs()[id - 1];
}

// Dimension of feature `id` on `inter`.
inline int feature_dim(int id, const Intersection& inter, const FeatureOptions& opt = {}) {
  const FeatureSpec& spec = feature_spec(id);
  const int lanes_in = static_cast<int>(inter.in_lanes.size());
  const int lanes_out = static_cast<int>(inter.out_lanes.size());
  if (id == 31) return opt.grid * opt.grid;
  if (id == 32) return inter.phase_count();
  int base = 0;
  switch (spec.scale) {
    case FeatureScale::kLane: base = lanes_in + lanes_out; break;
    case FeatureScale::kInLane: base = lanes_in; break;
    case FeatureScale::kOutLane: base = lanes_out; break;
    case FeatureScale::kInRoad: base = static_cast<int>(inter.in_roads.size()); break;
    case FeatureScale::kPhase: base = inter.phase_count(); break;
    case FeatureScale::kIntersection: base = 1; break;
    case FeatureScale::kLaneLink: base = static_cast<int>(inter.links.size()); break;
  }
  return spec.segmented ? base * opt.segments : base;
}

struct CatalogEntry {
  FeatureSpec spec;
  int dim = 0;
};

// The 37 candidate features with their dimensions on one intersection.
inline std::vector<CatalogEntry> catalog(const Intersection& inter, const FeatureOptions& opt = {}) {
  std::vector<CatalogEntry> out;
  out.reserve(kFeatureCount);
  for (const auto& spec : feature_specs()) out.push_back({spec, feature_dim(spec.id, inter, opt)});
  return out;
}

struct FeatureVector {
  int feature_id = 0;
  int intersection = 0;
  int t = 0;
  std::vector<double> values;
};

namespace detail {

inline std::vector<int> all_lanes(const Intersection& inter) {
  std::vector<int> lanes = inter.in_lanes;
  lanes.insert(lanes.end(), inter.out_lanes.begin(), inter.out_lanes.end());
  return lanes;
}

inline double lane_vehicles(const Simulator& sim, int lane) { return sim.lane_count(lane); }

inline double lane_waiting(const Simulator& sim, int lane) {
  double n = 0;
  for (int id : sim.lane_vehicles(lane)) n += sim.vehicle(id).waiting ? 1 : 0;
  return n;
}

inline double vehicle_wait(const Simulator& sim, int id) {
  const Vehicle& v = sim.vehicle(id);
  return v.waiting ? static_cast<double>(sim.time() - v.waiting_since) : 0.0;
}

inline double lane_sum_wait(const Simulator& sim, int lane) {
  double s = 0;
  for (int id : sim.lane_vehicles(lane)) s += vehicle_wait(sim, id);
  return s;
}

// Excess traversal time over free flow, estimated from the standing queue.
inline double lane_delay(const Simulator& sim, int lane) {
  return lane_waiting(sim, lane) * kServiceHeadwaySeconds;
}

// Distance of each vehicle from the upstream end of its lane.
inline double vehicle_offset(const Simulator& sim, int lane, std::size_t queue_pos, int id) {
  const Lane& l = sim.network().lanes[lane];
  const Vehicle& v = sim.vehicle(id);
  if (v.remaining > 0)
    return (1.0 - static_cast<double>(v.remaining) / static_cast<double>(l.free_flow_s)) * l.length;
  return std::max(0.0, l.length - (static_cast<double>(queue_pos) + 0.5) * kVehicleSpacing);
}

inline void lane_segments(const Simulator& sim, int lane, int k, std::vector<double>& out) {
  const Lane& l = sim.network().lanes[lane];
  const std::size_t base = out.size();
  out.resize(base + k, 0.0);
  const auto& q = sim.lane_vehicles(lane);
  std::size_t queue_pos = 0;
  for (int id : q) {
    const Vehicle& v = sim.vehicle(id);
    const double off = vehicle_offset(sim, lane, queue_pos, id);
    if (v.remaining == 0) ++queue_pos;
    int seg = static_cast<int>(std::floor(off / l.length * k));
    seg = std::clamp(seg, 0, k - 1);
    out[base + seg] += 1.0;
  }
}

inline double link_vehicles(const Simulator& sim, int inter_idx, int link, bool waiting_only, bool sum_wait) {
  const LaneLink& l = sim.network().intersections[inter_idx].links[link];
  double s = 0;
  for (int id : sim.lane_vehicles(l.in_lane)) {
    const Vehicle& v = sim.vehicle(id);
    if (v.link != link) continue;
    if (waiting_only && !v.waiting) continue;
    s += sum_wait ? vehicle_wait(sim, id) : 1.0;
  }
  return s;
}

}  // namespace detail

// Computes one candidate feature for one intersection from the current
// simulator state. Pressure features keep the outgoing-minus-incoming sign.
inline FeatureVector extract(int feature_id, const Simulator& sim, int inter_idx, const FeatureOptions& opt = {}) {
  const FeatureSpec& spec = feature_spec(feature_id);
  const RoadNetwork& net = sim.network();
  const Intersection& inter = net.intersections.at(inter_idx);
  FeatureVector fv;
  fv.feature_id = feature_id;
  fv.intersection = inter_idx;
  fv.t = sim.time();
  auto& out = fv.values;

  auto lane_set = [&]() -> std::vector<int> {
    switch (spec.scale) {
      case FeatureScale::kInLane: return inter.in_lanes;
      case FeatureScale::kOutLane: return inter.out_lanes;
      default: return detail::all_lanes(inter);
    }
  };
  auto road_lanes = [&](int road) {
    std::vector<int> lanes;
    for (int k = 0; k < net.roads[road].lane_count; ++k) lanes.push_back(net.roads[road].first_lane + k);
    return lanes;
  };
  auto link_pressure_literal = [&](int link) {
    const LaneLink& l = inter.links[link];
    return detail::lane_vehicles(sim, l.out_lane) - detail::lane_vehicles(sim, l.in_lane);
  };
  auto phase_in_lanes = [&](int p) {
    std::vector<int> lanes;
    for (int link : inter.phases[p].links) {
      const int lane = inter.links[link].in_lane;
      if (std::find(lanes.begin(), lanes.end(), lane) == lanes.end()) lanes.push_back(lane);
    }
    return lanes;
  };
  auto mean_delay = [&](const std::vector<int>& lanes) {
    if (lanes.empty()) return 0.0;
    double s = 0;
    for (int l : lanes) s += detail::lane_delay(sim, l);
    return s / static_cast<double>(lanes.size());
  };

  switch (feature_id) {
    case 1: case 6: case 12:
      for (int l : lane_set()) out.push_back(detail::lane_vehicles(sim, l));
      break;
    case 2: case 7: case 13:
      for (int l : lane_set()) out.push_back(detail::lane_waiting(sim, l));
      break;
    case 3: case 8: case 14:
      for (int l : lane_set()) out.push_back(detail::lane_sum_wait(sim, l));
      break;
    case 4: case 9: case 15:
      for (int l : lane_set()) out.push_back(detail::lane_delay(sim, l));
      break;
    case 5: case 10: case 16:
      for (int l : lane_set()) detail::lane_segments(sim, l, opt.segments, out);
      break;
    case 11:
      for (int lane : inter.in_lanes) {
        double s = 0;
        for (std::size_t k = 0; k < inter.links.size(); ++k)
          if (inter.links[k].in_lane == lane) s += link_pressure_literal(static_cast<int>(k));
        out.push_back(s);
      }
      break;
    case 17: case 18: case 19: case 20:
      for (int road : inter.in_roads) {
        const auto lanes = road_lanes(road);
        double s = 0;
        for (int l : lanes) {
          if (feature_id == 17) s += detail::lane_vehicles(sim, l);
          if (feature_id == 18) s += detail::lane_waiting(sim, l);
          if (feature_id == 19) s += detail::lane_sum_wait(sim, l);
        }
        out.push_back(feature_id == 20 ? mean_delay(lanes) : s);
      }
      break;
    case 21: case 22: case 23:
      for (int p = 0; p < inter.phase_count(); ++p) {
        double s = 0;
        for (int link : inter.phases[p].links)
          s += detail::link_vehicles(sim, inter_idx, link, feature_id != 21, feature_id == 23);
        out.push_back(s);
      }
      break;
    case 24:
      for (int p = 0; p < inter.phase_count(); ++p) out.push_back(mean_delay(phase_in_lanes(p)));
      break;
    case 25:
      for (int p = 0; p < inter.phase_count(); ++p) {
        double s = 0;
        for (int link : inter.phases[p].links) s += link_pressure_literal(link);
        out.push_back(s);
      }
      break;
    case 26: case 27: case 28: {
      double s = 0;
      for (int l : detail::all_lanes(inter)) {
        if (feature_id == 26) s += detail::lane_vehicles(sim, l);
        if (feature_id == 27) s += detail::lane_waiting(sim, l);
        if (feature_id == 28) s += detail::lane_sum_wait(sim, l);
      }
      out.push_back(s);
      break;
    }
    case 29:
      out.push_back(mean_delay(detail::all_lanes(inter)));
      break;
    case 30: {
      double s = 0;
      for (std::size_t k = 0; k < inter.links.size(); ++k) s += link_pressure_literal(static_cast<int>(k));
      out.push_back(s);
      break;
    }
    case 31: {
      const int g = opt.grid;
      out.assign(static_cast<std::size_t>(g) * g, 0.0);
      double half = 1.0;
      for (int r : inter.in_roads) half = std::max(half, net.roads[r].length);
      for (int r : inter.out_roads) half = std::max(half, net.roads[r].length);
      for (int lane : detail::all_lanes(inter)) {
        const Lane& l = net.lanes[lane];
        const Road& road = net.roads[l.road];
        const Intersection& a = net.intersections[road.from];
        const Intersection& b = net.intersections[road.to];
        std::size_t queue_pos = 0;
        for (int id : sim.lane_vehicles(lane)) {
          const double off = detail::vehicle_offset(sim, lane, queue_pos, id);
          if (sim.vehicle(id).remaining == 0) ++queue_pos;
          const double frac = off / l.length;
          const double x = a.x + (b.x - a.x) * frac;
          const double y = a.y + (b.y - a.y) * frac;
          int col = static_cast<int>(std::floor((x - (inter.x - half)) / (2 * half) * g));
          int row = static_cast<int>(std::floor(((inter.y + half) - y) / (2 * half) * g));
          col = std::clamp(col, 0, g - 1);
          row = std::clamp(row, 0, g - 1);
          out[static_cast<std::size_t>(row) * g + col] += 1.0;
        }
      }
      break;
    }
    case 32:
      out.assign(inter.phase_count(), 0.0);
      out[sim.signal(inter_idx).current_phase] = 1.0;
      break;
    case 33:
      out.push_back(sim.signal(inter_idx).changed_since_decision ? 1.0 : 0.0);
      break;
    case 34:
      out.push_back(static_cast<double>(sim.intersection_vehicle_count(inter_idx) -
                                        sim.interval(inter_idx).vehicles_at_decision));
      break;
    case 35:
      out.push_back(static_cast<double>(sim.interval(inter_idx).exit_travel_time));
      break;
    case 36:
      for (std::size_t k = 0; k < inter.links.size(); ++k) out.push_back(link_pressure_literal(static_cast<int>(k)));
      break;
    case 37:
      for (std::size_t k = 0; k < inter.links.size(); ++k)
        out.push_back(detail::link_vehicles(sim, inter_idx, static_cast<int>(k), false, false));
      break;
    default:
      throw Error("unknown feature id F" + std::to_string(feature_id));
  }
  return fv;
}

inline std::vector<FeatureVector> extract_all(const Simulator& sim, int inter_idx, const FeatureOptions& opt = {}) {
  std::vector<FeatureVector> out;
  out.reserve(kFeatureCount);
  for (int id = 1; id <= kFeatureCount; ++id) out.push_back(extract(id, sim, inter_idx, opt));
  return out;
}

// CSV rows (t, intersection, feature_id, index, value); no header.
inline void write_feature_dump(std::ostream& os, const Simulator& sim, const std::vector<FeatureVector>& features) {
  for (const auto& fv : features)
    for (std::size_t k = 0; k < fv.values.size(); ++k)
      os << fv.t << ',' << sim.network().intersections[fv.intersection].id << ",F" << fv.feature_id << ',' << k
         << ',' << format_real(fv.values[k]) << '\n';
}

// Multiplier that brings a feature to roughly unit scale: counts are divided
// by the largest lane capacity at the intersection, times by 300 s.
inline double feature_normalizer(const FeatureSpec& spec, const RoadNetwork& net, const Intersection& inter) {
  switch (spec.unit) {
    case FeatureUnit::kIndicator: return 1.0;
    case FeatureUnit::kTime: return 1.0 / 300.0;
    case FeatureUnit::kCount: {
      int cap = 1;
      for (int l : inter.in_lanes) cap = std::max(cap, net.lanes[l].capacity);
      for (int l : inter.out_lanes) cap = std::max(cap, net.lanes[l].capacity);
      return 1.0 / cap;
    }
  }
  return 1.0;
}

}  // namespace tinylight
