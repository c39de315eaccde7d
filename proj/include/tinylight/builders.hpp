#pragma once

#include <array>
#include <string>
#include <vector>

#include "tinylight/scenario.hpp"

namespace tinylight {

// Approach directions, clockwise. A vehicle arriving from `d` turns left to
// d+1, goes through to d+2 and turns right to d+3.
enum Direction : int { kNorth = 0, kEast = 1, kSouth = 2, kWest = 3 };
enum Turn : int { kLeft = 0, kThrough = 1, kRight = 2 };

inline int turn_target(int from_dir, int turn) { return (from_dir + 1 + turn) % 4; }

struct FourWayOptions {
  double road_length = 300.0;
  double max_speed = 10.0;
  int lanes = 3;  // lane 0 left, 1 through, 2 right
};

namespace detail {

// Entry/exit points of each approach on the unit box, right-hand traffic.
inline std::array<double, 2> entry_point(int d) {
  switch (d) {
    case kNorth: return {-0.5, 1.0};
    case kEast: return {1.0, 0.5};
    case kSouth: return {0.5, -1.0};
    default: return {-1.0, -0.5};
  }
}
inline std::array<double, 2> exit_point(int d) {
  switch (d) {
    case kNorth: return {0.5, 1.0};
    case kEast: return {1.0, -0.5};
    case kSouth: return {-0.5, -1.0};
    default: return {-1.0, 0.5};
  }
}

inline std::array<double, 2> dir_offset(int d) {
  switch (d) {
    case kNorth: return {0.0, 1.0};
    case kEast: return {1.0, 0.0};
    case kSouth: return {0.0, -1.0};
    default: return {-1.0, 0.0};
  }
}

struct Movement {
  int from_dir;
  int turn;
};

// Standard 9-phase table: phase 0 serves right turns only; right turns are
// permitted in every phase.
inline std::vector<std::vector<Movement>> nine_phase_table() {
  std::vector<std::vector<Movement>> t = {
      {},
      {{kNorth, kThrough}, {kSouth, kThrough}},
      {{kEast, kThrough}, {kWest, kThrough}},
      {{kNorth, kLeft}, {kSouth, kLeft}},
      {{kEast, kLeft}, {kWest, kLeft}},
      {{kNorth, kThrough}, {kNorth, kLeft}},
      {{kSouth, kThrough}, {kSouth, kLeft}},
      {{kEast, kThrough}, {kEast, kLeft}},
      {{kWest, kThrough}, {kWest, kLeft}},
  };
  for (auto& phase : t)
    for (int d = 0; d < 4; ++d) phase.push_back({d, kRight});
  return t;
}

// Wires lane links, conflicts and phases for a 4-way node whose incoming and
// outgoing roads are indexed by direction (-1 when absent).
inline void wire_four_way(RoadNetwork& net, Intersection& inter, const std::array<int, 4>& in_road,
                          const std::array<int, 4>& out_road) {
  struct LinkMove {
    int from_dir, turn;
  };
  std::vector<LinkMove> moves;
  for (int d = 0; d < 4; ++d) {
    if (in_road[d] < 0) continue;
    const Road& in = net.roads[in_road[d]];
    for (int k = 0; k < in.lane_count; ++k) {
      const int turn = in.lane_count >= 3 ? std::min(k, 2) : (in.lane_count == 1 ? kThrough : k);
      const int target = turn_target(d, turn);
      if (out_road[target] < 0) continue;
      const Road& out = net.roads[out_road[target]];
      for (int m = 0; m < out.lane_count; ++m) {
        inter.links.push_back({in.first_lane + k, out.first_lane + m});
        moves.push_back({d, turn});
      }
    }
  }
  for (std::size_t a = 0; a < moves.size(); ++a) {
    for (std::size_t b = a + 1; b < moves.size(); ++b) {
      if (moves[a].from_dir == moves[b].from_dir) continue;
      auto p0 = entry_point(moves[a].from_dir);
      auto p1 = exit_point(turn_target(moves[a].from_dir, moves[a].turn));
      auto q0 = entry_point(moves[b].from_dir);
      auto q1 = exit_point(turn_target(moves[b].from_dir, moves[b].turn));
      if (segments_cross(p0[0], p0[1], p1[0], p1[1], q0[0], q0[1], q1[0], q1[1]))
        inter.conflicts.emplace_back(static_cast<int>(a), static_cast<int>(b));
    }
  }
  for (const auto& movements : nine_phase_table()) {
    Phase phase;
    for (std::size_t l = 0; l < moves.size(); ++l)
      for (const auto& mv : movements)
        if (moves[l].from_dir == mv.from_dir && moves[l].turn == mv.turn)
          phase.links.push_back(static_cast<int>(l));
    inter.phases.push_back(std::move(phase));
  }
}

}  // namespace detail

// Grid of signalized 4-way intersections named "I_<col>_<row>", spaced by
// road_length, surrounded by unsignalized boundary nodes. Roads are named
// "<from>><to>".
inline Scenario make_grid(int cols, int rows, const FourWayOptions& opt = {}) {
  Scenario sc;
  RoadNetwork& net = sc.network;
  auto node_name = [](int c, int r) { return "I_" + std::to_string(c) + "_" + std::to_string(r); };
  std::map<std::pair<int, int>, int> index;
  for (int r = -1; r <= rows; ++r) {
    for (int c = -1; c <= cols; ++c) {
      const bool inside = c >= 0 && c < cols && r >= 0 && r < rows;
      const bool boundary = !inside && (c >= 0 && c < cols) != (r >= 0 && r < rows);
      if (!inside && !boundary) continue;
      Intersection inter;
      inter.id = inside ? node_name(c, r) : "B_" + std::to_string(c) + "_" + std::to_string(r);
      inter.x = c * opt.road_length;
      inter.y = r * opt.road_length;
      inter.signalized = inside;
      index[{c, r}] = static_cast<int>(net.intersections.size());
      net.intersections.push_back(std::move(inter));
    }
  }
  auto add_road = [&](int a, int b) {
    Road road;
    road.id = net.intersections[a].id + ">" + net.intersections[b].id;
    road.from = a;
    road.to = b;
    road.length = opt.road_length;
    road.max_speed = opt.max_speed;
    road.lane_count = opt.lanes;
    append_road(net, std::move(road));
    return static_cast<int>(net.roads.size()) - 1;
  };
  std::map<std::pair<int, int>, int> road_between;
  for (const auto& [pos, idx] : index) {
    if (!net.intersections[idx].signalized) continue;
    for (int d = 0; d < 4; ++d) {
      auto off = detail::dir_offset(d);
      std::pair<int, int> nb{pos.first + static_cast<int>(off[0]), pos.second + static_cast<int>(off[1])};
      auto it = index.find(nb);
      if (it == index.end()) continue;
      if (!road_between.count({idx, it->second})) road_between[{idx, it->second}] = add_road(idx, it->second);
      if (!road_between.count({it->second, idx})) road_between[{it->second, idx}] = add_road(it->second, idx);
    }
  }
  for (const auto& [pos, idx] : index) {
    if (!net.intersections[idx].signalized) continue;
    std::array<int, 4> in_road{-1, -1, -1, -1}, out_road{-1, -1, -1, -1};
    for (int d = 0; d < 4; ++d) {
      auto off = detail::dir_offset(d);
      auto it = index.find({pos.first + static_cast<int>(off[0]), pos.second + static_cast<int>(off[1])});
      if (it == index.end()) continue;
      in_road[d] = road_between.at({it->second, idx});
      out_road[d] = road_between.at({idx, it->second});
    }
    detail::wire_four_way(net, net.intersections[idx], in_road, out_road);
  }
  validate(sc);
  return sc;
}

// Single signalized 4-way intersection "I0" with boundary nodes N/E/S/W.
// Roads are named "<dir>_in" and "<dir>_out", e.g. "W_in" enters from the west.
inline Scenario make_four_way(const FourWayOptions& opt = {}) {
  Scenario sc;
  RoadNetwork& net = sc.network;
  static const char* names[4] = {"N", "E", "S", "W"};
  Intersection center;
  center.id = "I0";
  center.signalized = true;
  net.intersections.push_back(center);
  for (int d = 0; d < 4; ++d) {
    Intersection b;
    b.id = names[d];
    auto off = detail::dir_offset(d);
    b.x = off[0] * opt.road_length;
    b.y = off[1] * opt.road_length;
    net.intersections.push_back(b);
  }
  std::array<int, 4> in_road{}, out_road{};
  for (int d = 0; d < 4; ++d) {
    Road in;
    in.id = std::string(names[d]) + "_in";
    in.from = d + 1;
    in.to = 0;
    in.length = opt.road_length;
    in.max_speed = opt.max_speed;
    in.lane_count = opt.lanes;
    append_road(net, in);
    in_road[d] = static_cast<int>(net.roads.size()) - 1;
    Road out;
    out.id = std::string(names[d]) + "_out";
    out.from = 0;
    out.to = d + 1;
    out.length = opt.road_length;
    out.max_speed = opt.max_speed;
    out.lane_count = opt.lanes;
    append_road(net, out);
    out_road[d] = static_cast<int>(net.roads.size()) - 1;
  }
  detail::wire_four_way(net, net.intersections[0], in_road, out_road);
  validate(sc);
  return sc;
}

// Regular demand on a route given by road ids: one vehicle every
// `interval_s` seconds over [start, end].
inline void add_flow(Scenario& sc, const std::vector<std::string>& road_ids, int start, int end,
                     int interval_s) {
  Flow flow;
  for (const auto& id : road_ids) {
    int r = sc.network.road_index(id);
    if (r < 0) throw ScenarioError("add_flow: unknown road " + id);
    flow.route.push_back(r);
  }
  for (int t = start; t <= end; t += interval_s) flow.spawn_times.push_back(t);
  sc.flows.push_back(std::move(flow));
  validate(sc);
}

// Movement on the single 4-way: from direction `from` with `turn`.
inline std::vector<std::string> four_way_route(int from, int turn) {
  static const char* names[4] = {"N", "E", "S", "W"};
  return {std::string(names[from]) + "_in", std::string(names[turn_target(from, turn)]) + "_out"};
}

struct DemandLevel {
  int from;
  int turn;
  int interval_s;
};

// Congested, asymmetric single-intersection scenario used for the desk-scale
// behavioral comparison: heavy east-west through traffic, moderate lefts and
// light north-south demand.
inline Scenario make_desk_scenario(int duration_s = 3600) {
  Scenario sc = make_four_way();
  const std::vector<DemandLevel> demand = {
      {kEast, kThrough, 5},   {kWest, kThrough, 6},   {kEast, kLeft, 15},  {kWest, kLeft, 20},
      {kNorth, kThrough, 12}, {kSouth, kThrough, 18}, {kNorth, kLeft, 40}, {kSouth, kLeft, 60},
      {kEast, kRight, 20},    {kWest, kRight, 20},    {kNorth, kRight, 30}, {kSouth, kRight, 30},
  };
  for (const auto& d : demand) add_flow(sc, four_way_route(d.from, d.turn), 0, duration_s - 1, d.interval_s);
  return sc;
}

}  // namespace tinylight
