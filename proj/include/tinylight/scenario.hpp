#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "tinylight/common.hpp"

namespace tinylight {

// Point-queue geometry: one vehicle occupies this much lane length.
inline constexpr double kVehicleSpacing = 7.5;

struct Lane {
  int road = 0;
  int index = 0;  // position within the road, 0 = innermost
  double length = 0.0;
  double max_speed = 0.0;
  int capacity = 0;     // ceil(length / 7.5)
  int free_flow_s = 0;  // whole seconds to traverse an empty lane
};

struct Road {
  std::string id;
  int from = 0;  // intersection index
  int to = 0;
  double length = 0.0;
  double max_speed = 0.0;
  int first_lane = 0;
  int lane_count = 0;
};

// Global lane ids on both ends.
struct LaneLink {
  int in_lane = 0;
  int out_lane = 0;
};

struct Phase {
  std::vector<int> links;  // indices into Intersection::links
};

struct Intersection {
  std::string id;
  double x = 0.0;
  double y = 0.0;
  bool signalized = false;
  std::vector<LaneLink> links;
  std::vector<Phase> phases;
  std::vector<std::pair<int, int>> conflicts;

  // Derived at validation time.
  std::vector<int> in_roads;
  std::vector<int> out_roads;
  std::vector<int> in_lanes;
  std::vector<int> out_lanes;

  int phase_count() const { return static_cast<int>(phases.size()); }
};

struct RoadNetwork {
  std::vector<Intersection> intersections;
  std::vector<Road> roads;
  std::vector<Lane> lanes;

  int road_index(const std::string& id) const {
    for (std::size_t i = 0; i < roads.size(); ++i)
      if (roads[i].id == id) return static_cast<int>(i);
    return -1;
  }
  int intersection_index(const std::string& id) const {
    for (std::size_t i = 0; i < intersections.size(); ++i)
      if (intersections[i].id == id) return static_cast<int>(i);
    return -1;
  }
  std::vector<int> signalized() const {
    std::vector<int> out;
    for (std::size_t i = 0; i < intersections.size(); ++i)
      if (intersections[i].signalized) out.push_back(static_cast<int>(i));
    return out;
  }
};

// Timed demand: every entry in spawn_times releases one vehicle on `route`.
struct Flow {
  std::vector<int> route;  // road indices
  std::vector<int> spawn_times;
};

struct Scenario {
  RoadNetwork network;
  std::vector<Flow> flows;

  std::size_t vehicle_count() const {
    std::size_t n = 0;
    for (const auto& f : flows) n += f.spawn_times.size();
    return n;
  }
};

namespace detail {

using nlohmann::json;

inline const json& field(const json& obj, const std::string& key, const std::string& path) {
  if (!obj.is_object()) throw ScenarioError(path + ": expected object");
  auto it = obj.find(key);
  if (it == obj.end()) throw ScenarioError(path + "/" + key + ": missing field");
  return *it;
}

inline double number(const json& obj, const std::string& key, const std::string& path) {
  const json& v = field(obj, key, path);
  if (!v.is_number()) throw ScenarioError(path + "/" + key + ": expected number");
  return v.get<double>();
}

inline long integer(const json& v, const std::string& path) {
  if (!v.is_number_integer()) throw ScenarioError(path + ": expected integer");
  return v.get<long>();
}

inline std::string text(const json& obj, const std::string& key, const std::string& path) {
  const json& v = field(obj, key, path);
  if (!v.is_string()) throw ScenarioError(path + "/" + key + ": expected string");
  return v.get<std::string>();
}

inline const json& array(const json& obj, const std::string& key, const std::string& path) {
  const json& v = field(obj, key, path);
  if (!v.is_array()) throw ScenarioError(path + "/" + key + ": expected array");
  return v;
}

// Segment crossing test used for conflict derivation; shared endpoints do
// not count as a crossing.
inline bool segments_cross(double ax, double ay, double bx, double by, double cx, double cy,
                           double dx, double dy) {
  auto orient = [](double px, double py, double qx, double qy, double rx, double ry) {
    double v = (qx - px) * (ry - py) - (qy - py) * (rx - px);
    if (std::abs(v) < 1e-12) return 0;
    return v > 0 ? 1 : -1;
  };
  int o1 = orient(ax, ay, bx, by, cx, cy);
  int o2 = orient(ax, ay, bx, by, dx, dy);
  int o3 = orient(cx, cy, dx, dy, ax, ay);
  int o4 = orient(cx, cy, dx, dy, bx, by);
  return o1 * o2 < 0 && o3 * o4 < 0;
}

}  // namespace detail

// Checks every structural invariant and fills the derived per-intersection
// lane sets. Throws ScenarioError naming the violated invariant.
inline void validate(Scenario& sc) {
  RoadNetwork& net = sc.network;
  const int n_int = static_cast<int>(net.intersections.size());
  const int n_lane = static_cast<int>(net.lanes.size());
  for (auto& inter : net.intersections) {
    inter.in_roads.clear();
    inter.out_roads.clear();
    inter.in_lanes.clear();
    inter.out_lanes.clear();
  }
  for (std::size_t r = 0; r < net.roads.size(); ++r) {
    const Road& road = net.roads[r];
    if (road.from < 0 || road.from >= n_int || road.to < 0 || road.to >= n_int)
      throw ScenarioError("road " + road.id + ": endpoint references a missing intersection");
    if (road.from == road.to) throw ScenarioError("road " + road.id + ": self loop");
    if (!(road.length > 0.0) || !(road.max_speed > 0.0))
      throw ScenarioError("road " + road.id + ": length and max_speed must be positive");
    if (road.lane_count < 1) throw ScenarioError("road " + road.id + ": needs at least one lane");
    net.intersections[road.from].out_roads.push_back(static_cast<int>(r));
    net.intersections[road.to].in_roads.push_back(static_cast<int>(r));
  }
  for (auto& inter : net.intersections) {
    for (int r : inter.in_roads)
      for (int k = 0; k < net.roads[r].lane_count; ++k)
        inter.in_lanes.push_back(net.roads[r].first_lane + k);
    for (int r : inter.out_roads)
      for (int k = 0; k < net.roads[r].lane_count; ++k)
        inter.out_lanes.push_back(net.roads[r].first_lane + k);
  }
  for (const auto& inter : net.intersections) {
    const int n_links = static_cast<int>(inter.links.size());
    for (std::size_t li = 0; li < inter.links.size(); ++li) {
      const LaneLink& link = inter.links[li];
      if (link.in_lane < 0 || link.in_lane >= n_lane || link.out_lane < 0 ||
          link.out_lane >= n_lane)
        throw ScenarioError("intersection " + inter.id + ": lane link " + std::to_string(li) +
                            " references a missing lane");
      if (std::find(inter.in_lanes.begin(), inter.in_lanes.end(), link.in_lane) ==
          inter.in_lanes.end())
        throw ScenarioError("intersection " + inter.id + ": lane link " + std::to_string(li) +
                            " starts on a lane that is not incoming to the intersection");
      if (std::find(inter.out_lanes.begin(), inter.out_lanes.end(), link.out_lane) ==
          inter.out_lanes.end())
        throw ScenarioError("intersection " + inter.id + ": lane link " + std::to_string(li) +
                            " ends on a lane that is not outgoing from the intersection");
    }
    for (const auto& [a, b] : inter.conflicts)
      if (a < 0 || a >= n_links || b < 0 || b >= n_links)
        throw ScenarioError("intersection " + inter.id + ": conflict pair references a missing lane link");
    if (inter.signalized) {
      if (inter.phase_count() < 2)
        throw ScenarioError("intersection " + inter.id + ": signalized intersection needs at least 2 phases");
      for (int p = 0; p < inter.phase_count(); ++p) {
        const auto& links = inter.phases[p].links;
        for (int l : links)
          if (l < 0 || l >= n_links)
            throw ScenarioError("intersection " + inter.id + ": phase " + std::to_string(p) +
                                " references a missing lane link");
        for (const auto& [a, b] : inter.conflicts) {
          bool has_a = std::find(links.begin(), links.end(), a) != links.end();
          bool has_b = std::find(links.begin(), links.end(), b) != links.end();
          if (has_a && has_b)
            throw ScenarioError("intersection " + inter.id + ": phase " + std::to_string(p) +
                                " contains conflicting lane links " + std::to_string(a) + " and " +
                                std::to_string(b));
        }
      }
    } else if (!inter.phases.empty()) {
      throw ScenarioError("intersection " + inter.id + ": phases given for an unsignalized intersection");
    }
  }
  for (std::size_t f = 0; f < sc.flows.size(); ++f) {
    const Flow& flow = sc.flows[f];
    const std::string where = "flow " + std::to_string(f);
    if (flow.route.empty()) throw ScenarioError(where + ": empty route");
    for (int r : flow.route)
      if (r < 0 || r >= static_cast<int>(net.roads.size()))
        throw ScenarioError(where + ": route references a missing road");
    for (std::size_t k = 0; k + 1 < flow.route.size(); ++k) {
      const Road& a = net.roads[flow.route[k]];
      const Road& b = net.roads[flow.route[k + 1]];
      if (a.to != b.from)
        throw ScenarioError(where + ": route is not connected end-to-end between " + a.id +
                            " and " + b.id);
      const Intersection& node = net.intersections[a.to];
      bool linked = false;
      for (const auto& link : node.links)
        if (net.lanes[link.in_lane].road == flow.route[k] &&
            net.lanes[link.out_lane].road == flow.route[k + 1])
          linked = true;
      if (!linked)
        throw ScenarioError(where + ": no lane link carries the route from " + a.id + " to " + b.id);
    }
    for (int t : flow.spawn_times)
      if (t < 0) throw ScenarioError(where + ": negative spawn time");
  }
}

inline void append_road(RoadNetwork& net, Road road) {
  road.first_lane = static_cast<int>(net.lanes.size());
  const int r = static_cast<int>(net.roads.size());
  for (int k = 0; k < road.lane_count; ++k) {
    Lane lane;
    lane.road = r;
    lane.index = k;
    lane.length = road.length;
    lane.max_speed = road.max_speed;
    lane.capacity = static_cast<int>(std::ceil(road.length / kVehicleSpacing - 1e-9));
    lane.free_flow_s = std::max(1, static_cast<int>(std::ceil(road.length / road.max_speed - 1e-9)));
    net.lanes.push_back(lane);
  }
  net.roads.push_back(std::move(road));
}

// Parses the scenario JSON document (schema_version 1). See README for the
// field reference.
inline Scenario parse_scenario(const nlohmann::json& doc) {
  using detail::json;
  if (!doc.is_object()) throw ScenarioError("/: expected object");
  if (doc.contains("schema_version") && detail::integer(doc["schema_version"], "/schema_version") != 1)
    throw ScenarioError("/schema_version: unsupported version");
  Scenario sc;
  RoadNetwork& net = sc.network;

  const json& inters = detail::array(doc, "intersections", "");
  for (std::size_t i = 0; i < inters.size(); ++i) {
    const std::string path = "/intersections/" + std::to_string(i);
    Intersection inter;
    inter.id = detail::text(inters[i], "id", path);
    if (net.intersection_index(inter.id) >= 0)
      throw ScenarioError(path + "/id: duplicate intersection id " + inter.id);
    inter.x = inters[i].contains("x") ? detail::number(inters[i], "x", path) : 0.0;
    inter.y = inters[i].contains("y") ? detail::number(inters[i], "y", path) : 0.0;
    inter.signalized = inters[i].value("signalized", false);
    net.intersections.push_back(std::move(inter));
  }

  const json& roads = detail::array(doc, "roads", "");
  for (std::size_t r = 0; r < roads.size(); ++r) {
    const std::string path = "/roads/" + std::to_string(r);
    Road road;
    road.id = detail::text(roads[r], "id", path);
    if (net.road_index(road.id) >= 0) throw ScenarioError(path + "/id: duplicate road id " + road.id);
    const std::string from = detail::text(roads[r], "from", path);
    const std::string to = detail::text(roads[r], "to", path);
    road.from = net.intersection_index(from);
    road.to = net.intersection_index(to);
    if (road.from < 0) throw ScenarioError(path + "/from: unknown intersection " + from);
    if (road.to < 0) throw ScenarioError(path + "/to: unknown intersection " + to);
    road.length = detail::number(roads[r], "length", path);
    road.max_speed = detail::number(roads[r], "max_speed", path);
    road.lane_count = static_cast<int>(detail::integer(detail::field(roads[r], "lanes", path), path + "/lanes"));
    if (!(road.length > 0.0) || !(road.max_speed > 0.0) || road.lane_count < 1)
      throw ScenarioError(path + ": length, max_speed and lanes must be positive");
    append_road(net, std::move(road));
  }

  auto lane_of = [&](const std::string& road_id, long lane, const std::string& path) {
    int r = net.road_index(road_id);
    if (r < 0) throw ScenarioError(path + ": lane link references missing road " + road_id);
    if (lane < 0 || lane >= net.roads[r].lane_count)
      throw ScenarioError(path + ": lane link references missing lane " + std::to_string(lane) +
                          " of road " + road_id);
    return net.roads[r].first_lane + static_cast<int>(lane);
  };

  for (std::size_t i = 0; i < inters.size(); ++i) {
    const std::string path = "/intersections/" + std::to_string(i);
    Intersection& inter = net.intersections[i];
    if (inters[i].contains("lane_links")) {
      const json& links = detail::array(inters[i], "lane_links", path);
      for (std::size_t l = 0; l < links.size(); ++l) {
        const std::string lp = path + "/lane_links/" + std::to_string(l);
        LaneLink link;
        link.in_lane = lane_of(detail::text(links[l], "from_road", lp),
                               detail::integer(detail::field(links[l], "from_lane", lp), lp + "/from_lane"), lp);
        link.out_lane = lane_of(detail::text(links[l], "to_road", lp),
                                detail::integer(detail::field(links[l], "to_lane", lp), lp + "/to_lane"), lp);
        inter.links.push_back(link);
      }
    }
    if (inters[i].contains("phases")) {
      const json& phases = detail::array(inters[i], "phases", path);
      for (std::size_t p = 0; p < phases.size(); ++p) {
        const std::string pp = path + "/phases/" + std::to_string(p);
        if (!phases[p].is_array()) throw ScenarioError(pp + ": expected array of lane link indices");
        Phase phase;
        for (std::size_t k = 0; k < phases[p].size(); ++k)
          phase.links.push_back(static_cast<int>(detail::integer(phases[p][k], pp + "/" + std::to_string(k))));
        inter.phases.push_back(std::move(phase));
      }
    }
    if (inters[i].contains("conflicts")) {
      const json& conflicts = detail::array(inters[i], "conflicts", path);
      for (std::size_t c = 0; c < conflicts.size(); ++c) {
        const std::string cp = path + "/conflicts/" + std::to_string(c);
        if (!conflicts[c].is_array() || conflicts[c].size() != 2)
          throw ScenarioError(cp + ": expected pair of lane link indices");
        inter.conflicts.emplace_back(static_cast<int>(detail::integer(conflicts[c][0], cp + "/0")),
                                     static_cast<int>(detail::integer(conflicts[c][1], cp + "/1")));
      }
    }
  }

  if (doc.contains("flows")) {
    const json& flows = detail::array(doc, "flows", "");
    for (std::size_t f = 0; f < flows.size(); ++f) {
      const std::string path = "/flows/" + std::to_string(f);
      Flow flow;
      const json& route = detail::array(flows[f], "route", path);
      for (std::size_t k = 0; k < route.size(); ++k) {
        if (!route[k].is_string()) throw ScenarioError(path + "/route/" + std::to_string(k) + ": expected road id");
        int r = net.road_index(route[k].get<std::string>());
        if (r < 0) throw ScenarioError(path + "/route/" + std::to_string(k) + ": unknown road " + route[k].get<std::string>());
        flow.route.push_back(r);
      }
      if (flows[f].contains("times")) {
        const json& times = detail::array(flows[f], "times", path);
        for (std::size_t k = 0; k < times.size(); ++k)
          flow.spawn_times.push_back(static_cast<int>(detail::integer(times[k], path + "/times/" + std::to_string(k))));
      } else {
        const long start = detail::integer(detail::field(flows[f], "start", path), path + "/start");
        const long end = detail::integer(detail::field(flows[f], "end", path), path + "/end");
        const long interval = detail::integer(detail::field(flows[f], "interval", path), path + "/interval");
        if (interval <= 0) throw ScenarioError(path + "/interval: must be positive");
        for (long t = start; t <= end; t += interval) flow.spawn_times.push_back(static_cast<int>(t));
      }
      sc.flows.push_back(std::move(flow));
    }
  }
  validate(sc);
  return sc;
}

inline Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError(path + ": cannot open file");
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ScenarioError(path + ": parse error: " + e.what());
  }
  return parse_scenario(doc);
}

// Inverse of parse_scenario; flows are written as explicit time lists.
inline nlohmann::json to_json(const Scenario& sc) {
  using nlohmann::json;
  const RoadNetwork& net = sc.network;
  json doc;
  doc["schema_version"] = 1;
  json inters = json::array();
  for (const auto& inter : net.intersections) {
    json j;
    j["id"] = inter.id;
    j["x"] = inter.x;
    j["y"] = inter.y;
    j["signalized"] = inter.signalized;
    if (!inter.links.empty()) {
      json links = json::array();
      for (const auto& link : inter.links) {
        const Lane& a = net.lanes[link.in_lane];
        const Lane& b = net.lanes[link.out_lane];
        links.push_back({{"from_road", net.roads[a.road].id}, {"from_lane", a.index},
                         {"to_road", net.roads[b.road].id}, {"to_lane", b.index}});
      }
      j["lane_links"] = links;
    }
    if (!inter.phases.empty()) {
      json phases = json::array();
      for (const auto& p : inter.phases) phases.push_back(p.links);
      j["phases"] = phases;
    }
    if (!inter.conflicts.empty()) {
      json conflicts = json::array();
      for (const auto& [a, b] : inter.conflicts) conflicts.push_back({a, b});
      j["conflicts"] = conflicts;
    }
    inters.push_back(j);
  }
  doc["intersections"] = inters;
  json roads = json::array();
  for (const auto& road : net.roads)
    roads.push_back({{"id", road.id}, {"from", net.intersections[road.from].id},
                     {"to", net.intersections[road.to].id}, {"length", road.length},
                     {"max_speed", road.max_speed}, {"lanes", road.lane_count}});
  doc["roads"] = roads;
  json flows = json::array();
  for (const auto& flow : sc.flows) {
    json route = json::array();
    for (int r : flow.route) route.push_back(net.roads[r].id);
    flows.push_back({{"route", route}, {"times", flow.spawn_times}});
  }
  doc["flows"] = flows;
  return doc;
}

// Shifts each spawn time by a uniform integer in [-bound_s, bound_s],
// clamped at zero. Deterministic per seed.
inline std::vector<Flow> jitter_flow(const std::vector<Flow>& flows, std::uint64_t seed, int bound_s = 60) {
  if (bound_s < 0) throw Error("jitter_flow: bound_s must be non-negative");
  std::vector<Flow> out = flows;
  if (bound_s == 0) return out;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> shift(-bound_s, bound_s);
  for (auto& flow : out) {
    for (int& t : flow.spawn_times) t = std::max(0, t + shift(rng));
  }
  return out;
}

}  // namespace tinylight
