#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "tinylight/supergraph.hpp"

namespace tinylight {

// Plain fully connected network: relu on every hidden layer, linear output.
// Consumes the first vector of an Observation.
class Mlp {
 public:
  Mlp() = default;
  Mlp(std::vector<int> dims, std::uint64_t seed) : dims_(std::move(dims)) {
    if (dims_.size() < 2) throw ShapeError("mlp needs at least an input and an output width");
    std::mt19937_64 rng(seed);
    for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
      layers_.emplace_back(dims_[l], dims_[l + 1], "mlp." + std::to_string(l));
      layers_.back().init_uniform(rng);
    }
  }

  const std::vector<int>& dims() const { return dims_; }
  std::vector<DenseParams>& layers() { return layers_; }
  const std::vector<DenseParams>& layers() const { return layers_; }

  std::vector<double> forward(const Observation& obs) const {
    std::vector<double> h = obs.at(0);
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      h = linear(h, layers_[l]);
      if (l + 1 < layers_.size()) h = relu(h);
    }
    return h;
  }

  Tape::Var record(Tape& tape, const Observation& obs) {
    Tape::Var h = tape.constant(obs.at(0));
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      h = tape.linear(h, layers_[l]);
      if (l + 1 < layers_.size()) h = tape.relu(h);
    }
    return h;
  }

  std::vector<Tensor*> theta_tensors() {
    std::vector<Tensor*> out;
    for (auto& p : layers_) out.insert(out.end(), {&p.weight, &p.bias});
    return out;
  }
  std::vector<const Tensor*> theta_tensors() const {
    auto v = const_cast<Mlp*>(this)->theta_tensors();
    return {v.begin(), v.end()};
  }
  std::vector<Tensor*> alpha_tensors() { return {}; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : layers_) n += p.parameter_count();
    return n;
  }

 private:
  std::vector<int> dims_;
  std::vector<DenseParams> layers_;
};

inline Mlp ecolight_model(std::uint64_t seed) { return Mlp({2, 10, 10, 2}, seed); }

// EcoLight input: mean vehicle count per incoming lane with green and with
// red right of way, divided by the largest lane capacity.
inline Observation ecolight_observe(const Simulator& sim, int inter_idx) {
  const RoadNetwork& net = sim.network();
  const Intersection& inter = net.intersections.at(inter_idx);
  double green = 0, red = 0;
  int n_green = 0, n_red = 0, cap = 1;
  for (int lane : inter.in_lanes) {
    cap = std::max(cap, net.lanes[lane].capacity);
    bool is_green = false;
    for (std::size_t k = 0; k < inter.links.size(); ++k)
      if (inter.links[k].in_lane == lane && sim.link_green(inter_idx, static_cast<int>(k))) is_green = true;
    const double v = sim.lane_count(lane);
    if (is_green) {
      green += v;
      ++n_green;
    } else {
      red += v;
      ++n_red;
    }
  }
  const double g = n_green ? green / n_green / cap : 0.0;
  const double r = n_red ? red / n_red / cap : 0.0;
  return {{g, r}};
}

}  // namespace tinylight
