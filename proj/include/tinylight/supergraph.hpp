#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "tinylight/features.hpp"
#include "tinylight/tape.hpp"

namespace tinylight {

// One input vector per layer-1 component, already multiplied by its scale.
using Observation = std::vector<std::vector<double>>;

struct SuperGraphSpec {
  std::vector<int> feature_ids;     // layer-1 components
  std::vector<int> input_dims;      // one per feature
  std::vector<double> input_scale;  // raw feature -> network input multiplier
  std::vector<int> layer2_dims{16, 18, 20, 22, 24};
  std::vector<int> layer3_dims{16, 18, 20, 22, 24};
  int output_dim = 0;
  FeatureOptions feature_options;

  std::array<std::size_t, 3> layer_sizes() const {
    return {feature_ids.size(), layer2_dims.size(), layer3_dims.size()};
  }

  void validate() const {
    if (feature_ids.empty() || layer2_dims.empty() || layer3_dims.empty())
      throw ShapeError("super-graph spec: every layer needs at least one component");
    if (input_dims.size() != feature_ids.size() || input_scale.size() != feature_ids.size())
      throw ShapeError("super-graph spec: feature ids, dims and scales differ in length");
    auto positive = [](const std::vector<int>& v) { return std::all_of(v.begin(), v.end(), [](int d) { return d > 0; }); };
    if (!positive(input_dims) || !positive(layer2_dims) || !positive(layer3_dims) || output_dim <= 0)
      throw ShapeError("super-graph spec: all dims must be positive");
  }
};

// The 37 candidate features of `inter`, five hidden widths per layer, P outputs.
inline SuperGraphSpec default_spec(const RoadNetwork& net, int inter_idx, const FeatureOptions& opt = {}) {
  const Intersection& inter = net.intersections.at(inter_idx);
  SuperGraphSpec spec;
  spec.feature_options = opt;
  for (const auto& e : catalog(inter, opt)) {
    spec.feature_ids.push_back(e.spec.id);
    spec.input_dims.push_back(e.dim);
    spec.input_scale.push_back(feature_normalizer(e.spec, net, inter));
  }
  spec.output_dim = inter.phase_count();
  return spec;
}

inline Observation observe(const Simulator& sim, int inter_idx, const SuperGraphSpec& spec) {
  Observation obs;
  obs.reserve(spec.feature_ids.size());
  for (std::size_t i = 0; i < spec.feature_ids.size(); ++i) {
    auto fv = extract(spec.feature_ids[i], sim, inter_idx, spec.feature_options);
    for (double& v : fv.values) v *= spec.input_scale[i];
    obs.push_back(std::move(fv.values));
  }
  return obs;
}

inline std::uint64_t count_subgraphs(const SuperGraphSpec& spec) {
  std::uint64_t n = 1;
  for (std::size_t s : spec.layer_sizes()) n *= s;
  return n;
}

inline double entropy_of_logits(std::span<const double> logits) { return entropy(softmax(logits)); }

inline double combined_loss(double td, double ent, double beta = 16.0) {
  if (!(beta >= 0.0)) throw Error("combined_loss: beta must be non-negative");
  return td + beta * ent;
}

namespace detail {

inline void check_observation(const Observation& obs, const std::vector<int>& dims) {
  if (obs.size() != dims.size())
    throw ShapeError("observation has " + std::to_string(obs.size()) + " features, expected " +
                     std::to_string(dims.size()));
  for (std::size_t i = 0; i < dims.size(); ++i)
    if (obs[i].size() != static_cast<std::size_t>(dims[i]))
      throw ShapeError("feature " + std::to_string(i) + " has dim " + std::to_string(obs[i].size()) +
                       ", expected " + std::to_string(dims[i]));
}

inline void accumulate_scaled(std::vector<double>& acc, const std::vector<double>& v, double w) {
  for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += w * v[k];
}

}  // namespace detail

class SuperGraph {
 public:
  SuperGraph() = default;

  SuperGraph(SuperGraphSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
    spec_.validate();
    std::mt19937_64 rng(seed);
    const auto sizes = spec_.layer_sizes();
    for (int l = 0; l < 3; ++l) logits_[l] = Tensor("alpha." + std::to_string(l + 1), 1, sizes[l]);
    edges1_.resize(sizes[0]);
    for (std::size_t i = 0; i < sizes[0]; ++i)
      for (std::size_t j = 0; j < sizes[1]; ++j) {
        edges1_[i].emplace_back(spec_.input_dims[i], spec_.layer2_dims[j],
                                "theta.1." + std::to_string(i) + "." + std::to_string(j));
        edges1_[i].back().init_uniform(rng);
      }
    edges2_.resize(sizes[1]);
    for (std::size_t i = 0; i < sizes[1]; ++i)
      for (std::size_t j = 0; j < sizes[2]; ++j) {
        edges2_[i].emplace_back(spec_.layer2_dims[i], spec_.layer3_dims[j],
                                "theta.2." + std::to_string(i) + "." + std::to_string(j));
        edges2_[i].back().init_uniform(rng);
      }
    for (std::size_t i = 0; i < sizes[2]; ++i) {
      head_.emplace_back(spec_.layer3_dims[i], spec_.output_dim, "theta.3." + std::to_string(i));
      head_.back().init_uniform(rng);
    }
  }

  const SuperGraphSpec& spec() const { return spec_; }

  Tensor& logits(int layer) { return logits_.at(layer); }
  const Tensor& logits(int layer) const { return logits_.at(layer); }
  std::vector<double> alpha(int layer) const { return softmax(logits_.at(layer).value); }

  DenseParams& edge1(std::size_t i, std::size_t j) { return edges1_.at(i).at(j); }
  DenseParams& edge2(std::size_t i, std::size_t j) { return edges2_.at(i).at(j); }
  DenseParams& head(std::size_t i) { return head_.at(i); }
  const DenseParams& edge1(std::size_t i, std::size_t j) const { return edges1_.at(i).at(j); }
  const DenseParams& edge2(std::size_t i, std::size_t j) const { return edges2_.at(i).at(j); }
  const DenseParams& head(std::size_t i) const { return head_.at(i); }

  std::vector<Tensor*> theta_tensors() {
    std::vector<Tensor*> out;
    for (auto& row : edges1_)
      for (auto& p : row) out.insert(out.end(), {&p.weight, &p.bias});
    for (auto& row : edges2_)
      for (auto& p : row) out.insert(out.end(), {&p.weight, &p.bias});
    for (auto& p : head_) out.insert(out.end(), {&p.weight, &p.bias});
    return out;
  }
  std::vector<const Tensor*> theta_tensors() const {
    auto v = const_cast<SuperGraph*>(this)->theta_tensors();
    return {v.begin(), v.end()};
  }
  std::vector<Tensor*> alpha_tensors() { return {&logits_[0], &logits_[1], &logits_[2]}; }
  std::vector<const Tensor*> alpha_tensors() const { return {&logits_[0], &logits_[1], &logits_[2]}; }

  void set_theta_trainable(bool on) {
    for (Tensor* t : theta_tensors()) t->requires_grad = on;
  }
  void set_alpha_trainable(bool on) {
    for (Tensor* t : alpha_tensors()) t->requires_grad = on;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const Tensor* t : theta_tensors()) n += t->size();
    return n;
  }

  // o_j = sum_i alpha_i * relu(linear(o_i; theta_ij)); the head is linear.
  std::vector<double> forward(const Observation& obs) const {
    detail::check_observation(obs, spec_.input_dims);
    const auto sizes = spec_.layer_sizes();
    const auto a1 = alpha(0), a2 = alpha(1), a3 = alpha(2);
    std::vector<std::vector<double>> h2(sizes[1]), h3(sizes[2]);
    for (std::size_t j = 0; j < sizes[1]; ++j) {
      h2[j].assign(spec_.layer2_dims[j], 0.0);
      for (std::size_t i = 0; i < sizes[0]; ++i) detail::accumulate_scaled(h2[j], relu(linear(obs[i], edges1_[i][j])), a1[i]);
    }
    for (std::size_t j = 0; j < sizes[2]; ++j) {
      h3[j].assign(spec_.layer3_dims[j], 0.0);
      for (std::size_t i = 0; i < sizes[1]; ++i) detail::accumulate_scaled(h3[j], relu(linear(h2[i], edges2_[i][j])), a2[i]);
    }
    std::vector<double> q(spec_.output_dim, 0.0);
    for (std::size_t i = 0; i < sizes[2]; ++i) detail::accumulate_scaled(q, linear(h3[i], head_[i]), a3[i]);
    return q;
  }

  // Same computation recorded on `tape`; returns the q node.
  Tape::Var record(Tape& tape, const Observation& obs) {
    detail::check_observation(obs, spec_.input_dims);
    const auto sizes = spec_.layer_sizes();
    std::array<Tape::Var, 3> a{};
    for (int l = 0; l < 3; ++l) a[l] = tape.softmax(tape.parameter(logits_[l]));
    std::vector<Tape::Var> x(sizes[0]);
    for (std::size_t i = 0; i < sizes[0]; ++i) x[i] = tape.constant(obs[i]);
    auto mix = [&](const std::vector<Tape::Var>& in, auto& edges, Tape::Var alpha, std::size_t j, bool act) {
      Tape::Var acc = -1;
      for (std::size_t i = 0; i < in.size(); ++i) {
        Tape::Var y = tape.linear(in[i], edges(i, j));
        if (act) y = tape.relu(y);
        y = tape.scale_by(y, alpha, i);
        acc = acc < 0 ? y : tape.add(acc, y);
      }
      return acc;
    };
    std::vector<Tape::Var> h2(sizes[1]), h3(sizes[2]);
    auto e1 = [&](std::size_t i, std::size_t j) -> DenseParams& { return edges1_[i][j]; };
    auto e2 = [&](std::size_t i, std::size_t j) -> DenseParams& { return edges2_[i][j]; };
    auto e3 = [&](std::size_t i, std::size_t) -> DenseParams& { return head_[i]; };
    for (std::size_t j = 0; j < sizes[1]; ++j) h2[j] = mix(x, e1, a[0], j, true);
    for (std::size_t j = 0; j < sizes[2]; ++j) h3[j] = mix(h2, e2, a[1], j, true);
    return mix(h3, e3, a[2], 0, false);
  }

  // Sum of per-layer entropies of alpha, recorded on `tape`.
  Tape::Var record_entropy(Tape& tape) {
    Tape::Var acc = -1;
    for (auto& t : logits_) {
      Tape::Var h = tape.entropy(tape.softmax(tape.parameter(t)));
      acc = acc < 0 ? h : tape.add(acc, h);
    }
    return acc;
  }

 private:
  SuperGraphSpec spec_;
  std::array<Tensor, 3> logits_;
  std::vector<std::vector<DenseParams>> edges1_;
  std::vector<std::vector<DenseParams>> edges2_;
  std::vector<DenseParams> head_;
};

inline double entropy_loss(const SuperGraph& sg) {
  double h = 0.0;
  for (int l = 0; l < 3; ++l) h += entropy_of_logits(sg.logits(l).value);
  return h;
}

// One vector per retained feature, already multiplied by input_scale.
using SubGraphInput = std::vector<std::vector<double>>;

// Retained components per layer and copied alpha-folded weights. Layer-1
// inputs are summed element-wise inside each retained layer-2 block.
struct SubGraph {
  std::vector<int> feature_ids;
  std::vector<int> feature_slots;  // positions in the super-graph observation
  std::vector<int> input_dims;
  std::vector<double> input_scale;
  std::vector<int> layer2_blocks;
  std::vector<int> layer2_dims;
  std::vector<int> layer3_blocks;
  std::vector<int> layer3_dims;
  int output_dim = 0;
  std::vector<std::vector<DenseParams>> edges1;  // [feature][layer-2 block]
  std::vector<std::vector<DenseParams>> edges2;  // [layer-2 block][layer-3 block]
  std::vector<DenseParams> head;                 // [layer-3 block]

  // Every retained component has a successor and the output is reachable.
  bool connected() const {
    if (feature_ids.empty() || layer2_blocks.empty() || layer3_blocks.empty() || output_dim <= 0) return false;
    if (edges1.size() != feature_ids.size() || edges2.size() != layer2_blocks.size() ||
        head.size() != layer3_blocks.size())
      return false;
    for (const auto& row : edges1)
      if (row.size() != layer2_blocks.size()) return false;
    for (const auto& row : edges2)
      if (row.size() != layer3_blocks.size()) return false;
    return true;
  }

  std::vector<Tensor*> theta_tensors() {
    std::vector<Tensor*> out;
    for (auto& row : edges1)
      for (auto& p : row) out.insert(out.end(), {&p.weight, &p.bias});
    for (auto& row : edges2)
      for (auto& p : row) out.insert(out.end(), {&p.weight, &p.bias});
    for (auto& p : head) out.insert(out.end(), {&p.weight, &p.bias});
    return out;
  }
  std::vector<const Tensor*> theta_tensors() const {
    auto v = const_cast<SubGraph*>(this)->theta_tensors();
    return {v.begin(), v.end()};
  }
  std::vector<Tensor*> alpha_tensors() { return {}; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const Tensor* t : theta_tensors()) n += t->size();
    return n;
  }

  // Inputs are the retained features only, already scaled.
  std::vector<double> forward_inputs(std::span<const std::vector<double>> inputs) const {
    if (inputs.size() != feature_ids.size()) throw ShapeError("sub-graph: wrong number of inputs");
    for (std::size_t i = 0; i < inputs.size(); ++i)
      if (inputs[i].size() != static_cast<std::size_t>(input_dims[i])) throw ShapeError("sub-graph: input dim mismatch");
    std::vector<std::vector<double>> h2(layer2_blocks.size()), h3(layer3_blocks.size());
    for (std::size_t j = 0; j < h2.size(); ++j) {
      h2[j].assign(layer2_dims[j], 0.0);
      for (std::size_t i = 0; i < inputs.size(); ++i) detail::accumulate_scaled(h2[j], relu(linear(inputs[i], edges1[i][j])), 1.0);
    }
    for (std::size_t j = 0; j < h3.size(); ++j) {
      h3[j].assign(layer3_dims[j], 0.0);
      for (std::size_t i = 0; i < h2.size(); ++i) detail::accumulate_scaled(h3[j], relu(linear(h2[i], edges2[i][j])), 1.0);
    }
    std::vector<double> q(output_dim, 0.0);
    for (std::size_t i = 0; i < h3.size(); ++i) detail::accumulate_scaled(q, linear(h3[i], head[i]), 1.0);
    return q;
  }

  // Raw sensor values (before input_scale).
  std::vector<double> forward_raw(std::span<const std::vector<double>> raw) const {
    std::vector<std::vector<double>> scaled(raw.begin(), raw.end());
    for (std::size_t i = 0; i < scaled.size() && i < input_scale.size(); ++i)
      for (double& v : scaled[i]) v *= input_scale[i];
    return forward_inputs(scaled);
  }

  std::vector<std::vector<double>> select(const Observation& obs) const {
    std::vector<std::vector<double>> in;
    in.reserve(feature_slots.size());
    for (int s : feature_slots) in.push_back(obs.at(s));
    return in;
  }

  std::vector<double> forward(const Observation& obs) const { return forward_inputs(select(obs)); }

  Tape::Var record(Tape& tape, const Observation& obs) {
    std::vector<Tape::Var> x;
    for (int s : feature_slots) x.push_back(tape.constant(obs.at(s)));
    auto mix = [&](const std::vector<Tape::Var>& in, auto edge, std::size_t j, bool act) {
      Tape::Var acc = -1;
      for (std::size_t i = 0; i < in.size(); ++i) {
        Tape::Var y = tape.linear(in[i], edge(i, j));
        if (act) y = tape.relu(y);
        acc = acc < 0 ? y : tape.add(acc, y);
      }
      return acc;
    };
    std::vector<Tape::Var> h2(layer2_blocks.size()), h3(layer3_blocks.size());
    for (std::size_t j = 0; j < h2.size(); ++j)
      h2[j] = mix(x, [&](std::size_t i, std::size_t k) -> DenseParams& { return edges1[i][k]; }, j, true);
    for (std::size_t j = 0; j < h3.size(); ++j)
      h3[j] = mix(h2, [&](std::size_t i, std::size_t k) -> DenseParams& { return edges2[i][k]; }, j, true);
    return mix(h3, [&](std::size_t i, std::size_t) -> DenseParams& { return head[i]; }, 0, false);
  }
};

// Indices of the k largest entries; ties go to the lower index. Result is
// sorted by index.
inline std::vector<int> top_k(std::span<const double> v, std::size_t k) {
  std::vector<int> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return v[a] > v[b]; });
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

namespace detail {

inline DenseParams folded(const DenseParams& p, double w) {
  DenseParams out = p;
  for (double& x : out.weight.value) x *= w;
  for (double& x : out.bias.value) x *= w;
  out.weight.zero_grad();
  out.bias.zero_grad();
  return out;
}

inline std::vector<double> renormalized(const std::vector<double>& alpha, const std::vector<int>& keep) {
  double s = 0.0;
  for (int i : keep) s += alpha[i];
  std::vector<double> out;
  for (int i : keep) out.push_back(s > 0.0 ? alpha[i] / s : 1.0 / static_cast<double>(keep.size()));
  return out;
}

// Builds a sub-graph from chosen components with per-component weights
// folded into the outgoing edges.
inline SubGraph assemble(const SuperGraph& sg, const std::array<std::vector<int>, 3>& sel,
                         const std::array<std::vector<double>, 3>& w) {
  const SuperGraphSpec& spec = sg.spec();
  SubGraph sub;
  for (int i : sel[0]) {
    sub.feature_ids.push_back(spec.feature_ids[i]);
    sub.feature_slots.push_back(i);
    sub.input_dims.push_back(spec.input_dims[i]);
    sub.input_scale.push_back(spec.input_scale[i]);
  }
  for (int j : sel[1]) {
    sub.layer2_blocks.push_back(j);
    sub.layer2_dims.push_back(spec.layer2_dims[j]);
  }
  for (int k : sel[2]) {
    sub.layer3_blocks.push_back(k);
    sub.layer3_dims.push_back(spec.layer3_dims[k]);
  }
  sub.output_dim = spec.output_dim;
  sub.edges1.resize(sel[0].size());
  for (std::size_t a = 0; a < sel[0].size(); ++a)
    for (int j : sel[1]) sub.edges1[a].push_back(folded(sg.edge1(sel[0][a], j), w[0][a]));
  sub.edges2.resize(sel[1].size());
  for (std::size_t a = 0; a < sel[1].size(); ++a)
    for (int k : sel[2]) sub.edges2[a].push_back(folded(sg.edge2(sel[1][a], k), w[1][a]));
  for (std::size_t a = 0; a < sel[2].size(); ++a) sub.head.push_back(folded(sg.head(sel[2][a]), w[2][a]));
  return sub;
}

inline void check_keep(const SuperGraphSpec& spec, const std::array<int, 3>& keep) {
  const auto sizes = spec.layer_sizes();
  for (int l = 0; l < 3; ++l) {
    if (keep[l] < 1) throw Error("extract: keep[" + std::to_string(l) + "] must be at least 1");
    if (static_cast<std::size_t>(keep[l]) > sizes[l])
      throw Error("extract: keep[" + std::to_string(l) + "] = " + std::to_string(keep[l]) + " exceeds layer size " +
                  std::to_string(sizes[l]));
  }
}

}  // namespace detail

// Keeps the top keep[l] components of every layer by alpha and folds the
// renormalized retained alpha into the copied weights (relu(c*z) = c*relu(z)
// for c > 0).
inline SubGraph extract(const SuperGraph& sg, const std::array<int, 3>& keep = {2, 1, 1}) {
  detail::check_keep(sg.spec(), keep);
  std::array<std::vector<int>, 3> sel;
  std::array<std::vector<double>, 3> w;
  for (int l = 0; l < 3; ++l) {
    const auto a = sg.alpha(l);
    sel[l] = top_k(a, static_cast<std::size_t>(keep[l]));
    w[l] = detail::renormalized(a, sel[l]);
  }
  return detail::assemble(sg, sel, w);
}

// Uniformly sampled components per layer; weights copied unscaled from `sg`.
inline SubGraph random_path(const SuperGraph& sg, std::uint64_t seed, const std::array<int, 3>& keep = {2, 1, 1}) {
  detail::check_keep(sg.spec(), keep);
  std::mt19937_64 rng(seed);
  const auto sizes = sg.spec().layer_sizes();
  std::array<std::vector<int>, 3> sel;
  std::array<std::vector<double>, 3> w;
  for (int l = 0; l < 3; ++l) {
    std::vector<int> idx(sizes[l]);
    std::iota(idx.begin(), idx.end(), 0);
    for (int k = 0; k < keep[l]; ++k) {
      std::uniform_int_distribution<std::size_t> pick(static_cast<std::size_t>(k), idx.size() - 1);
      std::swap(idx[k], idx[pick(rng)]);
    }
    sel[l].assign(idx.begin(), idx.begin() + keep[l]);
    std::sort(sel[l].begin(), sel[l].end());
    w[l].assign(sel[l].size(), 1.0);
  }
  return detail::assemble(sg, sel, w);
}

// Sub-graph with given input/hidden/output dims and fresh weights; used for
// the table-sized reference model.
inline SubGraph make_subgraph(const std::vector<int>& input_dims, int d2, int d3, int p, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  SubGraph sub;
  for (std::size_t i = 0; i < input_dims.size(); ++i) {
    sub.feature_ids.push_back(static_cast<int>(i) + 1);
    sub.feature_slots.push_back(static_cast<int>(i));
    sub.input_dims.push_back(input_dims[i]);
    sub.input_scale.push_back(1.0);
  }
  sub.layer2_blocks = {0};
  sub.layer2_dims = {d2};
  sub.layer3_blocks = {0};
  sub.layer3_dims = {d3};
  sub.output_dim = p;
  for (int d : input_dims) {
    sub.edges1.push_back({DenseParams(d, d2, "theta.1")});
    sub.edges1.back()[0].init_uniform(rng);
  }
  sub.edges2 = {{DenseParams(d2, d3, "theta.2")}};
  sub.edges2[0][0].init_uniform(rng);
  sub.head = {DenseParams(d3, p, "theta.3")};
  sub.head[0].init_uniform(rng);
  return sub;
}

}  // namespace tinylight
