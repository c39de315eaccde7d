#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "tinylight/optimizer.hpp"
#include "tinylight/replay.hpp"

namespace tinylight {

struct HyperParams {
  std::size_t buffer_capacity = 100000;
  std::size_t batch_size = 32;
  double gamma = 0.9;
  double epsilon_start = 0.1;
  double epsilon_end = 0.0;
  double tau = 0.1;
  double lr = 1e-3;
  double alpha_lr = 1e-2;
  double beta = 16.0;
  bool sgd = false;
  int search_episodes = 30;
  int refine_episodes = 30;
  int episode_seconds = 600;
  int refine_episode_seconds = 3600;
  bool keep_best = true;
  int decision_interval = 10;
  double reward_scale = 0.01;

  // All violated constraints, one message each.
  std::vector<std::string> violations() const {
    std::vector<std::string> v;
    if (batch_size == 0) v.push_back("batch_size must be positive");
    if (buffer_capacity < batch_size) v.push_back("buffer_capacity must be at least batch_size");
    if (!(gamma > 0.0 && gamma <= 1.0)) v.push_back("gamma must lie in (0, 1]");
    if (!(tau > 0.0 && tau <= 1.0)) v.push_back("tau must lie in (0, 1]");
    if (!(epsilon_start >= 0.0 && epsilon_start <= 0.1)) v.push_back("epsilon_start must lie in [0, 0.1]");
    if (!(epsilon_end >= 0.0 && epsilon_end <= epsilon_start)) v.push_back("epsilon_end must lie in [0, epsilon_start]");
    if (!(lr > 0.0)) v.push_back("lr must be positive");
    if (!(alpha_lr > 0.0)) v.push_back("alpha_lr must be positive");
    if (!(beta >= 0.0)) v.push_back("beta must be non-negative");
    if (search_episodes < 0 || refine_episodes < 0) v.push_back("episode counts must be non-negative");
    if (episode_seconds <= 0 || refine_episode_seconds <= 0) v.push_back("episode lengths must be positive");
    if (decision_interval <= 0) v.push_back("decision_interval must be positive");
    if (!(reward_scale > 0.0)) v.push_back("reward_scale must be positive");
    return v;
  }

  void validate() const {
    const auto v = violations();
    if (v.empty()) return;
    std::string msg = "invalid hyper-parameters:";
    for (const auto& s : v) msg += "\n  - " + s;
    throw ConfigError(msg);
  }

  // Linear decay reaching epsilon_end at the last search episode.
  double epsilon(int episode) const {
    if (search_episodes <= 1) return epsilon_end;
    const double f = std::clamp(static_cast<double>(episode) / static_cast<double>(search_episodes - 1), 0.0, 1.0);
    return epsilon_start + (epsilon_end - epsilon_start) * f;
  }
};

template <class Rng>
int dqn_act(std::span<const double> q, double epsilon, Rng& rng) {
  if (q.empty()) throw ShapeError("dqn_act: empty q vector");
  std::uniform_real_distribution<double> u(0.0, 1.0);
  if (epsilon > 0.0 && u(rng) < epsilon) {
    std::uniform_int_distribution<int> pick(0, static_cast<int>(q.size()) - 1);
    return pick(rng);
  }
  return argmax(q);
}

namespace detail {

inline void soft_update_tensors(const std::vector<Tensor*>& target, const std::vector<Tensor*>& online, double tau) {
  if (target.size() != online.size()) throw ShapeError("soft_update: parameter lists differ");
  for (std::size_t k = 0; k < target.size(); ++k) {
    if (target[k]->size() != online[k]->size()) throw ShapeError("soft_update: shape mismatch for " + target[k]->name);
    auto& t = target[k]->value;
    const auto& o = online[k]->value;
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = (1.0 - tau) * t[i] + tau * o[i];
  }
}

}  // namespace detail

// target <- (1 - tau) target + tau online over every parameter.
template <class Model>
void soft_update(Model& target, Model& online, double tau = 0.1) {
  detail::soft_update_tensors(target.theta_tensors(), online.theta_tensors(), tau);
  detail::soft_update_tensors(target.alpha_tensors(), online.alpha_tensors(), tau);
}

struct TrainLosses {
  double td = 0.0;
  double entropy = 0.0;
};

template <class Model>
concept HasAlpha = requires(Model m, Tape t) { m.record_entropy(t); };

template <class Model>
class DqnAgent {
 public:
  DqnAgent() = default;
  DqnAgent(Model model, const HyperParams& hp, std::uint64_t seed)
      : online(std::move(model)), target(online), buffer(hp.buffer_capacity), rng(seed), hp_(hp) {
    hp_.validate();
    theta_opt.config = {hp_.lr, 0.9, 0.999, 1e-8, hp_.sgd};
    alpha_opt.config = {hp_.alpha_lr, 0.9, 0.999, 1e-8, hp_.sgd};
  }

  Model online;
  Model target;
  OptimizerState theta_opt;
  OptimizerState alpha_opt;
  ReplayBuffer buffer{1};
  std::mt19937_64 rng;

  const HyperParams& hyper_params() const { return hp_; }

  int act(const Observation& obs, double epsilon) { return dqn_act(online.forward(obs), epsilon, rng); }

  // One theta update on mean L1 (alpha frozen), then for models with alpha
  // one alpha update on mean L1 + beta * L2 (theta frozen); finally the
  // target network is soft-updated.
  TrainLosses train_step(const std::vector<const Transition*>& batch) {
    if (batch.empty()) throw Error("train_step: empty batch");
    const double inv_m = 1.0 / static_cast<double>(batch.size());
    std::vector<double> y(batch.size());
    for (std::size_t k = 0; k < batch.size(); ++k) {
      const Transition& tr = *batch[k];
      y[k] = tr.done ? tr.r : td_target(tr.r, target.forward(tr.s_next), false, hp_.gamma);
    }
    TrainLosses out;
    auto theta = online.theta_tensors();
    auto alpha = online.alpha_tensors();
    auto set = [](const std::vector<Tensor*>& ts, bool on) {
      for (Tensor* t : ts) t->requires_grad = on;
    };
    auto td_pass = [&]() {
      double sum = 0.0;
      for (std::size_t k = 0; k < batch.size(); ++k) {
        tape_.clear();
        Tape::Var q = online.record(tape_, batch[k]->s);
        Tape::Var l = tape_.td_loss(q, batch[k]->a, y[k]);
        sum += tape_.scalar(l);
        tape_.backward(tape_.scale(l, inv_m));
      }
      return sum * inv_m;
    };

    set(alpha, false);
    set(theta, true);
    out.td = td_pass();
    opt_step(theta, theta_opt);

    if constexpr (HasAlpha<Model>) {
      set(theta, false);
      set(alpha, true);
      td_pass();
      tape_.clear();
      Tape::Var h = online.record_entropy(tape_);
      out.entropy = tape_.scalar(h);
      tape_.backward(tape_.scale(h, hp_.beta));
      opt_step(alpha, alpha_opt);
      set(theta, true);
    }
    for (Tensor* t : theta) t->zero_grad();
    for (Tensor* t : alpha) t->zero_grad();
    soft_update(target, online, hp_.tau);
    return out;
  }

  // Samples a batch once the buffer holds enough transitions.
  std::optional<TrainLosses> maybe_train() {
    if (buffer.size() < hp_.batch_size) return std::nullopt;
    const auto idx = buffer.sample_indices(hp_.batch_size, rng);
    std::vector<const Transition*> batch;
    for (std::size_t i : idx) batch.push_back(&buffer.raw(i));
    return train_step(batch);
  }

 private:
  HyperParams hp_;
  Tape tape_;
};

}  // namespace tinylight
