#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "tinylight/tensor.hpp"

namespace tinylight {

struct OptimizerConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  bool sgd = false;  // plain gradient descent instead of Adam
};

// Moments are kept per tensor, in the order the tensors are passed to step().
struct OptimizerState {
  OptimizerConfig config;
  long step_count = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

// One update over `params` using their accumulated gradients, then clears
// the gradients.
inline void opt_step(std::span<Tensor* const> params, OptimizerState& state) {
  const OptimizerConfig& c = state.config;
  if (state.m.empty()) {
    for (const Tensor* t : params) {
      state.m.emplace_back(t->size(), 0.0);
      state.v.emplace_back(t->size(), 0.0);
    }
  }
  if (state.m.size() != params.size()) throw ShapeError("opt_step: optimizer state does not match parameters");
  ++state.step_count;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step_count));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step_count));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& t = *params[k];
    if (state.m[k].size() != t.size()) throw ShapeError("opt_step: moment shape mismatch for " + t.name);
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double g = t.grad[i];
      if (c.sgd) {
        t.value[i] -= c.lr * g;
      } else {
        double& m = state.m[k][i];
        double& v = state.v[k][i];
        m = c.beta1 * m + (1.0 - c.beta1) * g;
        v = c.beta2 * v + (1.0 - c.beta2) * g * g;
        t.value[i] -= c.lr * (m / bc1) / (std::sqrt(v / bc2) + c.eps);
      }
    }
    t.zero_grad();
  }
}

}  // namespace tinylight
