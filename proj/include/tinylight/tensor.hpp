#pragma once

#include <cmath>
#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "tinylight/common.hpp"

namespace tinylight {

// Row-major parameter storage with its gradient accumulator.
struct Tensor {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = true;

  Tensor() = default;
  Tensor(std::string n, std::size_t r, std::size_t c)
      : name(std::move(n)), rows(r), cols(c), value(r * c, 0.0), grad(r * c, 0.0) {}

  std::size_t size() const { return value.size(); }
  void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
  double& at(std::size_t r, std::size_t c) { return value[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return value[r * cols + c]; }
};

// Linear map y = W^T x + b with W stored fin x fout.
struct DenseParams {
  Tensor weight;
  Tensor bias;

  DenseParams() = default;
  DenseParams(std::size_t fin, std::size_t fout, const std::string& name = "dense")
      : weight(name + ".weight", fin, fout), bias(name + ".bias", 1, fout) {}

  std::size_t fin() const { return weight.rows; }
  std::size_t fout() const { return weight.cols; }
  std::size_t parameter_count() const { return weight.size() + bias.size(); }

  // Uniform +-sqrt(6 / (fin + fout)) weights, zero bias.
  template <class Rng>
  void init_uniform(Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fin() + fout()));
    std::uniform_real_distribution<double> u(-limit, limit);
    for (double& w : weight.value) w = u(rng);
    std::fill(bias.value.begin(), bias.value.end(), 0.0);
  }
};

// --- plain kernels -------------------------------------------------------

inline std::vector<double> linear(std::span<const double> x, const DenseParams& p) {
  if (x.size() != p.fin())
    throw ShapeError("linear: input has " + std::to_string(x.size()) + " entries, expected " +
                     std::to_string(p.fin()));
  const std::size_t fout = p.fout();
  std::vector<double> y(p.bias.value.begin(), p.bias.value.end());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double xi = x[i];
    if (xi == 0.0) continue;
    const double* w = &p.weight.value[i * fout];
    for (std::size_t j = 0; j < fout; ++j) y[j] += xi * w[j];
  }
  return y;
}

inline std::vector<double> relu(std::span<const double> x) {
  std::vector<double> y(x.begin(), x.end());
  for (double& v : y) v = v > 0.0 ? v : 0.0;
  return y;
}

inline std::vector<double> softmax(std::span<const double> z) {
  if (z.empty()) throw ShapeError("softmax: empty input");
  double mx = z[0];
  for (double v : z) {
    if (!std::isfinite(v)) throw Error("softmax: non-finite input");
    mx = std::max(mx, v);
  }
  std::vector<double> p(z.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) sum += (p[i] = std::exp(z[i] - mx));
  for (double& v : p) v /= sum;
  return p;
}

// -sum p log p with 0 log 0 = 0; rejects vectors that do not sum to one.
inline double entropy(std::span<const double> p) {
  double total = 0.0;
  for (double v : p) {
    if (!std::isfinite(v) || v < 0.0) throw Error("entropy: input is not a probability vector");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-6) throw Error("entropy: input does not sum to 1");
  double h = 0.0;
  for (double v : p)
    if (v > 0.0) h -= v * std::log(v);
  return h;
}

inline double td_target(double reward, std::span<const double> q_next_target, bool done, double gamma) {
  double mx = q_next_target.empty() ? 0.0 : q_next_target[0];
  for (double v : q_next_target) mx = std::max(mx, v);
  return reward + (done ? 0.0 : gamma * mx);
}

inline double td_loss(std::span<const double> q, int action, double reward, std::span<const double> q_next_target,
                      bool done, double gamma = 0.9) {
  if (action < 0 || static_cast<std::size_t>(action) >= q.size()) throw ShapeError("td_loss: action out of range");
  const double diff = td_target(reward, q_next_target, done, gamma) - q[action];
  return diff * diff;
}

// Lowest index wins ties.
inline int argmax(std::span<const double> q) {
  int best = 0;
  for (std::size_t i = 1; i < q.size(); ++i)
    if (q[i] > q[best]) best = static_cast<int>(i);
  return best;
}

}  // namespace tinylight
