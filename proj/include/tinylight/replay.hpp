#pragma once

#include <cstddef>
#include <numeric>
#include <random>
#include <vector>

#include "tinylight/supergraph.hpp"

namespace tinylight {

struct Transition {
  Observation s;
  int a = 0;
  double r = 0.0;
  Observation s_next;
  bool done = false;
};

// Fixed-capacity ring; the oldest entry is overwritten once full.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 100000) : capacity_(capacity) {
    if (capacity_ == 0) throw ConfigError("replay buffer capacity must be positive");
  }

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return data_.size(); }
  std::size_t pushed() const { return pushed_; }

  void push(Transition t) {
    if (data_.size() < capacity_) {
      data_.push_back(std::move(t));
    } else {
      data_[head_] = std::move(t);
      head_ = (head_ + 1) % capacity_;
    }
    ++pushed_;
  }

  // Oldest first.
  const Transition& at(std::size_t k) const { return data_.at((head_ + k) % data_.size()); }

  // Distinct indices into the ring, uniform without replacement.
  template <class Rng>
  std::vector<std::size_t> sample_indices(std::size_t m, Rng& rng) const {
    if (m > data_.size()) throw Error("replay buffer: batch larger than buffer");
    std::vector<std::size_t> idx;
    idx.reserve(m);
    // Floyd's algorithm.
    std::vector<char> taken(data_.size(), 0);
    for (std::size_t j = data_.size() - m; j < data_.size(); ++j) {
      std::uniform_int_distribution<std::size_t> u(0, j);
      std::size_t t = u(rng);
      if (taken[t]) t = j;
      taken[t] = 1;
      idx.push_back(t);
    }
    return idx;
  }

  const Transition& raw(std::size_t i) const { return data_.at(i); }

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;
  std::size_t pushed_ = 0;
  std::vector<Transition> data_;
};

}  // namespace tinylight
