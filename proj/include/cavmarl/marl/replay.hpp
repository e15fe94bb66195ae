#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <vector>

#include "cavmarl/sim/env.hpp"

namespace cavmarl::marl {

struct Transition {
  std::vector<sim::Observation> x;       // per agent
  std::array<int, sim::kNumAgents> a{};  // executed actions
  std::array<double, sim::kNumAgents> r{};
  std::vector<sim::Observation> x_next;
  std::array<bool, sim::kNumAgents> done{};
};

/// Fixed-capacity FIFO of transitions. Logical index 0 is the oldest entry.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void push(Transition t);
  std::size_t size() const { return size_; }
  std::size_t capacity() const { return capacity_; }
  const Transition& at(std::size_t logical) const;

  /// Uniform draw with replacement; nullopt when fewer than `batch` entries.
  std::optional<std::vector<std::size_t>> sample_indices(std::size_t batch, Rng& rng) const;
  std::optional<std::vector<const Transition*>> sample(std::size_t batch, Rng& rng) const;

 private:
  std::size_t capacity_;
  std::vector<Transition> data_;
  std::size_t head_ = 0;  // next write slot once full
  std::size_t size_ = 0;
};

}  // namespace cavmarl::marl
