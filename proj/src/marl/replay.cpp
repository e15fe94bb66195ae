#include "cavmarl/marl/replay.hpp"

#include <stdexcept>
#include <string>

namespace cavmarl::marl {

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw std::invalid_argument("ReplayBuffer: capacity must be positive");
  data_.reserve(capacity);
}

void ReplayBuffer::push(Transition t) {
  if (data_.size() < capacity_) {
    data_.push_back(std::move(t));
  } else {
    data_[head_] = std::move(t);
    head_ = (head_ + 1) % capacity_;
  }
  size_ = data_.size();
}

const Transition& ReplayBuffer::at(std::size_t logical) const {
  if (logical >= size_) throw std::out_of_range("ReplayBuffer: index " + std::to_string(logical) + " out of range");
  return data_[(head_ + logical) % data_.size()];
}

std::optional<std::vector<std::size_t>> ReplayBuffer::sample_indices(std::size_t batch, Rng& rng) const {
  if (size_ < batch || batch == 0) return std::nullopt;
  std::vector<std::size_t> idx(batch);
  for (auto& i : idx) i = uniform_index(rng, size_);
  return idx;
}

std::optional<std::vector<const Transition*>> ReplayBuffer::sample(std::size_t batch, Rng& rng) const {
  auto idx = sample_indices(batch, rng);
  if (!idx) return std::nullopt;
  std::vector<const Transition*> out;
  out.reserve(batch);
  for (std::size_t i : *idx) out.push_back(&at(i));
  return out;
}

}  // namespace cavmarl::marl
