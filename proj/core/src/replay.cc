#include "safemarl/trainloop/replay.h"

#include <stdexcept>

#include "safemarl/diffcore/random.h"

namespace safemarl::train {

std::vector<int> Episode::deaths() const {
  std::vector<int> d;
  d.reserve(steps.size());
  for (const auto& s : steps) d.push_back(s.deaths);
  return d;
}

int Episode::total_deaths() const {
  int d = 0;
  for (const auto& s : steps) d += s.deaths;
  return d;
}

double Episode::total_return() const {
  double r = 0.0;
  for (const auto& s : steps) r += s.reward;
  return r;
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw std::invalid_argument("replay buffer capacity must be positive");
}

void ReplayBuffer::add(Episode episode) {
  if (episode.steps.empty() || !episode.steps.back().done) {
    throw std::invalid_argument("replay buffer accepts complete episodes only");
  }
  if (episodes_.size() < capacity_) {
    episodes_.push_back(std::move(episode));
  } else {
    episodes_[next_] = std::move(episode);
  }
  next_ = (next_ + 1) % capacity_;
}

std::vector<const Episode*> ReplayBuffer::sample(std::size_t count, std::mt19937_64& rng) const {
  if (episodes_.empty()) throw std::logic_error("sampling from an empty replay buffer");
  std::vector<const Episode*> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(&episodes_[uniform_index(rng, episodes_.size())]);
  return out;
}

}  // namespace safemarl::train
