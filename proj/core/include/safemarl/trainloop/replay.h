#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "safemarl/battlegrid/env.h"

namespace safemarl::train {

struct Transition {
  std::vector<env::Observation> obs;
  std::vector<double> state;
  std::vector<env::ActionMask> avail;
  std::vector<int> actions;
  double reward = 0.0;
  int deaths = 0;
  bool done = false;
  std::vector<env::Observation> next_obs;
  std::vector<double> next_state;
  std::vector<env::ActionMask> next_avail;
};

struct Episode {
  std::vector<Transition> steps;
  bool win = false;
  std::uint64_t seed = 0;

  std::size_t length() const { return steps.size(); }
  std::vector<int> deaths() const;
  int total_deaths() const;
  double total_return() const;
};

// Ring of complete episodes. Once full, each insertion overwrites the oldest.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void add(Episode episode);
  std::size_t size() const { return episodes_.size(); }
  std::size_t capacity() const { return capacity_; }
  const Episode& operator[](std::size_t i) const { return episodes_[i]; }

  // `count` episodes drawn uniformly with replacement.
  std::vector<const Episode*> sample(std::size_t count, std::mt19937_64& rng) const;

 private:
  std::size_t capacity_;
  std::size_t next_ = 0;
  std::vector<Episode> episodes_;
};

}  // namespace safemarl::train
