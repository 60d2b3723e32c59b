#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

namespace safemarl::env {

class EnvError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

using Observation = std::vector<double>;
using ActionMask = std::vector<std::uint8_t>;

struct Unit {
  int x = 0;
  int y = 0;
  int hp = 0;
  bool alive = false;
  bool operator==(const Unit&) const = default;
};

struct EnvState {
  std::vector<Unit> allies;
  std::vector<Unit> enemies;  // empty for the corridor
  int step = 0;
  bool done = false;
  std::uint64_t episode_seed = 0;
  std::mt19937_64 rng;
  bool operator==(const EnvState&) const = default;
};

struct StepResult {
  double reward = 0.0;
  int deaths_this_step = 0;  // allies only
  bool done = false;
  bool win = false;
  // Actions that were syntactically valid but had no effect (attack on a dead
  // or out-of-range target, move into a blocked cell).
  int ignored_actions = 0;
};

struct StepOutcome {
  EnvState state;
  std::vector<Observation> observations;
  StepResult result;
};

struct ResetOutcome {
  EnvState state;
  std::vector<Observation> observations;
};

// Common surface of the desk-scale Dec-POMDPs. Implementations are immutable;
// all episode state lives in EnvState, so one instance may serve any number
// of rollouts.
class Environment {
 public:
  virtual ~Environment() = default;

  virtual std::size_t n_agents() const = 0;
  virtual std::size_t n_actions() const = 0;
  virtual std::size_t obs_size() const = 0;
  virtual std::size_t state_size() const = 0;
  virtual int max_steps() const = 0;

  // Episode start for a specific seed (the config seed is the default).
  virtual ResetOutcome reset(std::uint64_t seed) const = 0;
  virtual StepOutcome step(const EnvState& state, std::span<const int> joint_action) const = 0;

  virtual std::vector<Observation> observe(const EnvState& state) const = 0;
  virtual std::vector<double> global_state(const EnvState& state) const = 0;
  virtual std::vector<ActionMask> available_actions(const EnvState& state) const = 0;
};

}  // namespace safemarl::env
