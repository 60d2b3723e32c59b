#pragma once

#include <cstdint>
#include <vector>

#include "safemarl/battlegrid/env.h"

namespace safemarl::env {

struct CorridorConfig {
  int n_agents = 10;
  int lane_length = 12;
  int hazards_per_lane = 2;
  // A hazard cell is live on steps where (step + phase) % period < live_steps.
  // live_steps == period makes every hazard permanently live.
  int hazard_period = 4;
  int hazard_live_steps = 2;
  double progress_reward = 0.1;
  double goal_bonus = 1.0;
  int max_steps = 40;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Hazard {
  int cell = 0;
  int phase = 0;
};

// Driving-style lanes: agent i moves along its own 1 x L lane (x is the lane
// cell, y the lane index). Standing on a live hazard cell terminates the
// agent. Actions: 0 wait, 1 advance, 2 retreat. The episode ends when every
// survivor is at the goal cell, when more than half the agents are gone, or
// on timeout.
class CorridorEnv final : public Environment {
 public:
  static constexpr int kWait = 0;
  static constexpr int kAdvance = 1;
  static constexpr int kRetreat = 2;
  static constexpr int kLookahead = 3;

  explicit CorridorEnv(CorridorConfig config);

  const CorridorConfig& config() const { return config_; }
  // Hazards for an episode seed; lane i uses entry i.
  std::vector<std::vector<Hazard>> hazards(std::uint64_t seed) const;
  bool hazard_live(const Hazard& h, int step) const;

  std::size_t n_agents() const override { return static_cast<std::size_t>(config_.n_agents); }
  std::size_t n_actions() const override { return 3; }
  std::size_t obs_size() const override { return 4 + 2 * kLookahead; }
  std::size_t state_size() const override { return n_agents() * obs_size(); }
  int max_steps() const override { return config_.max_steps; }

  ResetOutcome reset() const { return reset(config_.seed); }
  ResetOutcome reset(std::uint64_t seed) const override;
  StepOutcome step(const EnvState& state, std::span<const int> joint_action) const override;

  std::vector<Observation> observe(const EnvState& state) const override;
  std::vector<double> global_state(const EnvState& state) const override;
  std::vector<ActionMask> available_actions(const EnvState& state) const override;

 private:
  std::vector<std::vector<Hazard>> layout(const EnvState& s) const;

  CorridorConfig config_;
};

}  // namespace safemarl::env
