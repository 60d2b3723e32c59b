#pragma once

#include <cstdint>

#include "safemarl/battlegrid/env.h"

namespace safemarl::env {

struct EnvConfig {
  int grid_width = 8;
  int grid_height = 6;
  int n_allies = 3;
  int n_enemies = 3;
  int ally_hp = 3;
  int enemy_hp = 3;
  int attack_damage = 1;
  int attack_range = 1;  // Chebyshev
  int sight_range = 3;   // Chebyshev
  int max_steps = 40;
  double kill_reward = 2.0;
  double win_reward = 5.0;
  double damage_reward_scale = 1.0;
  // Rewards are rescaled so a perfect episode returns this much; 0 keeps the
  // raw reward terms.
  double max_return = 20.0;
  std::uint64_t seed = 0;

  // Throws EnvError on an invalid combination.
  void validate() const;
  // Largest achievable episode return before rescaling.
  double raw_max_return() const;
  double reward_scale() const;
};

// Grid battle: allies (learners) against a deterministic scripted enemy team.
//
// Actions per ally: 0 noop, 1 north (y-1), 2 south (y+1), 3 east (x+1),
// 4 west (x-1), 5 + j attack enemy j. Allies act in index order, then each
// living enemy attacks the nearest ally in range or steps toward it.
class BattleEnv final : public Environment {
 public:
  static constexpr int kNoop = 0;
  static constexpr int kNorth = 1;
  static constexpr int kSouth = 2;
  static constexpr int kEast = 3;
  static constexpr int kWest = 4;
  static constexpr int kFirstAttack = 5;
  static constexpr std::size_t kUnitFeatures = 5;

  explicit BattleEnv(EnvConfig config);

  const EnvConfig& config() const { return config_; }

  std::size_t n_agents() const override { return static_cast<std::size_t>(config_.n_allies); }
  std::size_t n_actions() const override {
    return static_cast<std::size_t>(kFirstAttack + config_.n_enemies);
  }
  std::size_t obs_size() const override;
  std::size_t state_size() const override;
  int max_steps() const override { return config_.max_steps; }

  ResetOutcome reset() const { return reset(config_.seed); }
  ResetOutcome reset(std::uint64_t seed) const override;
  StepOutcome step(const EnvState& state, std::span<const int> joint_action) const override;

  std::vector<Observation> observe(const EnvState& state) const override;
  std::vector<double> global_state(const EnvState& state) const override;
  std::vector<ActionMask> available_actions(const EnvState& state) const override;

 private:
  EnvConfig config_;
};

}  // namespace safemarl::env
