#include "safemarl/battlegrid/corridor.h"

#include <algorithm>
#include <string>

#include "safemarl/diffcore/random.h"

namespace safemarl::env {

void CorridorConfig::validate() const {
  auto fail = [](const std::string& m) { throw EnvError("corridor config: " + m); };
  if (n_agents < 1) fail("n_agents must be positive");
  if (lane_length < 2) fail("lane_length must be at least 2");
  if (hazards_per_lane < 0 || hazards_per_lane > lane_length - 2) {
    fail("hazards_per_lane must fit strictly between start and goal");
  }
  if (hazard_period < 1 || hazard_live_steps < 0 || hazard_live_steps > hazard_period) {
    fail("hazard timing must satisfy 0 <= live_steps <= period");
  }
  if (max_steps < 1) fail("max_steps must be at least 1");
}

CorridorEnv::CorridorEnv(CorridorConfig config) : config_(config) { config_.validate(); }

std::vector<std::vector<Hazard>> CorridorEnv::hazards(std::uint64_t seed) const {
  std::vector<std::vector<Hazard>> lanes;
  lanes.reserve(static_cast<std::size_t>(config_.n_agents));
  for (int lane = 0; lane < config_.n_agents; ++lane) {
    std::mt19937_64 rng(derive_seed(seed, 0xc022, static_cast<std::uint64_t>(lane)));
    std::vector<int> cells;
    for (int c = 1; c <= config_.lane_length - 2; ++c) cells.push_back(c);
    for (std::size_t i = cells.size(); i > 1; --i) std::swap(cells[i - 1], cells[uniform_index(rng, i)]);
    std::vector<Hazard> hs;
    for (int h = 0; h < config_.hazards_per_lane; ++h) {
      hs.push_back(Hazard{cells[static_cast<std::size_t>(h)],
                          static_cast<int>(uniform_index(rng, static_cast<std::size_t>(config_.hazard_period)))});
    }
    std::sort(hs.begin(), hs.end(), [](const Hazard& a, const Hazard& b) { return a.cell < b.cell; });
    lanes.push_back(std::move(hs));
  }
  return lanes;
}

bool CorridorEnv::hazard_live(const Hazard& h, int step) const {
  return (step + h.phase) % config_.hazard_period < config_.hazard_live_steps;
}

std::vector<std::vector<Hazard>> CorridorEnv::layout(const EnvState& s) const {
  return hazards(s.episode_seed);
}

ResetOutcome CorridorEnv::reset(std::uint64_t seed) const {
  EnvState s;
  s.rng.seed(seed);
  s.episode_seed = seed;
  for (int i = 0; i < config_.n_agents; ++i) s.allies.push_back(Unit{0, i, 1, true});
  auto obs = observe(s);
  return ResetOutcome{std::move(s), std::move(obs)};
}

StepOutcome CorridorEnv::step(const EnvState& state, std::span<const int> joint_action) const {
  if (state.done) throw EnvError("corridor step: episode already finished");
  if (joint_action.size() != state.allies.size()) {
    throw EnvError("corridor step: expected " + std::to_string(state.allies.size()) +
                   " actions, got " + std::to_string(joint_action.size()));
  }
  for (std::size_t i = 0; i < joint_action.size(); ++i) {
    const int a = joint_action[i];
    if (a < 0 || a > kRetreat) {
      throw EnvError("corridor step: malformed action " + std::to_string(a) + " for agent " +
                     std::to_string(i));
    }
    if (!state.allies[i].alive && a != kWait) {
      throw EnvError("corridor step: dead agent " + std::to_string(i) + " must wait");
    }
  }

  StepOutcome out;
  EnvState& s = out.state;
  s = state;
  StepResult& r = out.result;
  const int goal = config_.lane_length - 1;
  const auto lanes = layout(s);

  for (std::size_t i = 0; i < s.allies.size(); ++i) {
    Unit& u = s.allies[i];
    const int a = joint_action[i];
    if (!u.alive || a == kWait) continue;
    if (u.x == goal || (a == kRetreat && u.x == 0)) {
      ++r.ignored_actions;
      continue;
    }
    u.x += a == kAdvance ? 1 : -1;
    r.reward += a == kAdvance ? config_.progress_reward : -config_.progress_reward;
    if (u.x == goal) r.reward += config_.goal_bonus;
  }

  s.step = state.step + 1;
  int eliminated = 0;
  for (std::size_t i = 0; i < s.allies.size(); ++i) {
    Unit& u = s.allies[i];
    if (u.alive && u.x != goal) {
      for (const Hazard& h : lanes[i]) {
        if (h.cell == u.x && hazard_live(h, s.step)) {
          u.alive = false;
          u.hp = 0;
          ++r.deaths_this_step;
          break;
        }
      }
    }
    if (!u.alive) ++eliminated;
  }

  const int survivors = config_.n_agents - eliminated;
  const bool all_home = std::all_of(s.allies.begin(), s.allies.end(),
                                    [&](const Unit& u) { return !u.alive || u.x == goal; });
  const bool wiped_out = 2 * eliminated > config_.n_agents;
  r.win = !wiped_out && survivors > 0 && all_home;
  r.done = wiped_out || all_home || s.step >= config_.max_steps;
  s.done = r.done;
  out.observations = observe(s);
  return out;
}

std::vector<Observation> CorridorEnv::observe(const EnvState& s) const {
  const auto lanes = layout(s);
  const int goal = config_.lane_length - 1;
  const double alive_frac =
      static_cast<double>(std::count_if(s.allies.begin(), s.allies.end(),
                                        [](const Unit& u) { return u.alive; })) /
      config_.n_agents;
  std::vector<Observation> all;
  for (std::size_t i = 0; i < s.allies.size(); ++i) {
    Observation o(obs_size(), 0.0);
    const Unit& u = s.allies[i];
    if (u.alive) {
      auto hazard_at = [&](int cell) -> const Hazard* {
        for (const Hazard& h : lanes[i]) {
          if (h.cell == cell) return &h;
        }
        return nullptr;
      };
      o[0] = static_cast<double>(u.x) / goal;
      o[1] = u.x == goal ? 1.0 : 0.0;
      o[2] = alive_frac;
      const Hazard* here = hazard_at(u.x);
      o[3] = here != nullptr && hazard_live(*here, s.step + 1) ? 1.0 : 0.0;
      for (int d = 1; d <= kLookahead; ++d) {
        const Hazard* h = hazard_at(u.x + d);
        o[2 + 2 * d] = h != nullptr ? 1.0 : 0.0;
        o[3 + 2 * d] = h != nullptr && hazard_live(*h, s.step + 1) ? 1.0 : 0.0;
      }
    }
    all.push_back(std::move(o));
  }
  return all;
}

std::vector<double> CorridorEnv::global_state(const EnvState& s) const {
  std::vector<double> g;
  g.reserve(state_size());
  for (const auto& o : observe(s)) g.insert(g.end(), o.begin(), o.end());
  return g;
}

std::vector<ActionMask> CorridorEnv::available_actions(const EnvState& s) const {
  const int goal = config_.lane_length - 1;
  std::vector<ActionMask> masks;
  for (const Unit& u : s.allies) {
    ActionMask m(n_actions(), 0);
    m[kWait] = 1;
    if (u.alive && u.x != goal && !s.done) {
      m[kAdvance] = 1;
      m[kRetreat] = u.x > 0 ? 1 : 0;
    }
    masks.push_back(std::move(m));
  }
  return masks;
}

}  // namespace safemarl::env
