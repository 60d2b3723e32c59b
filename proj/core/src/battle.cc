#include "safemarl/battlegrid/battle.h"

#include <algorithm>
#include <cstdlib>
#include <string>

#include "safemarl/diffcore/random.h"

namespace safemarl::env {
namespace {

int chebyshev(const Unit& a, const Unit& b) { return std::max(std::abs(a.x - b.x), std::abs(a.y - b.y)); }

int band_width(const EnvConfig& c) { return std::max(1, c.grid_width / 4); }

bool occupied(const EnvState& s, int x, int y) {
  auto hit = [&](const Unit& u) { return u.alive && u.x == x && u.y == y; };
  return std::any_of(s.allies.begin(), s.allies.end(), hit) ||
         std::any_of(s.enemies.begin(), s.enemies.end(), hit);
}

bool inside(const EnvConfig& c, int x, int y) {
  return x >= 0 && y >= 0 && x < c.grid_width && y < c.grid_height;
}

void move_offset(int action, int& dx, int& dy) {
  dx = 0;
  dy = 0;
  switch (action) {
    case BattleEnv::kNorth: dy = -1; break;
    case BattleEnv::kSouth: dy = 1; break;
    case BattleEnv::kEast: dx = 1; break;
    case BattleEnv::kWest: dx = -1; break;
    default: break;
  }
}

// Index of the nearest living unit in `targets`, lowest index on ties; -1 if
// none are alive.
int nearest(const Unit& from, const std::vector<Unit>& targets) {
  int best = -1;
  int best_d = 0;
  for (std::size_t j = 0; j < targets.size(); ++j) {
    if (!targets[j].alive) continue;
    const int d = chebyshev(from, targets[j]);
    if (best < 0 || d < best_d) {
      best = static_cast<int>(j);
      best_d = d;
    }
  }
  return best;
}

}  // namespace

void EnvConfig::validate() const {
  auto fail = [](const std::string& m) { throw EnvError("battle config: " + m); };
  if (grid_width < 2 || grid_height < 1) fail("grid must be at least 2 x 1");
  if (n_allies < 1 || n_enemies < 1) fail("unit counts must be positive");
  if (ally_hp < 1 || enemy_hp < 1) fail("hit points must be positive");
  if (attack_damage < 1) fail("attack_damage must be positive");
  if (attack_range < 0 || sight_range < 0) fail("ranges must be non-negative");
  if (attack_range > sight_range) fail("attack_range exceeds sight_range");
  if (max_steps < 1) fail("max_steps must be at least 1");
  if (max_return < 0.0) fail("max_return must be non-negative");
  if (raw_max_return() <= 0.0 && max_return > 0.0) fail("reward terms are all zero");
}

double EnvConfig::raw_max_return() const {
  return damage_reward_scale * n_enemies * enemy_hp + kill_reward * n_enemies + win_reward;
}

double EnvConfig::reward_scale() const {
  return max_return > 0.0 ? max_return / raw_max_return() : 1.0;
}

BattleEnv::BattleEnv(EnvConfig config) : config_(config) { config_.validate(); }

std::size_t BattleEnv::obs_size() const {
  return kUnitFeatures * static_cast<std::size_t>(config_.n_allies - 1 + config_.n_enemies) + 1;
}

std::size_t BattleEnv::state_size() const {
  return 3 * static_cast<std::size_t>(config_.n_allies + config_.n_enemies);
}

ResetOutcome BattleEnv::reset(std::uint64_t seed) const {
  const int bw = band_width(config_);
  const int capacity = bw * config_.grid_height;
  if (config_.n_allies > capacity || config_.n_enemies > capacity) {
    throw EnvError("battle reset: " + std::to_string(std::max(config_.n_allies, config_.n_enemies)) +
                   " units do not fit a deployment band of " + std::to_string(capacity) + " cells");
  }
  EnvState s;
  s.rng.seed(seed);
  s.episode_seed = seed;
  auto place = [&](int x0, int count, int hp) {
    std::vector<std::pair<int, int>> cells;
    for (int x = x0; x < x0 + bw; ++x) {
      for (int y = 0; y < config_.grid_height; ++y) cells.emplace_back(x, y);
    }
    for (std::size_t i = cells.size(); i > 1; --i) {
      std::swap(cells[i - 1], cells[uniform_index(s.rng, i)]);
    }
    std::vector<Unit> units;
    for (int i = 0; i < count; ++i) units.push_back(Unit{cells[i].first, cells[i].second, hp, true});
    return units;
  };
  s.allies = place(0, config_.n_allies, config_.ally_hp);
  s.enemies = place(config_.grid_width - bw, config_.n_enemies, config_.enemy_hp);
  auto obs = observe(s);
  return ResetOutcome{std::move(s), std::move(obs)};
}

StepOutcome BattleEnv::step(const EnvState& state, std::span<const int> joint_action) const {
  if (state.done) throw EnvError("battle step: episode already finished");
  if (joint_action.size() != state.allies.size()) {
    throw EnvError("battle step: expected " + std::to_string(state.allies.size()) + " actions, got " +
                   std::to_string(joint_action.size()));
  }
  const int n_act = static_cast<int>(n_actions());
  for (std::size_t i = 0; i < joint_action.size(); ++i) {
    const int a = joint_action[i];
    if (a < 0 || a >= n_act) {
      throw EnvError("battle step: malformed action " + std::to_string(a) + " for ally " +
                     std::to_string(i));
    }
    if (!state.allies[i].alive && a != kNoop) {
      throw EnvError("battle step: dead ally " + std::to_string(i) + " must submit noop");
    }
  }

  StepOutcome out;
  EnvState& s = out.state;
  s = state;
  StepResult& r = out.result;
  int damage = 0;
  int kills = 0;

  for (std::size_t i = 0; i < s.allies.size(); ++i) {
    Unit& me = s.allies[i];
    const int a = joint_action[i];
    if (!me.alive || a == kNoop) continue;
    if (a >= kFirstAttack) {
      Unit& target = s.enemies[static_cast<std::size_t>(a - kFirstAttack)];
      if (!target.alive || chebyshev(me, target) > config_.attack_range) {
        ++r.ignored_actions;
        continue;
      }
      const int dealt = std::min(config_.attack_damage, target.hp);
      target.hp -= dealt;
      damage += dealt;
      if (target.hp == 0) {
        target.alive = false;
        ++kills;
      }
    } else {
      int dx = 0;
      int dy = 0;
      move_offset(a, dx, dy);
      if (!inside(config_, me.x + dx, me.y + dy) || occupied(s, me.x + dx, me.y + dy)) {
        ++r.ignored_actions;
        continue;
      }
      me.x += dx;
      me.y += dy;
    }
  }

  const bool enemies_wiped =
      std::none_of(s.enemies.begin(), s.enemies.end(), [](const Unit& u) { return u.alive; });

  if (!enemies_wiped) {
    for (Unit& e : s.enemies) {
      if (!e.alive) continue;
      const int t = nearest(e, s.allies);
      if (t < 0) break;
      Unit& target = s.allies[static_cast<std::size_t>(t)];
      if (chebyshev(e, target) <= config_.attack_range) {
        target.hp -= std::min(config_.attack_damage, target.hp);
        if (target.hp == 0) {
          target.alive = false;
          ++r.deaths_this_step;
        }
        continue;
      }
      const int ddx = target.x - e.x;
      const int ddy = target.y - e.y;
      const int sx = ddx > 0 ? 1 : (ddx < 0 ? -1 : 0);
      const int sy = ddy > 0 ? 1 : (ddy < 0 ? -1 : 0);
      // Larger gap first (x on ties), then the other axis if blocked.
      std::pair<int, int> tries[2] = {{sx, 0}, {0, sy}};
      if (std::abs(ddy) > std::abs(ddx)) std::swap(tries[0], tries[1]);
      for (auto [mx, my] : tries) {
        if (mx == 0 && my == 0) continue;
        if (inside(config_, e.x + mx, e.y + my) && !occupied(s, e.x + mx, e.y + my)) {
          e.x += mx;
          e.y += my;
          break;
        }
      }
    }
  }

  const bool allies_wiped =
      std::none_of(s.allies.begin(), s.allies.end(), [](const Unit& u) { return u.alive; });
  s.step = state.step + 1;
  r.win = enemies_wiped;
  r.done = enemies_wiped || allies_wiped || s.step >= config_.max_steps;
  s.done = r.done;
  const double raw = config_.damage_reward_scale * damage + config_.kill_reward * kills +
                     (enemies_wiped ? config_.win_reward : 0.0);
  r.reward = raw * config_.reward_scale();
  out.observations = observe(s);
  return out;
}

std::vector<Observation> BattleEnv::observe(const EnvState& s) const {
  const double range = std::max(1, config_.sight_range);
  std::vector<Observation> all;
  all.reserve(s.allies.size());
  for (std::size_t i = 0; i < s.allies.size(); ++i) {
    Observation o(obs_size(), 0.0);
    const Unit& me = s.allies[i];
    if (me.alive) {
      std::size_t slot = 0;
      auto write = [&](const Unit& u, double max_hp, double type) {
        const int d = chebyshev(me, u);
        if (u.alive && d <= config_.sight_range) {
          double* f = o.data() + slot * kUnitFeatures;
          f[0] = (u.x - me.x) / range;
          f[1] = (u.y - me.y) / range;
          f[2] = d / range;
          f[3] = u.hp / max_hp;
          f[4] = type;
        }
        ++slot;
      };
      for (std::size_t j = 0; j < s.allies.size(); ++j) {
        if (j != i) write(s.allies[j], config_.ally_hp, 0.5);
      }
      for (const Unit& e : s.enemies) write(e, config_.enemy_hp, 1.0);
      o.back() = static_cast<double>(me.hp) / config_.ally_hp;
    }
    all.push_back(std::move(o));
  }
  return all;
}

std::vector<double> BattleEnv::global_state(const EnvState& s) const {
  std::vector<double> g;
  g.reserve(state_size());
  const double wx = std::max(1, config_.grid_width - 1);
  const double wy = std::max(1, config_.grid_height - 1);
  auto push = [&](const Unit& u, double max_hp) {
    if (u.alive) {
      g.push_back(u.x / wx);
      g.push_back(u.y / wy);
      g.push_back(u.hp / max_hp);
    } else {
      g.insert(g.end(), 3, 0.0);
    }
  };
  for (const Unit& u : s.allies) push(u, config_.ally_hp);
  for (const Unit& u : s.enemies) push(u, config_.enemy_hp);
  return g;
}

std::vector<ActionMask> BattleEnv::available_actions(const EnvState& s) const {
  std::vector<ActionMask> masks;
  for (const Unit& me : s.allies) {
    ActionMask m(n_actions(), 0);
    m[kNoop] = 1;
    if (me.alive && !s.done) {
      for (int a = kNorth; a <= kWest; ++a) {
        int dx = 0;
        int dy = 0;
        move_offset(a, dx, dy);
        if (inside(config_, me.x + dx, me.y + dy) && !occupied(s, me.x + dx, me.y + dy)) m[a] = 1;
      }
      for (std::size_t j = 0; j < s.enemies.size(); ++j) {
        const Unit& e = s.enemies[j];
        if (e.alive && chebyshev(me, e) <= config_.attack_range) m[kFirstAttack + j] = 1;
      }
    }
    masks.push_back(std::move(m));
  }
  return masks;
}

}  // namespace safemarl::env
