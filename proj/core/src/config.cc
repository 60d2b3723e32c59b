#include "safemarl/harness/config.h"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <istream>
#include <optional>
#include <sstream>
#include <vector>

namespace safemarl::harness {
namespace {

using Check = std::optional<std::string> (*)(double);

std::optional<std::string> any(double) { return std::nullopt; }
std::optional<std::string> positive(double v) {
  return v > 0.0 ? std::nullopt : std::optional<std::string>("must be positive");
}
std::optional<std::string> non_negative(double v) {
  return v >= 0.0 ? std::nullopt : std::optional<std::string>("must be non-negative");
}
std::optional<std::string> open01(double v) {
  return v > 0.0 && v < 1.0 ? std::nullopt : std::optional<std::string>("must lie in (0,1)");
}
std::optional<std::string> closed01(double v) {
  return v >= 0.0 && v <= 1.0 ? std::nullopt : std::optional<std::string>("must lie in [0,1]");
}
std::optional<std::string> half_open01(double v) {
  return v > 0.0 && v <= 1.0 ? std::nullopt : std::optional<std::string>("must lie in (0,1]");
}

std::string format_value(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}
std::string format_value(std::size_t v) { return std::to_string(v); }
std::string format_value(int v) { return std::to_string(v); }
std::string format_value(bool v) { return v ? "true" : "false"; }

template <typename T>
std::optional<T> parse_value(const std::string& s) {
  T v{};
  const char* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || p != end) return std::nullopt;
  if constexpr (std::is_floating_point_v<T>) {
    if (!std::isfinite(v)) return std::nullopt;
  }
  return v;
}

template <>
std::optional<bool> parse_value<bool>(const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  return std::nullopt;
}

template <typename T>
const char* type_name() {
  if constexpr (std::is_same_v<T, bool>) return "a boolean (true/false)";
  else if constexpr (std::is_floating_point_v<T>) return "a number";
  else if constexpr (std::is_signed_v<T>) return "an integer";
  else return "a non-negative integer";
}

struct Field {
  std::string section;
  std::string key;
  std::function<std::optional<std::string>(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T, typename... Refs>
Field field(std::string section, std::string key, Check check, Refs... refs) {
  Field f{std::move(section), std::move(key), {}, {}};
  f.set = [check, refs...](RunConfig& c, const std::string& text) -> std::optional<std::string> {
    const auto v = parse_value<T>(text);
    if (!v) return std::string("expected ") + type_name<T>() + ", got '" + text + "'";
    if (auto bad = check(static_cast<double>(*v))) return *bad;
    ((refs(c) = *v), ...);
    return std::nullopt;
  };
  auto first = std::get<0>(std::tuple<Refs...>(refs...));
  f.get = [first](const RunConfig& c) { return format_value(first(const_cast<RunConfig&>(c))); };
  return f;
}

#define REF(member) [](RunConfig& c) -> decltype(auto) { return (c.member); }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> t;
    Field kind{"env", "kind", {}, {}};
    kind.set = [](RunConfig& c, const std::string& v) -> std::optional<std::string> {
      if (v != "battle" && v != "corridor") return "expected battle or corridor, got '" + v + "'";
      c.env_kind = v;
      return std::nullopt;
    };
    kind.get = [](const RunConfig& c) { return c.env_kind; };
    t.push_back(kind);

    t.push_back(field<int>("env", "grid_width", positive, REF(battle.grid_width)));
    t.push_back(field<int>("env", "grid_height", positive, REF(battle.grid_height)));
    t.push_back(field<int>("env", "n_allies", positive, REF(battle.n_allies)));
    t.push_back(field<int>("env", "n_enemies", positive, REF(battle.n_enemies)));
    t.push_back(field<int>("env", "ally_hp", positive, REF(battle.ally_hp)));
    t.push_back(field<int>("env", "enemy_hp", positive, REF(battle.enemy_hp)));
    t.push_back(field<int>("env", "attack_damage", positive, REF(battle.attack_damage)));
    t.push_back(field<int>("env", "attack_range", non_negative, REF(battle.attack_range)));
    t.push_back(field<int>("env", "sight_range", non_negative, REF(battle.sight_range)));
    t.push_back(field<double>("env", "kill_reward", non_negative, REF(battle.kill_reward)));
    t.push_back(field<double>("env", "win_reward", non_negative, REF(battle.win_reward)));
    t.push_back(field<double>("env", "damage_reward_scale", non_negative, REF(battle.damage_reward_scale)));
    t.push_back(field<double>("env", "max_return", non_negative, REF(battle.max_return)));
    t.push_back(field<int>("env", "max_steps", positive, REF(battle.max_steps), REF(corridor.max_steps)));
    t.push_back(field<int>("env", "n_agents", positive, REF(corridor.n_agents)));
    t.push_back(field<int>("env", "lane_length", positive, REF(corridor.lane_length)));
    t.push_back(field<int>("env", "hazards_per_lane", non_negative, REF(corridor.hazards_per_lane)));
    t.push_back(field<int>("env", "hazard_period", positive, REF(corridor.hazard_period)));
    t.push_back(field<int>("env", "hazard_live_steps", non_negative, REF(corridor.hazard_live_steps)));
    t.push_back(field<double>("env", "progress_reward", non_negative, REF(corridor.progress_reward)));
    t.push_back(field<double>("env", "goal_bonus", non_negative, REF(corridor.goal_bonus)));

    t.push_back(field<double>("train", "gamma", half_open01, REF(train.gamma)));
    t.push_back(field<double>("train", "gamma_b", open01, REF(train.gamma_b)));
    t.push_back(field<double>("train", "lambda_b", open01, REF(train.lambda_b)));
    t.push_back(field<double>("train", "td_lambda", closed01, REF(train.td_lambda)));
    t.push_back(field<double>("train", "learning_rate", positive, REF(train.learning_rate)));
    t.push_back(field<std::size_t>("train", "batch_size", positive, REF(train.batch_size)));
    t.push_back(field<std::size_t>("train", "buffer_size", positive, REF(train.buffer_size)));
    t.push_back(field<double>("train", "epsilon_start", closed01, REF(train.epsilon_start)));
    t.push_back(field<double>("train", "epsilon_end", closed01, REF(train.epsilon_end)));
    t.push_back(field<std::size_t>("train", "epsilon_anneal_steps", any, REF(train.epsilon_anneal_steps)));
    t.push_back(field<std::size_t>("train", "target_update_interval", positive, REF(train.target_update_interval)));
    t.push_back(field<double>("train", "omega", any, REF(train.omega)));
    t.push_back(field<double>("train", "beta_q", closed01, REF(train.beta_q)));
    t.push_back(field<double>("train", "beta_b", closed01, REF(train.beta_b)));
    t.push_back(field<double>("train", "beta_q_plus", closed01, REF(train.beta_q_plus)));
    t.push_back(field<double>("train", "beta_b_plus", closed01, REF(train.beta_b_plus)));
    t.push_back(field<double>("train", "kappa", positive, REF(train.kappa)));
    t.push_back(field<double>("train", "grad_clip", non_negative, REF(train.grad_clip)));
    t.push_back(field<std::size_t>("train", "epochs", positive, REF(train.epochs)));
    t.push_back(field<std::size_t>("train", "eval_interval", positive, REF(train.eval_interval)));
    t.push_back(field<std::size_t>("train", "eval_episodes", positive, REF(train.eval_episodes)));
    t.push_back(field<std::size_t>("train", "n_quantiles", positive, REF(train.n_quantiles)));
    t.push_back(field<std::size_t>("train", "hidden", positive, REF(train.hidden)));
    t.push_back(field<std::size_t>("train", "rnn_hidden", positive, REF(train.rnn_hidden)));
    t.push_back(field<std::size_t>("train", "embed", positive, REF(train.embed)));
    t.push_back(field<std::size_t>("train", "head_hidden", positive, REF(train.head_hidden)));
    t.push_back(field<std::size_t>("train", "mixer_embed", positive, REF(train.mixer_embed)));
    t.push_back(field<double>("train", "dist_input_scale", non_negative, REF(train.dist_input_scale)));
    t.push_back(field<bool>("train", "use_barrier", any, REF(train.use_barrier)));
    t.push_back(field<bool>("train", "distributional", any, REF(train.distributional)));
    t.push_back(field<std::uint64_t>("train", "seed", any, REF(train.seed)));
    t.push_back(field<std::size_t>("train", "checkpoint_every", any, REF(checkpoint_every)));

    t.push_back(field<std::size_t>("certify", "n_samples", positive, REF(certify.n_samples)));
    t.push_back(field<std::size_t>("certify", "removed", any, REF(certify.removed)));
    t.push_back(field<std::size_t>("certify", "param_count", positive, REF(certify.param_count)));
    t.push_back(field<double>("certify", "beta", half_open01, REF(certify.beta)));
    t.push_back(field<double>("certify", "omega", any, REF(certify.omega)));
    return t;
  }();
  return table;
}

#undef REF

const Field* find_field(const std::string& section, const std::string& key) {
  for (const Field& f : fields()) {
    if (f.section == section && f.key == key) return &f;
  }
  return nullptr;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string upper(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char ch) { return std::toupper(ch); });
  return s;
}

}  // namespace

certify::SafetyQuery CertifyDefaults::query(std::size_t n_agents) const {
  certify::SafetyQuery q;
  q.n_samples = n_samples;
  q.removed = removed;
  q.param_count = param_count;
  q.beta = beta;
  q.omega = omega >= 0.0 ? omega : static_cast<double>(n_agents) - 1.0;
  return q;
}

std::unique_ptr<env::Environment> RunConfig::make_env() const {
  if (env_kind == "battle") return std::make_unique<env::BattleEnv>(battle);
  if (env_kind == "corridor") return std::make_unique<env::CorridorEnv>(corridor);
  throw ConfigError("unknown environment kind '" + env_kind + "'");
}

void RunConfig::validate() const {
  try {
    if (env_kind == "battle") {
      battle.validate();
    } else if (env_kind == "corridor") {
      corridor.validate();
    } else {
      throw ConfigError("unknown environment kind '" + env_kind + "'");
    }
    train.validate();
    if (certify.removed + certify.param_count - 1 >= certify.n_samples) {
      throw ConfigError("certify: removed + param_count - 1 must be below n_samples");
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("invalid configuration: ") + e.what());
  }
}

RunConfig parse_config(std::istream& in, const std::string& source) {
  RunConfig c;
  std::string section;
  std::string line;
  std::size_t lineno = 0;
  auto fail = [&](const std::string& what) {
    throw ConfigError(source + ":" + std::to_string(lineno) + ": " + what);
  };
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail("malformed section header '" + line + "'");
      section = trim(line.substr(1, line.size() - 2));
      if (section != "env" && section != "train" && section != "certify") fail("unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail("expected key = value, got '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (section.empty()) fail("key '" + key + "' appears before any section");
    const Field* f = find_field(section, key);
    if (!f) fail("unknown key '" + key + "' in section [" + section + "]");
    if (auto bad = f->set(c, value)) fail(key + ": " + *bad);
  }
  c.validate();
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  return parse_config(in, path);
}

void apply_env_overrides(RunConfig& config, EnvLookup lookup) {
  if (!lookup) lookup = [](const char* name) -> const char* { return std::getenv(name); };
  for (const Field& f : fields()) {
    const std::string var = "MB_" + upper(f.section) + "_" + upper(f.key);
    const char* value = lookup(var.c_str());
    if (!value) continue;
    if (auto bad = f.set(config, trim(value))) throw ConfigError(var + ": " + f.key + ": " + *bad);
  }
  config.validate();
}

std::string serialize_config(const RunConfig& config) {
  std::ostringstream out;
  std::string section;
  for (const Field& f : fields()) {
    if (f.section != section) {
      if (!section.empty()) out << "\n";
      section = f.section;
      out << "[" << section << "]\n";
    }
    out << f.key << " = " << f.get(config) << "\n";
  }
  return out.str();
}

std::string config_hash(const RunConfig& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : serialize_config(config)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace safemarl::harness
