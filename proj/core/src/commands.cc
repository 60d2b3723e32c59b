#include "safemarl/harness/commands.h"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include "safemarl/certify/scenario.h"
#include "safemarl/harness/checkpoint.h"
#include "safemarl/harness/config.h"
#include "safemarl/harness/metrics.h"
#include "safemarl/trainloop/trainer.h"

namespace safemarl::harness {
namespace fs = std::filesystem;

namespace {

class CommandError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string shortest(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

RunConfig load_run_config(const RunSpec& spec) {
  RunConfig c;
  if (!spec.config_path.empty()) {
    if (!fs::exists(spec.config_path)) throw CommandError("config file does not exist: " + spec.config_path);
    c = load_config(spec.config_path);
  }
  apply_env_overrides(c);
  return c;
}

fs::path seed_dir(const RunSpec& spec, std::uint64_t seed) {
  fs::path dir = fs::path(spec.out_dir) / ("seed_" + std::to_string(seed));
  fs::create_directories(dir);
  return dir;
}

void write_eval_log(const fs::path& path, const train::Agents& agents, const RunConfig& c,
                    const env::Environment& env) {
  std::vector<train::Episode> episodes;
  train::evaluate(agents, c.train, env, c.certify.n_samples, &episodes);
  std::ofstream out(path);
  if (!out) throw CommandError("cannot write trajectory log " + path.string());
  env::TrajectoryLogWriter w(out, c.train.seed);
  for (std::size_t i = 0; i < episodes.size(); ++i) w.write(to_episode_log(episodes[i], i));
  if (!out.flush()) throw CommandError("write failed for trajectory log " + path.string());
}

struct TrainOutputs {
  fs::path metrics;
  fs::path dir;
  bool checkpoints = true;
};

std::vector<train::MetricsRow> train_one(const RunConfig& c, const TrainOutputs& o) {
  const std::string hash = config_hash(c);
  const auto env = c.make_env();
  MetricsWriter writer(o.metrics.string(), c.train.seed, hash);
  std::size_t evals = 0;
  return train::run_training(c.train, *env, [&](const train::MetricsRow& row, const train::Agents& agents) {
    writer.write(row);
    ++evals;
    if (!o.checkpoints) return;
    if (c.checkpoint_every > 0 && evals % c.checkpoint_every == 0) {
      save_checkpoint((o.dir / ("checkpoint_epoch" + std::to_string(row.epoch) + ".txt")).string(), agents.params,
                      hash);
    }
    if (row.epoch == c.train.epochs) {
      save_checkpoint((o.dir / "final.ckpt").string(), agents.params, hash);
      write_eval_log(o.dir / "eval_log.txt", agents, c, *env);
    }
  });
}

void summarize(std::ostream& out, const std::string& label, const std::vector<train::MetricsRow>& rows) {
  if (rows.empty()) return;
  const auto& last = rows.back();
  out << label << " epochs=" << last.epoch << " steps=" << last.steps << " win_rate=" << last.win_rate
      << " deaths=" << last.deaths << " return=" << last.mean_return << "\n";
}

int cmd_train(const RunSpec& spec, const RunConfig& base, std::ostream& out) {
  for (std::uint64_t seed : spec.seeds) {
    RunConfig c = base;
    c.train.seed = seed;
    const fs::path dir = seed_dir(spec, seed);
    const auto rows = train_one(c, {dir / "metrics.csv", dir, true});
    summarize(out, "seed=" + std::to_string(seed), rows);
  }
  return 0;
}

int cmd_eval(const RunSpec& spec, const RunConfig& base, std::ostream& out) {
  for (std::uint64_t seed : spec.seeds) {
    RunConfig c = base;
    c.train.seed = seed;
    const fs::path dir = seed_dir(spec, seed);
    const fs::path ckpt = spec.checkpoint_path.empty() ? dir / "final.ckpt" : fs::path(spec.checkpoint_path);
    if (!fs::exists(ckpt)) throw CommandError("checkpoint does not exist: " + ckpt.string());
    const auto env = c.make_env();
    std::mt19937_64 rng(0);
    train::Agents agents(*env, c.train, rng);
    load_checkpoint(ckpt.string(), agents.params);
    const auto r = train::evaluate(agents, c.train, *env, c.train.eval_episodes);
    write_eval_log(dir / "eval_log.txt", agents, c, *env);
    out << "seed=" << seed << " episodes=" << c.train.eval_episodes << " win_rate=" << r.win_rate
        << " mean_deaths=" << r.mean_deaths << " mean_return=" << r.mean_return << "\n";
  }
  return 0;
}

int cmd_verify(const RunSpec& spec, const RunConfig& c, std::ostream& out) {
  const auto env = c.make_env();
  const certify::SafetyQuery query = c.certify.query(env->n_agents());
  for (std::uint64_t seed : spec.seeds) {
    const fs::path dir = seed_dir(spec, seed);
    const fs::path log = spec.log_path.empty() ? dir / "eval_log.txt" : fs::path(spec.log_path);
    if (!fs::exists(log)) throw CommandError("trajectory log does not exist: " + log.string());
    const auto episodes = env::read_trajectory_log_file(log.string());
    const auto cert = certify::certify_policy(episodes, query);
    std::ofstream file(dir / "certificate.txt");
    if (!file) throw CommandError("cannot write certificate in " + dir.string());
    certify::write_certificate(file, query, cert);
    out << "seed=" << seed << " log=" << log.string() << "\n";
    certify::write_certificate(out, query, cert);
  }
  return 0;
}

int cmd_sweep(const RunSpec& spec, const RunConfig& base, std::ostream& out, const std::string& prefix,
              const std::vector<double>& values, void (*apply)(RunConfig&, double)) {
  fs::create_directories(spec.out_dir);
  const bool with_seed = spec.seeds.size() > 1;
  for (std::uint64_t seed : spec.seeds) {
    for (double v : values) {
      RunConfig c = base;
      c.train.seed = seed;
      apply(c, v);
      c.validate();
      const fs::path path = fs::path(spec.out_dir) / sweep_file_name(prefix, v, seed, with_seed);
      const auto rows = train_one(c, {path, {}, false});
      summarize(out, prefix + "=" + shortest(v) + " seed=" + std::to_string(seed), rows);
    }
  }
  return 0;
}

int cmd_smoke(const RunSpec& spec, std::ostream& out) {
  const auto start = std::chrono::steady_clock::now();
  RunConfig c;
  c.battle.grid_width = 4;
  c.battle.grid_height = 3;
  c.battle.n_allies = 2;
  c.battle.n_enemies = 2;
  c.battle.ally_hp = 2;
  c.battle.enemy_hp = 2;
  c.battle.max_steps = 12;
  c.train.epochs = 20;
  c.train.eval_interval = 10;
  c.train.eval_episodes = 5;
  c.train.batch_size = 4;
  c.train.hidden = c.train.rnn_hidden = c.train.embed = c.train.head_hidden = c.train.mixer_embed = 16;
  c.train.n_quantiles = 4;
  c.train.epsilon_anneal_steps = 100;
  c.certify.n_samples = 10;
  c.validate();
  fs::create_directories(spec.out_dir);
  for (std::uint64_t seed : spec.seeds) {
    c.train.seed = seed;
    const fs::path path = fs::path(spec.out_dir) / ("smoke_seed" + std::to_string(seed) + ".csv");
    train_one(c, {path, {}, false});
    const MetricsFile f = read_metrics_file(path.string());
    if (f.rows.empty()) throw CommandError("smoke: no metrics rows in " + path.string());
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  out << "smoke ok: " << spec.seeds.size() << " run(s) in " << secs << " s\n";
  return 0;
}

}  // namespace

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::istringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    if (item.empty()) throw std::invalid_argument("empty entry in seed list '" + text + "'");
    const auto dash = item.find('-');
    auto num = [&](const std::string& s) {
      std::uint64_t v = 0;
      auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc() || p != s.data() + s.size() || s.empty()) {
        throw std::invalid_argument("bad seed '" + s + "' in seed list");
      }
      return v;
    };
    if (dash == std::string::npos) {
      seeds.push_back(num(item));
    } else {
      const std::uint64_t lo = num(item.substr(0, dash));
      const std::uint64_t hi = num(item.substr(dash + 1));
      if (hi < lo) throw std::invalid_argument("descending seed range '" + item + "'");
      for (std::uint64_t s = lo; s <= hi; ++s) seeds.push_back(s);
    }
  }
  return seeds;
}

env::EpisodeLog to_episode_log(const train::Episode& episode, std::uint64_t id) {
  env::EpisodeLog log{id, {}};
  for (std::size_t t = 0; t < episode.steps.size(); ++t) {
    const auto& s = episode.steps[t];
    const bool last = t + 1 == episode.steps.size();
    log.steps.push_back(env::LogRecord{id, static_cast<int>(t), s.actions, s.reward, s.deaths, s.done,
                                       last && episode.win});
  }
  return log;
}

std::string sweep_file_name(const std::string& prefix, double value, std::uint64_t seed, bool with_seed) {
  std::string name = prefix + "_" + shortest(value);
  if (with_seed) name += "_seed" + std::to_string(seed);
  return name + ".csv";
}

int run_command(const RunSpec& spec, std::ostream& out, std::ostream& err) {
  try {
    static const char* known[] = {"train", "eval", "verify", "ablate-gamma-b", "ablate-beta", "smoke"};
    if (std::find(std::begin(known), std::end(known), spec.command) == std::end(known)) {
      throw CommandError("unknown command '" + spec.command +
                         "' (expected train, eval, verify, ablate-gamma-b, ablate-beta or smoke)");
    }
    if (spec.out_dir.empty()) throw CommandError("no output directory given");
    if (spec.seeds.empty()) throw CommandError("seed list is empty");
    if (spec.command == "smoke") return cmd_smoke(spec, out);
    const RunConfig c = load_run_config(spec);
    if (spec.command == "train") return cmd_train(spec, c, out);
    if (spec.command == "eval") return cmd_eval(spec, c, out);
    if (spec.command == "verify") return cmd_verify(spec, c, out);
    if (spec.command == "ablate-gamma-b") {
      return cmd_sweep(spec, c, out, "gamma_b", kGammaBSweep, [](RunConfig& r, double v) { r.train.gamma_b = v; });
    }
    return cmd_sweep(spec, c, out, "beta_q", kBetaQSweep, [](RunConfig& r, double v) {
      r.train.beta_q = r.train.beta_q_plus = v;
      r.train.beta_b = r.train.beta_b_plus = 1.0 - v;
    });
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace safemarl::harness
