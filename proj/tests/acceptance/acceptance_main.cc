// Acceptance checks. Prints one PASS/FAIL line per criterion followed by the
// measurements behind it.
//
// Usage: safemarl_acceptance [--strict] [--only N[,N...]] [--seeds N] [--report FILE]
//
// --report also writes the verdict lines to FILE.
//
// The exit status is 0 once every selected criterion has been evaluated,
// whatever the verdicts; --strict turns any FAIL into exit status 1.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.h"
#include "safemarl/battlegrid/battle.h"
#include "safemarl/certify/scenario.h"
#include "safemarl/diffcore/gradcheck.h"
#include "safemarl/diffcore/random.h"
#include "safemarl/harness/commands.h"
#include "safemarl/harness/config.h"
#include "safemarl/harness/metrics.h"
#include "safemarl/losses/losses.h"
#include "safemarl/trainloop/trainer.h"

namespace {

using namespace safemarl;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

class ScratchDir {
 public:
  explicit ScratchDir(const std::string& tag)
      : path_(fs::temp_directory_path() / ("safemarl_accept_" + tag + "_" + std::to_string(std::random_device{}()))) {
    fs::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

// ---------------------------------------------------------------------------

Verdict gradient_fidelity() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(101);
  int checked = 0, redrawn = 0;
  double worst = 0.0;
  std::string worst_desc;
  while (checked < 100) {
    auto c = oracle::random_network_loss(rng);
    const auto rep = diff::finite_diff_report(c->loss, c->params, 1e-5);
    // Central differences straddling a ReLU or max kink measure a secant, not
    // the derivative; such draws are replaced.
    if (rep.kink_margin < 1e-3) {
      ++redrawn;
      continue;
    }
    ++checked;
    if (rep.max_relative_error > worst) {
      worst = rep.max_relative_error;
      worst_desc = c->description;
    }
  }
  const double secs = seconds_since(t0);
  Verdict v;
  v.pass = worst <= 1e-4 && secs < 120.0;
  v.detail = "configs=100 redrawn_near_kink=" + std::to_string(redrawn) + " max_rel_err=" + fmt("%.3e", worst) +
             " runtime=" + fmt("%.1f", secs) + "s worst=[" + worst_desc + "]";
  return v;
}

Verdict pcgrad_exactness() {
  using diff::GradientVector;
  std::mt19937_64 rng(202);
  double worst_orth = 0.0, worst_dot = 0.0;
  int conflicts = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 2 + uniform_index(rng, 30);
    GradientVector q(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      q[i] = uniform_real(rng, -1.0, 1.0);
      b[i] = uniform_real(rng, -1.0, 1.0);
    }
    // Bias half the draws toward conflict so both branches are exercised.
    if (trial % 2 == 0 && q.dot(b) > 0.0) b.scale(-1.0);
    const losses::GradientPair pair(q, b);
    if (pair.conflicting()) {
      ++conflicts;
      worst_orth = std::max(worst_orth, std::abs(losses::project_out(q, b).dot(b)));
      worst_orth = std::max(worst_orth, std::abs(losses::project_out(b, q).dot(q)));
    }
    const GradientVector g = losses::pcgrad_combine(pair);
    worst_dot = std::min({worst_dot, g.dot(q), g.dot(b)});
  }
  const GradientVector example =
      losses::pcgrad_combine(losses::GradientPair(GradientVector({1.0, 0.0}), GradientVector({-1.0, 1.0})));
  const bool example_exact = example == GradientVector({0.25, 0.75});
  Verdict v;
  v.pass = worst_orth <= 1e-10 && worst_dot >= -1e-10 && example_exact;
  v.detail = "pairs=1000 conflicting=" + std::to_string(conflicts) + " max_|proj.normal|=" + fmt("%.2e", worst_orth) +
             " min_g.dot=" + fmt("%.2e", worst_dot) + " example=(" + fmt("%.17g", example[0]) + ", " +
             fmt("%.17g", example[1]) + ")";
  return v;
}

Verdict barrier_recursion() {
  std::mt19937_64 rng(303);
  const double gammas[] = {0.4, 0.5, 0.7, 0.9, 0.99};
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<int> deaths(1 + uniform_index(rng, 200));
    const double rate = uniform_real(rng, 0.0, 0.5);
    for (int& d : deaths) d = uniform01(rng) < rate ? 1 + static_cast<int>(uniform_index(rng, 3)) : 0;
    const double g = gammas[trial % 5];
    const auto got = losses::empirical_barrier(deaths, g);
    const auto ref = oracle::discounted_deaths(deaths, g);
    for (std::size_t t = 0; t < deaths.size(); ++t) worst = std::max(worst, std::abs(got[t] - ref[t]));
  }
  Verdict v;
  v.pass = worst <= 1e-12;
  v.detail = "sequences=1000 max_abs_err=" + fmt("%.3e", worst);
  return v;
}

Verdict barrier_boundary() {
  std::mt19937_64 rng(404);
  int nonzero_on_series = 0, missed = 0, cases = 0;
  double smallest_positive = INFINITY;
  for (int trial = 0; trial < 1000; ++trial) {
    const double lambda_b = uniform_real(rng, 0.01, 0.99);
    std::vector<double> b(2 + uniform_index(rng, 60));
    b[0] = uniform_real(rng, 0.01, 20.0);
    for (std::size_t t = 1; t < b.size(); ++t) b[t] = (1.0 - lambda_b) * b[t - 1];
    if (losses::barrier_invariance_loss(b, lambda_b) != 0.0) ++nonzero_on_series;
    // An upward move of the first element only loosens its constraint, so
    // perturbations start at t = 1.
    for (std::size_t at = 1; at < b.size(); ++at) {
      auto p = b;
      p[at] += std::max(1e-9, std::abs(p[at])) * uniform_real(rng, 1e-6, 1.0);
      const double loss = losses::barrier_invariance_loss(p, lambda_b);
      ++cases;
      if (!(loss > 0.0)) ++missed;
      smallest_positive = std::min(smallest_positive, loss);
    }
  }
  Verdict v;
  v.pass = nonzero_on_series == 0 && missed == 0;
  v.detail = "series=1000 nonzero_on_series=" + std::to_string(nonzero_on_series) +
             " perturbations=" + std::to_string(cases) + " missed=" + std::to_string(missed) +
             " min_perturbed_loss=" + fmt("%.3e", smallest_positive);
  return v;
}

Verdict digm_consistency() {
  std::mt19937_64 rng(505);
  int agree = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const auto inst = oracle::random_digm_instance(rng, 3, 4);
    if (oracle::brute_force_joint_argmax(inst) == oracle::local_argmaxes(inst)) ++agree;
  }
  Verdict v;
  v.pass = agree == 500;
  v.detail = "instances=500 agree=" + std::to_string(agree);
  return v;
}

certify::SafetyQuery make_query(std::size_t n, std::size_t k, std::size_t m, double beta) {
  certify::SafetyQuery q;
  q.n_samples = n;
  q.removed = k;
  q.param_count = m;
  q.beta = beta;
  return q;
}

Verdict scenario_solver() {
  double worst_closed = 0.0;
  for (std::size_t n = 10; n <= 1000; ++n) {
    for (double beta : {0.01, 0.05, 0.1}) {
      const double eps = certify::epsilon_bound(make_query(n, 0, 1, beta));
      worst_closed = std::max(worst_closed, std::abs(eps - (1.0 - std::pow(beta, 1.0 / static_cast<double>(n)))));
    }
  }

  std::mt19937_64 rng(606);
  int monotone_fail = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 20 + uniform_index(rng, 481);
    const std::size_t m = 1 + uniform_index(rng, 3);
    const std::size_t k = uniform_index(rng, 15);
    const double beta = uniform_real(rng, 0.005, 0.3);
    const double base = certify::epsilon_bound(make_query(n, k, m, beta));
    if (certify::epsilon_bound(make_query(n, k + 1, m, beta)) < base) ++monotone_fail;
    if (certify::epsilon_bound(make_query(n + 1, k, m, beta)) > base) ++monotone_fail;
    if (certify::epsilon_bound(make_query(n, k, m, std::min(1.0, beta * 1.5))) > base) ++monotone_fail;
  }

  double worst_exact = 0.0;
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 1 + uniform_index(rng, 30);
    const std::size_t m = 1 + uniform_index(rng, std::min<std::size_t>(n, 3));
    const std::size_t k = uniform_index(rng, n - m + 1);
    const double eps = uniform01(rng);
    const double exact = oracle::exact_scenario_bound(n, k, m, eps);
    const double got = certify::scenario_bound(n, k, m, eps);
    worst_exact = std::max(worst_exact, std::abs(got - exact) / std::max(1.0, std::abs(exact)));
  }

  Verdict v;
  v.pass = worst_closed <= 1e-8 && monotone_fail == 0 && worst_exact <= 1e-10;
  v.detail = "closed_form_max_err=" + fmt("%.3e", worst_closed) + " monotonicity_violations=" +
             std::to_string(monotone_fail) + "/300 exact_max_rel_err=" + fmt("%.3e", worst_exact);
  return v;
}

// Settings of the desk-scale comparison. The environment is the default 3v3
// battle.
train::TrainConfig desk_config(std::uint64_t seed, bool barrier) {
  train::TrainConfig c;
  c.hidden = c.rnn_hidden = c.embed = c.head_hidden = c.mixer_embed = 32;
  c.epochs = 5000;
  c.eval_interval = 250;
  c.eval_episodes = 40;
  c.epsilon_anneal_steps = 30000;
  c.use_barrier = barrier;
  c.seed = seed;
  return c;
}

Verdict desk_training(int n_seeds) {
  const auto t0 = Clock::now();
  const env::BattleEnv env(env::EnvConfig{});
  const std::size_t quarter_epoch = desk_config(0, true).epochs / 4;
  std::vector<double> final_win, quarter_full, quarter_ablation;
  std::ostringstream per_seed;
  for (int s = 1; s <= n_seeds; ++s) {
    double q_full = NAN, q_none = NAN, win = NAN;
    for (bool barrier : {true, false}) {
      const auto rows = train::run_training(desk_config(static_cast<std::uint64_t>(s), barrier), env);
      for (const auto& r : rows) {
        if (r.epoch == quarter_epoch) (barrier ? q_full : q_none) = r.deaths;
      }
      if (barrier) win = rows.back().win_rate;
    }
    final_win.push_back(win);
    quarter_full.push_back(q_full);
    quarter_ablation.push_back(q_none);
    per_seed << " s" << s << "(win=" << fmt("%.3f", win) << " d25=" << fmt("%.3f", q_full) << "/"
             << fmt("%.3f", q_none) << ")";
    std::fprintf(stderr, "  desk-scale seed %d done after %.0f s\n", s, seconds_since(t0));
  }
  const double secs = seconds_since(t0);
  const double med_win = median(final_win);
  const double med_full = median(quarter_full), med_none = median(quarter_ablation);
  Verdict v;
  v.pass = med_win >= 0.8 && med_full < med_none && secs <= 1800.0;
  v.detail = "seeds=" + std::to_string(n_seeds) + " median_final_win=" + fmt("%.3f", med_win) +
             " median_deaths_at_25pct full=" + fmt("%.3f", med_full) + " no_barrier=" + fmt("%.3f", med_none) +
             " runtime=" + fmt("%.0f", secs) + "s per_seed:" + per_seed.str();
  return v;
}

const char* kTinyConfig = R"([env]
grid_width = 5
grid_height = 4
n_allies = 2
n_enemies = 2
max_steps = 12
[train]
epochs = 20
eval_interval = 5
eval_episodes = 3
batch_size = 4
hidden = 8
rnn_hidden = 8
embed = 8
head_hidden = 8
mixer_embed = 8
n_quantiles = 4
epsilon_anneal_steps = 200
)";

Verdict ablation_harness() {
  ScratchDir dir("ablate");
  const fs::path cfg = dir.path() / "tiny.cfg";
  std::ofstream(cfg) << kTinyConfig;
  const harness::RunConfig base = harness::load_config(cfg.string());
  const std::vector<std::uint64_t> seeds{0, 1};
  const std::size_t expected_rows = base.train.epochs / base.train.eval_interval;

  int files = 0, bad = 0;
  std::string problems;
  auto check = [&](const fs::path& path, const harness::RunConfig& expect) {
    ++files;
    try {
      const auto f = harness::read_metrics_file(path.string());
      std::size_t last_epoch = 0;
      bool ordered = true;
      for (const auto& r : f.rows) {
        ordered = ordered && r.epoch > last_epoch;
        last_epoch = r.epoch;
      }
      if (f.rows.size() != expected_rows || !ordered || f.seed != expect.train.seed ||
          f.config_hash != harness::config_hash(expect)) {
        ++bad;
        problems += " " + path.filename().string();
      }
    } catch (const std::exception& e) {
      ++bad;
      problems += " " + path.filename().string() + "(" + e.what() + ")";
    }
  };

  std::ostringstream out, err;
  const auto gdir = dir.path() / "gamma";
  const auto bdir = dir.path() / "beta";
  const int rc_g = harness::run_command({"ablate-gamma-b", cfg.string(), gdir.string(), seeds, "", ""}, out, err);
  const int rc_b = harness::run_command({"ablate-beta", cfg.string(), bdir.string(), seeds, "", ""}, out, err);
  for (std::uint64_t s : seeds) {
    for (double g : harness::kGammaBSweep) {
      harness::RunConfig c = base;
      c.train.seed = s;
      c.train.gamma_b = g;
      check(gdir / harness::sweep_file_name("gamma_b", g, s, true), c);
    }
    for (double bq : harness::kBetaQSweep) {
      harness::RunConfig c = base;
      c.train.seed = s;
      c.train.beta_q = c.train.beta_q_plus = bq;
      c.train.beta_b = c.train.beta_b_plus = 1.0 - bq;
      check(bdir / harness::sweep_file_name("beta_q", bq, s, true), c);
    }
  }
  Verdict v;
  v.pass = rc_g == 0 && rc_b == 0 && bad == 0 && files == 20;
  v.detail = "exit_codes=" + std::to_string(rc_g) + "," + std::to_string(rc_b) + " csv_files=" +
             std::to_string(files) + " rows_each=" + std::to_string(expected_rows) + " bad=" + std::to_string(bad) +
             problems + (err.str().empty() ? "" : " stderr=" + err.str());
  return v;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

Verdict determinism() {
  ScratchDir dir("determinism");
  const fs::path cfg = dir.path() / "run.cfg";
  // Default 3v3 battle with a short budget.
  std::ofstream(cfg) << "[train]\nepochs = 60\neval_interval = 20\neval_episodes = 5\nhidden = 16\nrnn_hidden = 16\n"
                        "embed = 16\nhead_hidden = 16\nmixer_embed = 16\nepsilon_anneal_steps = 500\n";
  std::ostringstream out, err;
  std::vector<std::string> csv;
  for (const char* run : {"a", "b"}) {
    const fs::path out_dir = dir.path() / run;
    if (harness::run_command({"train", cfg.string(), out_dir.string(), {7}, "", ""}, out, err) != 0) {
      return {false, "train failed: " + err.str()};
    }
    csv.push_back(slurp(out_dir / "seed_7" / "metrics.csv"));
  }
  Verdict v;
  v.pass = !csv[0].empty() && csv[0] == csv[1];
  v.detail = "bytes=" + std::to_string(csv[0].size()) + "/" + std::to_string(csv[1].size()) +
             (v.pass ? " identical" : " differ");
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  bool strict = false;
  std::string report_path;
  int n_seeds = 5;
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--strict") {
      strict = true;
    } else if (a == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      for (std::string tok; std::getline(ss, tok, ',');) only.insert(std::stoi(tok));
    } else if (a == "--seeds" && i + 1 < argc) {
      n_seeds = std::stoi(argv[++i]);
    } else if (a == "--report" && i + 1 < argc) {
      report_path = argv[++i];
    } else {
      std::cerr << "usage: safemarl_acceptance [--strict] [--only N[,N...]] [--seeds N] [--report FILE]\n";
      return 2;
    }
  }

  struct Criterion {
    int id;
    const char* name;
    std::function<Verdict()> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "gradient fidelity", gradient_fidelity},
      {2, "gradient surgery exactness", pcgrad_exactness},
      {3, "barrier recursion", barrier_recursion},
      {4, "barrier loss boundary", barrier_boundary},
      {5, "joint argmax consistency", digm_consistency},
      {6, "risk bound solver", scenario_solver},
      {7, "desk-scale training", [n_seeds] { return desk_training(n_seeds); }},
      {8, "ablation harness", ablation_harness},
      {9, "determinism", determinism},
  };

  std::ofstream report;
  if (!report_path.empty()) {
    report.open(report_path);
    if (!report) {
      std::cerr << "cannot write report " << report_path << "\n";
      return 2;
    }
  }
  auto emit = [&](const std::string& line) {
    std::cout << line << std::endl;
    if (report.is_open()) report << line << std::endl;
  };

  int failed = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.count(c.id)) continue;
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    if (!v.pass) ++failed;
    emit(std::string(v.pass ? "PASS" : "FAIL") + " [" + std::to_string(c.id) + "] " + c.name + ": " + v.detail);
  }
  emit("failed criteria: " + std::to_string(failed));
  return strict && failed > 0 ? 1 : 0;
}
