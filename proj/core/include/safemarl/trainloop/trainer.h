#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "safemarl/battlegrid/env.h"
#include "safemarl/diffcore/adam.h"
#include "safemarl/diffcore/params.h"
#include "safemarl/losses/losses.h"
#include "safemarl/mixnet/mixer_net.h"
#include "safemarl/policynet/policy_net.h"
#include "safemarl/trainloop/replay.h"

namespace safemarl::train {

class TrainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  double gamma = 0.99;
  double gamma_b = 0.5;
  double lambda_b = 0.5;
  double td_lambda = 0.6;
  double learning_rate = 1e-3;
  std::size_t batch_size = 8;     // episodes per update
  std::size_t buffer_size = 5000;  // episodes
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  std::size_t epsilon_anneal_steps = 50000;  // environment steps
  std::size_t target_update_interval = 200;  // train steps
  // Constraint threshold on total episode deaths; negative means n - 1.
  double omega = -1.0;
  double beta_q = 0.5;
  double beta_b = 0.5;
  double beta_q_plus = 0.5;
  double beta_b_plus = 0.5;
  double kappa = 1.0;
  double grad_clip = 10.0;  // global norm; 0 disables
  std::size_t epochs = 1000;
  std::size_t eval_interval = 50;  // epochs
  std::size_t eval_episodes = 20;

  std::size_t n_quantiles = 8;
  std::size_t hidden = 64;
  std::size_t rnn_hidden = 64;
  std::size_t embed = 64;
  std::size_t head_hidden = 64;
  std::size_t mixer_embed = 64;
  double dist_input_scale = 0.05;

  // Ablation switches: no barrier loss, and the expectation-only baseline
  // (one sample at tau = 0.5, no previous-distribution input).
  bool use_barrier = true;
  bool distributional = true;

  std::uint64_t seed = 0;

  void validate() const;
  double effective_omega(std::size_t n_agents) const;
  double epsilon_at(std::size_t env_steps) const;
  std::size_t samples() const { return distributional ? n_quantiles : 1; }
};

// Online parameters for the shared policy network and the mixer, in one set
// so that both losses produce gradients over the same flat vector.
struct Agents {
  diff::ParameterSet params;
  policy::PolicyNet policy;
  mix::MixerNet mixer;

  Agents(const env::Environment& env, const TrainConfig& config, std::mt19937_64& rng);
};

struct LossReport {
  double l_q = 0.0;
  double l_b = 0.0;
  double grad_norm = 0.0;  // of the combined gradient, before clipping
  bool conflict = false;
  bool barrier_active = false;
};

struct MetricsRow {
  std::size_t epoch = 0;
  std::size_t steps = 0;
  double mean_return = 0.0;
  double win_rate = 0.0;
  double deaths = 0.0;
  double l_q = 0.0;
  double l_b = 0.0;
  double conflict_frac = 0.0;
  double epsilon = 0.0;

  bool operator==(const MetricsRow&) const = default;
};

struct EvalResult {
  double win_rate = 0.0;
  double mean_deaths = 0.0;
  double mean_return = 0.0;
};

// Quantile levels used when acting greedily at evaluation time: the
// midpoints (k + 0.5) / K.
std::vector<double> midpoint_taus(std::size_t k);

// One episode with epsilon-greedy acting. When `taus` is empty, fresh levels
// are sampled every step from `rng`.
Episode run_episode(const Agents& agents, const TrainConfig& config, const env::Environment& env,
                    std::uint64_t seed, double epsilon, std::mt19937_64& rng,
                    std::span<const double> taus = {});

// Per-index lambda-returns for one episode. next_values[t] holds the K'
// target samples for the state after step t (ignored for the last step,
// which is terminal):
//   G[T-1] = r[T-1]
//   G[t]   = r[t] + gamma ((1 - lambda) next_values[t] + lambda G[t+1])
std::vector<std::vector<double>> lambda_returns(std::span<const double> rewards,
                                                const std::vector<std::vector<double>>& next_values,
                                                double gamma, double td_lambda);

// Target samples for every step of every batch episode, computed with the
// target parameters at the greedy (legal) next action.
std::vector<std::vector<std::vector<double>>> compute_td_targets(
    const Agents& agents, const diff::ParameterSet& target_params,
    const std::vector<const Episode*>& batch, std::span<const double> target_taus,
    const TrainConfig& config);

// Weighted combination of the two loss gradients, with projection when they
// conflict. Returns the combined vector and sets `conflict`.
diff::GradientVector combine_gradients(const diff::GradientVector& g_q, const diff::GradientVector& g_b,
                                       const TrainConfig& config, bool& conflict);

// Gradients of the two losses on one batch, without applying them.
struct LossGradients {
  LossReport report;
  diff::GradientVector g_q;
  diff::GradientVector g_b;
};
LossGradients loss_gradients(const Agents& agents, const diff::ParameterSet& target_params,
                             const std::vector<const Episode*>& batch, const Episode& on_policy,
                             const TrainConfig& config, std::mt19937_64& rng);

// Owns the optimizer and target parameters and applies the update rule.
class Trainer {
 public:
  Trainer(Agents& agents, const TrainConfig& config);

  LossReport train_step(const std::vector<const Episode*>& batch, const Episode& on_policy,
                        std::mt19937_64& rng);

  const diff::ParameterSet& target_params() const { return target_; }
  void update_target() { target_ = agents_.params; }
  std::size_t steps() const { return steps_; }

 private:
  Agents& agents_;
  TrainConfig config_;
  diff::ParameterSet target_;
  diff::Adam adam_;
  std::size_t steps_ = 0;
};

EvalResult evaluate(const Agents& agents, const TrainConfig& config, const env::Environment& env,
                    std::size_t episodes, std::vector<Episode>* record = nullptr);

// Called after every evaluation; `agents` holds the current parameters.
using EvalCallback = std::function<void(const MetricsRow&, const Agents&)>;

std::vector<MetricsRow> run_training(const TrainConfig& config, const env::Environment& env,
                                     const EvalCallback& on_eval = {});

}  // namespace safemarl::train
