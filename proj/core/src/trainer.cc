#include "safemarl/trainloop/trainer.h"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "safemarl/diffcore/random.h"
#include "safemarl/diffcore/tape.h"

namespace safemarl::train {

using diff::GradientVector;
using diff::ParameterSet;
using diff::Tape;
using diff::Tensor;
using diff::Var;

namespace {

// Seed streams derived from the run seed.
constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kActStream = 2;
constexpr std::uint64_t kTrainStream = 3;
constexpr std::uint64_t kEpisodeStream = 4;
constexpr std::uint64_t kEvalStream = 5;

// Penalty added to the mean value of illegal actions before the max.
constexpr double kIllegalPenalty = 1e9;

std::vector<double> taus_for_step(const TrainConfig& config, std::mt19937_64& rng) {
  if (!config.distributional) return {0.5};
  return policy::sample_taus(rng, config.n_quantiles);
}

// Inputs of one time step for every (episode, agent) row of a padded batch.
// Step t == length uses the final next-observation; later steps are zeros.
struct StepInputs {
  Tensor obs;                         // R x input_size
  std::vector<std::size_t> actions;   // executed action per row (0 when padded)
  std::vector<env::ActionMask> avail;  // legal actions per row
  Tensor state;                       // B x state_size (valid when t < length)
  std::vector<double> valid;          // per episode, 1 when t < length
};

StepInputs gather_step(const policy::PolicyNet& net, const std::vector<const Episode*>& batch,
                       std::size_t t, std::size_t n, std::size_t n_actions, std::size_t state_size) {
  const std::size_t rows = batch.size() * n;
  const std::size_t width = net.config().input_size();
  StepInputs in{Tensor(rows, width), std::vector<std::size_t>(rows, 0), {}, Tensor(batch.size(), state_size),
                std::vector<double>(batch.size(), 0.0)};
  env::ActionMask noop_only(n_actions, 0);
  noop_only[0] = 1;
  in.avail.assign(rows, noop_only);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const Episode& ep = *batch[b];
    const std::size_t len = ep.length();
    if (t > len) continue;
    const Transition& tr = ep.steps[std::min(t, len - 1)];
    const auto& obs = t < len ? tr.obs : tr.next_obs;
    const auto& avail = t < len ? tr.avail : tr.next_avail;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t r = b * n + i;
      const auto row = net.input_row(obs[i], i);
      std::copy(row.begin(), row.end(), in.obs.data() + r * width);
      in.avail[r] = avail[i];
      if (t < len) in.actions[r] = static_cast<std::size_t>(tr.actions[i]);
    }
    if (t < len) {
      in.valid[b] = 1.0;
      std::copy(tr.state.begin(), tr.state.end(), in.state.data() + b * state_size);
    }
  }
  return in;
}

// Rows r*K + k of a (R*K) x U value tensor -> K values of action a_r, as R x K.
Tensor chosen_values(const Tensor& values, std::span<const std::size_t> actions, std::size_t k) {
  Tensor out(actions.size(), k);
  for (std::size_t r = 0; r < actions.size(); ++r) {
    for (std::size_t j = 0; j < k; ++j) out(r, j) = values(r * k + j, actions[r]);
  }
  return out;
}

std::size_t greedy_legal(const Tensor& values, std::size_t row, std::size_t k, const env::ActionMask& legal) {
  std::size_t best = 0;
  double best_q = -INFINITY;
  for (std::size_t u = 0; u < values.cols(); ++u) {
    if (!legal[u]) continue;
    double q = 0.0;
    for (std::size_t j = 0; j < k; ++j) q += values(row * k + j, u);
    q /= static_cast<double>(k);
    if (q > best_q) {
      best_q = q;
      best = u;
    }
  }
  return best;
}

std::size_t max_length(const std::vector<const Episode*>& batch) {
  std::size_t t = 0;
  for (const Episode* e : batch) t = std::max(t, e->length());
  return t;
}

bool all_finite(const GradientVector& g) {
  return std::all_of(g.values.begin(), g.values.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace

void TrainConfig::validate() const {
  auto open01 = [](double v) { return v > 0.0 && v < 1.0; };
  if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("gamma must lie in (0,1]");
  if (!open01(gamma_b)) throw std::invalid_argument("gamma_b must lie in (0,1)");
  if (!open01(lambda_b)) throw std::invalid_argument("lambda_b must lie in (0,1)");
  if (!(td_lambda >= 0.0 && td_lambda <= 1.0)) throw std::invalid_argument("td_lambda must lie in [0,1]");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be positive");
  if (batch_size == 0 || buffer_size == 0) throw std::invalid_argument("batch and buffer sizes must be positive");
  if (!(epsilon_start >= 0.0 && epsilon_start <= 1.0 && epsilon_end >= 0.0 && epsilon_end <= epsilon_start)) {
    throw std::invalid_argument("epsilon schedule must satisfy 0 <= end <= start <= 1");
  }
  if (target_update_interval == 0) throw std::invalid_argument("target_update_interval must be positive");
  for (double b : {beta_q, beta_b, beta_q_plus, beta_b_plus}) {
    if (!(b >= 0.0 && b <= 1.0)) throw std::invalid_argument("gradient weights must lie in [0,1]");
  }
  if (!(kappa > 0.0)) throw std::invalid_argument("kappa must be positive");
  if (!(grad_clip >= 0.0)) throw std::invalid_argument("grad_clip must be non-negative");
  if (epochs == 0 || eval_interval == 0 || eval_episodes == 0) {
    throw std::invalid_argument("epochs, eval_interval and eval_episodes must be positive");
  }
  if (n_quantiles == 0 || hidden == 0 || rnn_hidden == 0 || embed == 0 || head_hidden == 0 || mixer_embed == 0) {
    throw std::invalid_argument("network sizes must be positive");
  }
  if (!(dist_input_scale >= 0.0)) throw std::invalid_argument("dist_input_scale must be non-negative");
}

double TrainConfig::effective_omega(std::size_t n_agents) const {
  return omega >= 0.0 ? omega : static_cast<double>(n_agents) - 1.0;
}

double TrainConfig::epsilon_at(std::size_t env_steps) const {
  if (epsilon_anneal_steps == 0 || env_steps >= epsilon_anneal_steps) return epsilon_end;
  const double frac = static_cast<double>(env_steps) / static_cast<double>(epsilon_anneal_steps);
  return epsilon_start + frac * (epsilon_end - epsilon_start);
}

Agents::Agents(const env::Environment& env, const TrainConfig& config, std::mt19937_64& rng)
    : params(),
      policy(
          policy::PolicyConfig{env.obs_size(), env.n_agents(), env.n_actions(), config.hidden, config.rnn_hidden,
                               config.embed, config.head_hidden, config.samples(), config.dist_input_scale},
          params, rng),
      mixer(mix::MixerConfig{env.state_size(), env.n_agents(), env.obs_size() + env.n_actions(),
                             config.mixer_embed},
            params, rng) {}

std::vector<double> midpoint_taus(std::size_t k) {
  std::vector<double> t(k);
  for (std::size_t i = 0; i < k; ++i) t[i] = (static_cast<double>(i) + 0.5) / static_cast<double>(k);
  return t;
}

Episode run_episode(const Agents& agents, const TrainConfig& config, const env::Environment& env,
                    std::uint64_t seed, double epsilon, std::mt19937_64& rng, std::span<const double> taus) {
  const std::size_t n = env.n_agents();
  const std::size_t k = config.samples();
  auto start = env.reset(seed);
  env::EnvState st = std::move(start.state);
  std::vector<env::Observation> obs = std::move(start.observations);
  std::vector<double> state = env.global_state(st);
  std::vector<env::ActionMask> avail = env.available_actions(st);
  Tensor hidden = agents.policy.initial_hidden(n);
  Tensor prev = agents.policy.initial_prev(n);

  Episode ep;
  ep.seed = seed;
  bool done = false;
  while (!done) {
    const std::vector<double> step_taus =
        taus.empty() ? taus_for_step(config, rng) : std::vector<double>(taus.begin(), taus.end());
    const auto dists = agents.policy.step_agents(agents.params, obs, hidden, prev, step_taus);
    std::vector<int> actions(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t a = policy::select_action(dists[i], avail[i], epsilon, rng);
      actions[i] = static_cast<int>(a);
      if (config.distributional) {
        for (std::size_t j = 0; j < k; ++j) prev(i, j) = dists[i].values(j, a);
      }
    }
    auto out = env.step(st, actions);
    Transition tr;
    tr.obs = std::move(obs);
    tr.state = std::move(state);
    tr.avail = std::move(avail);
    tr.actions = actions;
    tr.reward = out.result.reward;
    tr.deaths = out.result.deaths_this_step;
    tr.done = out.result.done;
    st = std::move(out.state);
    obs = std::move(out.observations);
    state = env.global_state(st);
    avail = env.available_actions(st);
    tr.next_obs = obs;
    tr.next_state = state;
    tr.next_avail = avail;
    done = tr.done;
    ep.win = out.result.win;
    ep.steps.push_back(std::move(tr));
  }
  return ep;
}

std::vector<std::vector<double>> lambda_returns(std::span<const double> rewards,
                                                const std::vector<std::vector<double>>& next_values,
                                                double gamma, double td_lambda) {
  const std::size_t len = rewards.size();
  if (len == 0) throw std::invalid_argument("lambda_returns: empty episode");
  if (next_values.size() != len) throw std::invalid_argument("lambda_returns: one next-value row per step");
  const std::size_t k = next_values.front().size();
  std::vector<std::vector<double>> g(len, std::vector<double>(k));
  std::fill(g[len - 1].begin(), g[len - 1].end(), rewards[len - 1]);
  for (std::size_t t = len - 1; t-- > 0;) {
    if (next_values[t].size() != k) throw std::invalid_argument("lambda_returns: ragged next values");
    for (std::size_t j = 0; j < k; ++j) {
      g[t][j] = rewards[t] + gamma * ((1.0 - td_lambda) * next_values[t][j] + td_lambda * g[t + 1][j]);
    }
  }
  return g;
}

std::vector<std::vector<std::vector<double>>> compute_td_targets(const Agents& agents,
                                                                 const ParameterSet& target_params,
                                                                 const std::vector<const Episode*>& batch,
                                                                 std::span<const double> target_taus,
                                                                 const TrainConfig& config) {
  const auto& net = agents.policy;
  const std::size_t n = net.config().n_agents;
  const std::size_t u = net.config().n_actions;
  const std::size_t k = target_taus.size();
  const std::size_t state_size = agents.mixer.config().state_size;
  const std::size_t t_max = max_length(batch);
  const std::size_t rows = batch.size() * n;

  // next[b][t] = joint target samples at the state after step t.
  std::vector<std::vector<std::vector<double>>> next(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) next[b].assign(batch[b]->length(), std::vector<double>(k, 0.0));

  Tensor hidden = net.initial_hidden(rows);
  Tensor prev = net.initial_prev(rows);
  for (std::size_t t = 0; t <= t_max; ++t) {
    StepInputs in = gather_step(net, batch, t, n, u, state_size);
    Tape tape;
    auto step = net.forward(tape, target_params, tape.constant(std::move(in.obs)), tape.constant(hidden),
                            tape.constant(prev), target_taus);
    const Tensor& values = step.values.value();
    hidden = step.hidden.value();
    if (config.distributional) prev = chosen_values(values, in.actions, k);
    if (t == 0) continue;
    for (std::size_t b = 0; b < batch.size(); ++b) {
      if (t > batch[b]->length()) continue;
      auto& row = next[b][t - 1];
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t r = b * n + i;
        const std::size_t a = greedy_legal(values, r, k, in.avail[r]);
        for (std::size_t j = 0; j < k; ++j) row[j] += values(r * k + j, a);
      }
    }
  }

  std::vector<std::vector<std::vector<double>>> targets(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    std::vector<double> rewards;
    for (const auto& s : batch[b]->steps) rewards.push_back(s.reward);
    targets[b] = lambda_returns(rewards, next[b], config.gamma, config.td_lambda);
  }
  return targets;
}

GradientVector combine_gradients(const GradientVector& g_q, const GradientVector& g_b, const TrainConfig& config,
                                 bool& conflict) {
  losses::GradientPair pair(g_q, g_b,
                            losses::CombineWeights{config.beta_q, config.beta_b, config.beta_q_plus,
                                                   config.beta_b_plus});
  conflict = !g_q.is_zero() && !g_b.is_zero() && pair.conflicting();
  return losses::pcgrad_combine(pair);
}

LossGradients loss_gradients(const Agents& agents, const ParameterSet& target_params,
                             const std::vector<const Episode*>& batch, const Episode& on_policy,
                             const TrainConfig& config, std::mt19937_64& rng) {
  if (batch.empty()) throw std::invalid_argument("train step: empty batch");
  const auto& net = agents.policy;
  const std::size_t n = net.config().n_agents;
  const std::size_t u = net.config().n_actions;
  const std::size_t k = config.samples();
  const std::size_t state_size = agents.mixer.config().state_size;
  const std::size_t t_max = max_length(batch);
  const std::size_t rows = batch.size() * n;

  const std::vector<double> taus = taus_for_step(config, rng);
  const std::vector<double> target_taus = taus_for_step(config, rng);
  const auto targets = compute_td_targets(agents, target_params, batch, target_taus, config);

  double n_valid = 0.0;
  for (const Episode* e : batch) n_valid += static_cast<double>(e->length());

  LossGradients out;
  Tape tape;
  Var hidden = tape.constant(net.initial_hidden(rows));
  Tensor prev = net.initial_prev(rows);
  Var total;
  bool have_total = false;
  for (std::size_t t = 0; t < t_max; ++t) {
    StepInputs in = gather_step(net, batch, t, n, u, state_size);
    auto step = net.forward(tape, agents.params, tape.constant(std::move(in.obs)), hidden, tape.constant(prev), taus);
    hidden = step.hidden;
    if (config.distributional) prev = chosen_values(step.values.value(), in.actions, k);

    // Chosen-action samples, their mean Q, and the legal-max state value V.
    std::vector<std::size_t> sample_actions(rows * k);
    Tensor penalty(rows, u, 0.0);
    Tensor features(rows, net.config().obs_size + u);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < k; ++j) sample_actions[r * k + j] = in.actions[r];
      for (std::size_t a = 0; a < u; ++a) {
        if (!in.avail[r][a]) penalty(r, a) = -kIllegalPenalty;
      }
    }
    for (std::size_t b = 0; b < batch.size(); ++b) {
      if (t >= batch[b]->length()) continue;
      const Transition& tr = batch[b]->steps[t];
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t r = b * n + i;
        std::copy(tr.obs[i].begin(), tr.obs[i].end(), features.data() + r * features.cols());
        features(r, net.config().obs_size + in.actions[r]) = 1.0;
      }
    }
    Var z = diff::reshape(diff::gather_cols(step.values, sample_actions), rows, k);
    Var q = diff::row_mean(z);
    Var v = diff::row_max(diff::add(diff::group_mean_rows(step.values, k), tape.constant(std::move(penalty))));
    Var a = diff::sub(q, v);
    Var lambda = agents.mixer.lambda_weights(tape, agents.params, tape.constant(std::move(in.state)),
                                             tape.constant(std::move(features)));
    Var joint = mix::mix_joint(v, a, lambda, z, q, n);

    Tensor target(batch.size(), k);
    std::vector<double> weights(batch.size(), 0.0);
    for (std::size_t b = 0; b < batch.size(); ++b) {
      if (t >= batch[b]->length()) continue;
      weights[b] = 1.0 / n_valid;
      for (std::size_t j = 0; j < k; ++j) target(b, j) = targets[b][t][j];
    }
    Var loss_t = losses::huber_quantile_loss(joint, target, taus, config.kappa, weights);
    total = have_total ? diff::add(total, loss_t) : loss_t;
    have_total = true;
  }
  out.report.l_q = total.item();
  out.g_q = tape.backward(total, agents.params);

  out.g_b = GradientVector(agents.params.total_size());
  const std::vector<int> deaths = on_policy.deaths();
  const double v_b = static_cast<double>(on_policy.total_deaths());
  if (config.use_barrier && v_b > config.effective_omega(n) && on_policy.length() >= 2) {
    const std::size_t len = on_policy.length();
    Tensor states(len, state_size);
    for (std::size_t t = 0; t < len; ++t) {
      std::copy(on_policy.steps[t].state.begin(), on_policy.steps[t].state.end(), states.data() + t * state_size);
    }
    Tape btape;
    Var predicted = diff::reshape(agents.mixer.predict_barrier(btape, agents.params, btape.constant(std::move(states))),
                                  1, len);
    const std::vector<double> empirical = losses::empirical_barrier(deaths, config.gamma_b);
    Var lb = diff::add(losses::barrier_invariance_loss(predicted, config.lambda_b),
                       losses::barrier_regression_loss(predicted, empirical));
    out.report.l_b = lb.item();
    out.report.barrier_active = true;
    out.g_b = btape.backward(lb, agents.params);
  }
  return out;
}

Trainer::Trainer(Agents& agents, const TrainConfig& config)
    : agents_(agents),
      config_(config),
      target_(agents.params),
      adam_(diff::AdamConfig{config.learning_rate}, agents.params.total_size()) {
  config_.validate();
}

LossReport Trainer::train_step(const std::vector<const Episode*>& batch, const Episode& on_policy,
                               std::mt19937_64& rng) {
  LossGradients lg = loss_gradients(agents_, target_, batch, on_policy, config_, rng);
  LossReport& rep = lg.report;
  if (!std::isfinite(rep.l_q) || !std::isfinite(rep.l_b) || !all_finite(lg.g_q) || !all_finite(lg.g_b)) {
    std::ostringstream msg;
    msg << "non-finite loss at train step " << steps_ << " (l_q=" << rep.l_q << ", l_b=" << rep.l_b
        << "); batch episode seeds:";
    for (const Episode* e : batch) msg << ' ' << e->seed;
    msg << "; on-policy seed " << on_policy.seed;
    throw TrainError(msg.str());
  }
  GradientVector g = combine_gradients(lg.g_q, lg.g_b, config_, rep.conflict);
  rep.grad_norm = g.norm();
  if (config_.grad_clip > 0.0 && rep.grad_norm > config_.grad_clip) g.scale(config_.grad_clip / rep.grad_norm);
  adam_.step(agents_.params, g);
  ++steps_;
  if (steps_ % config_.target_update_interval == 0) update_target();
  return rep;
}

EvalResult evaluate(const Agents& agents, const TrainConfig& config, const env::Environment& env,
                    std::size_t episodes, std::vector<Episode>* record) {
  if (episodes == 0) throw std::invalid_argument("evaluate: episode count must be positive");
  const std::vector<double> taus = midpoint_taus(config.samples());
  std::mt19937_64 rng(derive_seed(config.seed, kEvalStream, 0));
  EvalResult r;
  for (std::size_t i = 0; i < episodes; ++i) {
    Episode ep = run_episode(agents, config, env, derive_seed(config.seed, kEvalStream, i + 1), 0.0, rng, taus);
    r.win_rate += ep.win ? 1.0 : 0.0;
    r.mean_deaths += ep.total_deaths();
    r.mean_return += ep.total_return();
    if (record) record->push_back(std::move(ep));
  }
  const double d = static_cast<double>(episodes);
  r.win_rate /= d;
  r.mean_deaths /= d;
  r.mean_return /= d;
  return r;
}

std::vector<MetricsRow> run_training(const TrainConfig& config, const env::Environment& env,
                                     const EvalCallback& on_eval) {
  config.validate();
  std::mt19937_64 init_rng(derive_seed(config.seed, kInitStream, 0));
  Agents agents(env, config, init_rng);
  Trainer trainer(agents, config);
  ReplayBuffer buffer(config.buffer_size);
  std::mt19937_64 act_rng(derive_seed(config.seed, kActStream, 0));
  std::mt19937_64 train_rng(derive_seed(config.seed, kTrainStream, 0));

  std::vector<MetricsRow> rows;
  std::size_t env_steps = 0;
  double sum_lq = 0.0, sum_lb = 0.0, conflicts = 0.0, updates = 0.0;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const double eps = config.epsilon_at(env_steps);
    Episode ep = run_episode(agents, config, env, derive_seed(config.seed, kEpisodeStream, epoch), eps, act_rng);
    env_steps += ep.length();
    buffer.add(ep);
    if (buffer.size() >= config.batch_size) {
      const auto batch = buffer.sample(config.batch_size, train_rng);
      const LossReport rep = trainer.train_step(batch, ep, train_rng);
      sum_lq += rep.l_q;
      sum_lb += rep.l_b;
      conflicts += rep.conflict ? 1.0 : 0.0;
      updates += 1.0;
    }
    if (epoch % config.eval_interval == 0 || epoch == config.epochs) {
      const EvalResult ev = evaluate(agents, config, env, config.eval_episodes);
      MetricsRow row;
      row.epoch = epoch;
      row.steps = env_steps;
      row.mean_return = ev.mean_return;
      row.win_rate = ev.win_rate;
      row.deaths = ev.mean_deaths;
      if (updates > 0.0) {
        row.l_q = sum_lq / updates;
        row.l_b = sum_lb / updates;
        row.conflict_frac = conflicts / updates;
      }
      row.epsilon = config.epsilon_at(env_steps);
      sum_lq = sum_lb = conflicts = updates = 0.0;
      rows.push_back(row);
      if (on_eval) on_eval(row, agents);
    }
  }
  return rows;
}

}  // namespace safemarl::train
