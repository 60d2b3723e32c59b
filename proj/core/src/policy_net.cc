#include "safemarl/policynet/policy_net.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "safemarl/diffcore/random.h"

namespace safemarl::policy {

using diff::ParameterSet;
using diff::Tape;
using diff::Tensor;
using diff::Var;

std::vector<double> QuantileBatch::mean_values() const {
  std::vector<double> q(n_actions(), 0.0);
  for (std::size_t k = 0; k < n_samples(); ++k) {
    for (std::size_t u = 0; u < n_actions(); ++u) q[u] += values(k, u);
  }
  for (double& v : q) v /= static_cast<double>(n_samples());
  return q;
}

double QuantileBatch::state_value() const {
  const auto q = mean_values();
  return *std::max_element(q.begin(), q.end());
}

std::vector<double> QuantileBatch::advantages() const {
  auto q = mean_values();
  const double v = *std::max_element(q.begin(), q.end());
  for (double& a : q) a -= v;
  return q;
}

void PolicyConfig::validate() const {
  if (obs_size == 0 || n_agents == 0 || n_actions == 0) {
    throw std::invalid_argument("policy config: observation, agent and action counts must be positive");
  }
  if (hidden == 0 || rnn_hidden == 0 || embed == 0 || head_hidden == 0 || n_quantiles == 0) {
    throw std::invalid_argument("policy config: layer widths must be positive");
  }
}

PolicyNet::PolicyNet(PolicyConfig config, ParameterSet& params, std::mt19937_64& rng)
    : config_(config) {
  config_.validate();
  const std::size_t in = config_.input_size();
  const std::size_t h = config_.rnn_hidden;
  auto init = [&](std::size_t r, std::size_t c, std::size_t fan_in) {
    return diff::uniform_init(r, c, 1.0 / std::sqrt(static_cast<double>(fan_in)), rng);
  };
  const std::size_t k = config_.n_quantiles;
  hyper_w_ = params.add("policy.hyper.w", init(k, config_.hidden * in, k));
  // Generated weights play the role of an input layer with fan-in `in`; the
  // positive bias keeps most of them alive at initialization.
  Tensor hb = init(1, config_.hidden * in, in);
  for (double& v : hb.values()) v = std::abs(v);
  hyper_b_ = params.add("policy.hyper.b", std::move(hb));
  in_b_ = params.add("policy.input.b", init(1, config_.hidden, in));
  gru_wx_ = params.add("policy.gru.wx", init(config_.hidden, 3 * h, h));
  gru_wh_ = params.add("policy.gru.wh", init(h, 3 * h, h));
  gru_bx_ = params.add("policy.gru.bx", init(1, 3 * h, h));
  gru_bh_ = params.add("policy.gru.bh", init(1, 3 * h, h));
  emb_w_ = params.add("policy.embed.w", init(config_.embed, h, config_.embed));
  emb_b_ = params.add("policy.embed.b", init(1, h, config_.embed));
  head_w1_ = params.add("policy.head.w1", init(h, config_.head_hidden, h));
  head_b1_ = params.add("policy.head.b1", init(1, config_.head_hidden, h));
  head_w2_ = params.add("policy.head.w2", init(config_.head_hidden, config_.n_actions, config_.head_hidden));
  head_b2_ = params.add("policy.head.b2", init(1, config_.n_actions, config_.head_hidden));
}

Var PolicyNet::hyper_input_weights(Tape& tape, const ParameterSet& params, Var prev_dist) const {
  if (prev_dist.cols() != config_.n_quantiles) {
    throw diff::ShapeError("hyper_input_weights: expected " + std::to_string(config_.n_quantiles) +
                           " distribution values, got " + std::to_string(prev_dist.cols()));
  }
  Var scaled = diff::scale(prev_dist, config_.dist_input_scale);
  Var pre = diff::add(diff::matmul(scaled, tape.param(params, hyper_w_)), tape.param(params, hyper_b_));
  return diff::relu(pre);
}

Var PolicyNet::quantile_embedding(Tape& tape, const ParameterSet& params,
                                  std::span<const double> taus) const {
  Tensor basis(taus.size(), config_.embed);
  for (std::size_t k = 0; k < taus.size(); ++k) {
    if (!(taus[k] > 0.0 && taus[k] < 1.0)) {
      throw std::invalid_argument("quantile level " + std::to_string(taus[k]) + " outside (0,1)");
    }
    for (std::size_t i = 0; i < config_.embed; ++i) {
      basis(k, i) = std::cos(std::numbers::pi * static_cast<double>(i) * taus[k]);
    }
  }
  Var pre = diff::add(diff::matmul(tape.constant(std::move(basis)), tape.param(params, emb_w_)),
                      tape.param(params, emb_b_));
  return diff::relu(pre);
}

PolicyStep PolicyNet::forward(Tape& tape, const ParameterSet& params, Var obs_in, Var hidden,
                              Var prev_dist, std::span<const double> taus) const {
  const std::size_t rows = obs_in.rows();
  const std::size_t h = config_.rnn_hidden;
  if (obs_in.cols() != config_.input_size()) {
    throw diff::ShapeError("policy forward: observation width " + std::to_string(obs_in.cols()) +
                           ", expected " + std::to_string(config_.input_size()));
  }
  if (hidden.rows() != rows || hidden.cols() != h || prev_dist.rows() != rows) {
    throw diff::ShapeError("policy forward: hidden/previous-distribution rows do not match observations");
  }
  if (taus.size() != config_.n_quantiles) {
    throw diff::ShapeError("policy forward: expected " + std::to_string(config_.n_quantiles) +
                           " quantile levels, got " + std::to_string(taus.size()));
  }

  Var w_in = hyper_input_weights(tape, params, prev_dist);
  Var x = diff::relu(diff::add(diff::batched_matvec(w_in, obs_in, config_.hidden),
                               tape.param(params, in_b_)));

  Var gx = diff::add(diff::matmul(x, tape.param(params, gru_wx_)), tape.param(params, gru_bx_));
  Var gh = diff::add(diff::matmul(hidden, tape.param(params, gru_wh_)), tape.param(params, gru_bh_));
  Var r = diff::sigmoid(diff::add(diff::slice_cols(gx, 0, h), diff::slice_cols(gh, 0, h)));
  Var z = diff::sigmoid(diff::add(diff::slice_cols(gx, h, h), diff::slice_cols(gh, h, h)));
  Var n = diff::tanh(diff::add(diff::slice_cols(gx, 2 * h, h), diff::mul(r, diff::slice_cols(gh, 2 * h, h))));
  Var h_next = diff::add(n, diff::mul(z, diff::sub(hidden, n)));

  const std::size_t k = taus.size();
  Var phi = quantile_embedding(tape, params, taus);
  Var mixed = diff::mul(diff::repeat_rows(h_next, k), diff::tile_rows(phi, rows));
  Var hid = diff::relu(diff::add(diff::matmul(mixed, tape.param(params, head_w1_)),
                                 tape.param(params, head_b1_)));
  Var values = diff::add(diff::matmul(hid, tape.param(params, head_w2_)), tape.param(params, head_b2_));
  return PolicyStep{values, h_next};
}

std::vector<double> PolicyNet::input_row(std::span<const double> obs, std::size_t agent) const {
  if (obs.size() != config_.obs_size) {
    throw diff::ShapeError("policy input: observation length " + std::to_string(obs.size()) +
                           ", expected " + std::to_string(config_.obs_size));
  }
  if (agent >= config_.n_agents) throw diff::ShapeError("policy input: agent index out of range");
  std::vector<double> row(obs.begin(), obs.end());
  row.resize(config_.input_size(), 0.0);
  row[config_.obs_size + agent] = 1.0;
  return row;
}

QuantileBatch PolicyNet::quantile_values(const ParameterSet& params, std::span<const double> obs,
                                         std::size_t agent, Tensor& hidden,
                                         std::span<const double> prev_dist,
                                         std::span<const double> taus) const {
  if (hidden.rows() != 1 || hidden.cols() != config_.rnn_hidden) {
    throw diff::ShapeError("quantile_values: hidden state must be 1 x " + std::to_string(config_.rnn_hidden));
  }
  Tape tape;
  PolicyStep s = forward(tape, params, tape.constant(Tensor::row(input_row(obs, agent))),
                         tape.constant(hidden), tape.constant(Tensor::row(prev_dist)), taus);
  hidden = s.hidden.value();
  return QuantileBatch{std::vector<double>(taus.begin(), taus.end()), s.values.value()};
}

std::vector<QuantileBatch> PolicyNet::step_agents(const ParameterSet& params,
                                                  std::span<const env::Observation> obs,
                                                  Tensor& hidden, const Tensor& prev,
                                                  std::span<const double> taus) const {
  const std::size_t n = obs.size();
  Tensor in(n, config_.input_size());
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = input_row(obs[i], i);
    std::copy(row.begin(), row.end(), in.data() + i * in.cols());
  }
  Tape tape;
  PolicyStep s = forward(tape, params, tape.constant(std::move(in)), tape.constant(hidden),
                         tape.constant(prev), taus);
  hidden = s.hidden.value();
  const Tensor& v = s.values.value();
  const std::size_t k = taus.size();
  std::vector<QuantileBatch> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].taus.assign(taus.begin(), taus.end());
    out[i].values = Tensor(k, v.cols());
    std::copy_n(v.data() + i * k * v.cols(), k * v.cols(), out[i].values.data());
  }
  return out;
}

std::size_t select_action(const QuantileBatch& batch, const env::ActionMask& legal, double epsilon,
                          std::mt19937_64& rng) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ActionError("select_action: epsilon outside [0,1]");
  if (legal.size() != batch.n_actions()) throw ActionError("select_action: mask width mismatch");
  std::vector<std::size_t> allowed;
  for (std::size_t u = 0; u < legal.size(); ++u) {
    if (legal[u]) allowed.push_back(u);
  }
  if (allowed.empty()) throw ActionError("select_action: no legal action");
  if (epsilon > 0.0 && uniform01(rng) < epsilon) return allowed[uniform_index(rng, allowed.size())];
  const auto q = batch.mean_values();
  std::size_t best = allowed.front();
  for (std::size_t u : allowed) {
    if (q[u] > q[best]) best = u;
  }
  return best;
}

ActResult act(const PolicyNet& net, const ParameterSet& params, std::span<const double> obs,
              std::size_t agent, Tensor& hidden, std::span<const double> prev_dist,
              std::span<const double> taus, const env::ActionMask& legal, double epsilon,
              std::mt19937_64& rng) {
  ActResult r;
  r.distribution = net.quantile_values(params, obs, agent, hidden, prev_dist, taus);
  r.action = select_action(r.distribution, legal, epsilon, rng);
  return r;
}

std::vector<double> sample_taus(std::mt19937_64& rng, std::size_t k) {
  std::vector<double> taus(k);
  // Midpoint of a 2^-53 grid cell: never exactly 0 or 1.
  for (double& t : taus) t = (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
  std::sort(taus.begin(), taus.end());
  return taus;
}

}  // namespace safemarl::policy
