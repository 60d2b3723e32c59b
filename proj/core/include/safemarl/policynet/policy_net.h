#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "safemarl/battlegrid/env.h"
#include "safemarl/diffcore/ops.h"
#include "safemarl/diffcore/params.h"

namespace safemarl::policy {

// Sampled return distribution of one agent: values(k, u) is the return of
// action u at quantile level taus[k].
struct QuantileBatch {
  std::vector<double> taus;
  diff::Tensor values;  // K x |U|

  std::size_t n_samples() const { return values.rows(); }
  std::size_t n_actions() const { return values.cols(); }
  // Q(u): mean over the K samples.
  std::vector<double> mean_values() const;
  // Dueling split by construction: V = max_u Q, A(u) = Q(u) - V.
  double state_value() const;
  std::vector<double> advantages() const;
};

struct PolicyConfig {
  std::size_t obs_size = 0;   // environment observation length
  std::size_t n_agents = 1;   // width of the appended agent-id one-hot
  std::size_t n_actions = 0;
  std::size_t hidden = 64;       // width of the hypernetwork-generated input layer
  std::size_t rnn_hidden = 64;   // gated recurrent cell width
  std::size_t embed = 64;        // cosine basis size of the quantile embedding
  std::size_t head_hidden = 64;  // hidden layer between embedding product and outputs
  std::size_t n_quantiles = 8;   // K; also the length of the previous-distribution input
  // Multiplies the previous-distribution input before the hypernetwork, so
  // returns of order 10 do not produce huge generated weights.
  double dist_input_scale = 0.05;

  std::size_t input_size() const { return obs_size + n_agents; }
  void validate() const;
};

// Output of one recurrent step over R rows (agents, or agents x episodes).
struct PolicyStep {
  diff::Var values;  // (R*K) x |U|; rows r*K .. r*K+K-1 belong to row r
  diff::Var hidden;  // R x rnn_hidden
};

// Shared local policy network. Parameters live in an external ParameterSet so
// that online and target copies share one layout.
//
//   W_in   = relu(hyper(prev_dist))            -- hidden x input, every entry >= 0
//   x      = relu(W_in * [obs, agent one-hot] + b_in)
//   h'     = GRU(x, h)
//   phi(t) = relu(sum_i cos(pi i t) w_i + b)
//   Z(t,u) = head(h' * phi(t))
class PolicyNet {
 public:
  PolicyNet(PolicyConfig config, diff::ParameterSet& params, std::mt19937_64& rng);

  const PolicyConfig& config() const { return config_; }

  // Non-negative generated input-layer weights, R x (hidden * input_size),
  // row-major per row (entry i*input_size + j is weight hidden_i <- input_j).
  diff::Var hyper_input_weights(diff::Tape& tape, const diff::ParameterSet& params,
                                diff::Var prev_dist) const;

  diff::Var quantile_embedding(diff::Tape& tape, const diff::ParameterSet& params,
                               std::span<const double> taus) const;

  PolicyStep forward(diff::Tape& tape, const diff::ParameterSet& params, diff::Var obs_in,
                     diff::Var hidden, diff::Var prev_dist, std::span<const double> taus) const;

  // Appends the one-hot agent id to a raw observation.
  std::vector<double> input_row(std::span<const double> obs, std::size_t agent) const;

  // Single-agent evaluation. Returns the quantile batch and advances `hidden`.
  QuantileBatch quantile_values(const diff::ParameterSet& params, std::span<const double> obs,
                                std::size_t agent, diff::Tensor& hidden,
                                std::span<const double> prev_dist,
                                std::span<const double> taus) const;

  // All agents at once: obs is one observation per agent, hidden is
  // n x rnn_hidden and prev is n x K (both updated in place).
  std::vector<QuantileBatch> step_agents(const diff::ParameterSet& params,
                                         std::span<const env::Observation> obs,
                                         diff::Tensor& hidden, const diff::Tensor& prev,
                                         std::span<const double> taus) const;

  diff::Tensor initial_hidden(std::size_t rows) const { return diff::Tensor(rows, config_.rnn_hidden); }
  diff::Tensor initial_prev(std::size_t rows) const { return diff::Tensor(rows, config_.n_quantiles); }

 private:
  PolicyConfig config_;
  diff::ParamId hyper_w_, hyper_b_, in_b_;
  diff::ParamId gru_wx_, gru_wh_, gru_bx_, gru_bh_;  // gates packed [r | z | n]
  diff::ParamId emb_w_, emb_b_;
  diff::ParamId head_w1_, head_b1_, head_w2_, head_b2_;
};

class ActionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Epsilon-greedy choice. With probability epsilon a uniform legal action,
// otherwise the legal action with the largest mean quantile value (lowest
// index on ties). Throws ActionError when no action is legal.
std::size_t select_action(const QuantileBatch& batch, const env::ActionMask& legal, double epsilon,
                          std::mt19937_64& rng);

struct ActResult {
  std::size_t action = 0;
  QuantileBatch distribution;
};

// quantile_values followed by select_action.
ActResult act(const PolicyNet& net, const diff::ParameterSet& params, std::span<const double> obs,
              std::size_t agent, diff::Tensor& hidden, std::span<const double> prev_dist,
              std::span<const double> taus, const env::ActionMask& legal, double epsilon,
              std::mt19937_64& rng);

// K quantile levels drawn uniformly from the open interval (0,1), ascending.
std::vector<double> sample_taus(std::mt19937_64& rng, std::size_t k);

}  // namespace safemarl::policy
