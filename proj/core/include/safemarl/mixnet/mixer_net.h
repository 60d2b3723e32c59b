#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "safemarl/diffcore/ops.h"
#include "safemarl/diffcore/params.h"

namespace safemarl::mix {

class MixError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Sampled joint return: values[k] at level taus[k].
struct JointQuantileBatch {
  std::vector<double> taus;
  std::vector<double> values;

  double mean() const;
};

struct MixerConfig {
  std::size_t state_size = 0;
  std::size_t n_agents = 1;
  std::size_t agent_feature_size = 0;  // observation length + action one-hot
  std::size_t embed = 64;              // width of the shared state encoder
  double lambda_min = 1e-3;

  void validate() const;
};

// Centralized mixer. A shared state encoder feeds both the lambda network and
// the barrier head:
//
//   enc(s)      = relu(W_s s + b_s)
//   lambda_i    = softplus(w_l . [enc(s), f_i] + b_l) + lambda_min
//   B_hat(s)    = w_b . enc(s) + b_b
//
// where f_i = [o_i, onehot(u_i)].
class MixerNet {
 public:
  MixerNet(MixerConfig config, diff::ParameterSet& params, std::mt19937_64& rng);

  const MixerConfig& config() const { return config_; }

  // G x state_size -> G x embed
  diff::Var encode(diff::Tape& tape, const diff::ParameterSet& params, diff::Var state) const;

  // state is G x state_size, features is (G*n) x agent_feature_size with
  // rows g*n + i. Returns (G*n) x 1.
  diff::Var lambda_weights(diff::Tape& tape, const diff::ParameterSet& params, diff::Var state,
                           diff::Var features) const;

  // G x state_size -> G x 1
  diff::Var predict_barrier(diff::Tape& tape, const diff::ParameterSet& params,
                            diff::Var state) const;

  // Single-state conveniences.
  std::vector<double> lambda_weights(const diff::ParameterSet& params, std::span<const double> state,
                                     const std::vector<std::vector<double>>& features) const;
  double predict_barrier(const diff::ParameterSet& params, std::span<const double> state) const;

 private:
  MixerConfig config_;
  diff::ParamId enc_w_, enc_b_;
  diff::ParamId lam_w_, lam_b_;
  diff::ParamId bar_w_, bar_b_;
};

// Joint samples for G groups of n agents:
//   joint[g, k] = sum_i V_i + sum_i lambda_i A_i + sum_i (Z_i[k] - Q_i)
// v, a, lambda and q are (G*n) x 1, z is (G*n) x K. Returns G x K.
diff::Var mix_joint(diff::Var v, diff::Var a, diff::Var lambda, diff::Var z, diff::Var q,
                    std::size_t n_agents);

// Value-level form for one state. z[i] holds agent i's K samples of the
// chosen action; Q_i is their mean.
JointQuantileBatch mix_joint_distribution(std::span<const double> v, std::span<const double> a,
                                          std::span<const double> lambda,
                                          const std::vector<std::vector<double>>& z,
                                          std::span<const double> taus);

}  // namespace safemarl::mix
