#include "safemarl/mixnet/mixer_net.h"

#include <cmath>
#include <numeric>
#include <string>

namespace safemarl::mix {

using diff::ParameterSet;
using diff::Tape;
using diff::Tensor;
using diff::Var;

double JointQuantileBatch::mean() const {
  if (values.empty()) return 0.0;
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

void MixerConfig::validate() const {
  if (state_size == 0 || n_agents == 0 || agent_feature_size == 0 || embed == 0) {
    throw MixError("mixer config: sizes must be positive");
  }
  if (!(lambda_min > 0.0)) throw MixError("mixer config: lambda_min must be positive");
}

MixerNet::MixerNet(MixerConfig config, ParameterSet& params, std::mt19937_64& rng)
    : config_(config) {
  config_.validate();
  auto init = [&](std::size_t r, std::size_t c, std::size_t fan_in) {
    return diff::uniform_init(r, c, 1.0 / std::sqrt(static_cast<double>(fan_in)), rng);
  };
  const std::size_t e = config_.embed;
  const std::size_t lam_in = e + config_.agent_feature_size;
  enc_w_ = params.add("mixer.encoder.w", init(config_.state_size, e, config_.state_size));
  enc_b_ = params.add("mixer.encoder.b", init(1, e, config_.state_size));
  lam_w_ = params.add("mixer.lambda.w", init(lam_in, 1, lam_in));
  lam_b_ = params.add("mixer.lambda.b", init(1, 1, lam_in));
  bar_w_ = params.add("mixer.barrier.w", init(e, 1, e));
  bar_b_ = params.add("mixer.barrier.b", Tensor(1, 1));
}

Var MixerNet::encode(Tape& tape, const ParameterSet& params, Var state) const {
  if (state.cols() != config_.state_size) {
    throw diff::ShapeError("mixer encode: state width " + std::to_string(state.cols()) + ", expected " +
                           std::to_string(config_.state_size));
  }
  return diff::relu(diff::add(diff::matmul(state, tape.param(params, enc_w_)), tape.param(params, enc_b_)));
}

Var MixerNet::lambda_weights(Tape& tape, const ParameterSet& params, Var state, Var features) const {
  const std::size_t n = config_.n_agents;
  if (features.rows() != state.rows() * n || features.cols() != config_.agent_feature_size) {
    throw diff::ShapeError("lambda_weights: expected " + std::to_string(state.rows() * n) + " x " +
                           std::to_string(config_.agent_feature_size) + " agent features");
  }
  Var enc = diff::repeat_rows(encode(tape, params, state), n);
  const Var parts[] = {enc, features};
  Var pre = diff::add(diff::matmul(diff::concat_cols(parts), tape.param(params, lam_w_)),
                      tape.param(params, lam_b_));
  return diff::add_scalar(diff::softplus(pre), config_.lambda_min);
}

Var MixerNet::predict_barrier(Tape& tape, const ParameterSet& params, Var state) const {
  return diff::add(diff::matmul(encode(tape, params, state), tape.param(params, bar_w_)),
                   tape.param(params, bar_b_));
}

std::vector<double> MixerNet::lambda_weights(const ParameterSet& params, std::span<const double> state,
                                             const std::vector<std::vector<double>>& features) const {
  if (features.size() != config_.n_agents) throw MixError("lambda_weights: one feature row per agent");
  Tensor f(features.size(), config_.agent_feature_size);
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (features[i].size() != config_.agent_feature_size) {
      throw diff::ShapeError("lambda_weights: agent feature length mismatch");
    }
    for (std::size_t j = 0; j < features[i].size(); ++j) f(i, j) = features[i][j];
  }
  Tape tape;
  Var out = lambda_weights(tape, params, tape.constant(Tensor::row(state)), tape.constant(std::move(f)));
  const auto v = out.value().values();
  return {v.begin(), v.end()};
}

double MixerNet::predict_barrier(const ParameterSet& params, std::span<const double> state) const {
  Tape tape;
  return predict_barrier(tape, params, tape.constant(Tensor::row(state))).item();
}

Var mix_joint(Var v, Var a, Var lambda, Var z, Var q, std::size_t n_agents) {
  const std::size_t rows = z.rows();
  if (n_agents == 0 || rows % n_agents != 0) throw MixError("mix_joint: rows not divisible by agent count");
  for (Var c : {v, a, lambda, q}) {
    if (c.rows() != rows || c.cols() != 1) throw MixError("mix_joint: per-agent terms must be column vectors");
  }
  // Every per-agent scalar is broadcast across the K sample columns, so the
  // group sum adds V, lambda A and the centred samples in one pass.
  Var per_agent = diff::sub(diff::add(v, diff::mul(lambda, a)), q);
  return diff::group_sum_rows(diff::add(z, per_agent), n_agents);
}

JointQuantileBatch mix_joint_distribution(std::span<const double> v, std::span<const double> a,
                                          std::span<const double> lambda,
                                          const std::vector<std::vector<double>>& z,
                                          std::span<const double> taus) {
  const std::size_t n = v.size();
  if (n == 0) throw MixError("mix_joint_distribution: no agents");
  if (a.size() != n || lambda.size() != n || z.size() != n) {
    throw MixError("mix_joint_distribution: per-agent inputs differ in length");
  }
  const std::size_t k = taus.size();
  if (k == 0) throw MixError("mix_joint_distribution: no samples");
  for (std::size_t i = 0; i < n; ++i) {
    if (z[i].size() != k) {
      throw MixError("mix_joint_distribution: agent " + std::to_string(i) + " has " +
                     std::to_string(z[i].size()) + " samples, expected " + std::to_string(k));
    }
  }
  double mean_path = 0.0;
  std::vector<double> q(n);
  for (std::size_t i = 0; i < n; ++i) {
    mean_path += v[i] + lambda[i] * a[i];
    q[i] = std::accumulate(z[i].begin(), z[i].end(), 0.0) / static_cast<double>(k);
  }
  JointQuantileBatch out{std::vector<double>(taus.begin(), taus.end()), std::vector<double>(k, mean_path)};
  for (std::size_t j = 0; j < k; ++j) {
    for (std::size_t i = 0; i < n; ++i) out.values[j] += z[i][j] - q[i];
  }
  return out;
}

}  // namespace safemarl::mix
