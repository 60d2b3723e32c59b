#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "oracles.h"
#include "safemarl/diffcore/adam.h"
#include "safemarl/diffcore/random.h"
#include "safemarl/mixnet/mixer_net.h"

namespace {

using namespace safemarl;
using diff::ParameterSet;
using diff::Tape;
using diff::Tensor;
using diff::Var;
using mix::MixerConfig;
using mix::MixerNet;

MixerConfig small_mixer() {
  MixerConfig c;
  c.state_size = 6;
  c.n_agents = 3;
  c.agent_feature_size = 5;
  c.embed = 8;
  return c;
}

std::vector<std::vector<double>> random_features(std::mt19937_64& rng, std::size_t n, std::size_t f,
                                                 double scale = 1.0) {
  std::vector<std::vector<double>> out(n, std::vector<double>(f));
  for (auto& row : out) {
    for (double& v : row) v = uniform_real(rng, -scale, scale);
  }
  return out;
}

std::vector<double> random_vector(std::mt19937_64& rng, std::size_t n, double scale = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = uniform_real(rng, -scale, scale);
  return v;
}

TEST(Lambda, AlwaysAboveFloor) {
  std::mt19937_64 rng(1);
  ParameterSet ps;
  MixerNet net(small_mixer(), ps, rng);
  // Push the softplus far into its flat region as well.
  ps.mutable_tensor(oracle::find_param(ps, "mixer.lambda.b")).fill(-800.0);
  for (int i = 0; i < 200; ++i) {
    const auto lam = net.lambda_weights(ps, random_vector(rng, 6, 10.0), random_features(rng, 3, 5, 10.0));
    ASSERT_EQ(lam.size(), 3u);
    for (double l : lam) EXPECT_GE(l, 1e-3);
  }
}

TEST(Lambda, ZeroParametersGiveSoftplusOfZero) {
  std::mt19937_64 rng(2);
  ParameterSet ps;
  MixerNet net(small_mixer(), ps, rng);
  ps.assign(std::vector<double>(ps.total_size(), 0.0));
  for (double l : net.lambda_weights(ps, random_vector(rng, 6), random_features(rng, 3, 5))) {
    EXPECT_NEAR(l, std::log(2.0) + 1e-3, 1e-15);
    EXPECT_NEAR(l, 0.6941, 1e-4);
  }
}

TEST(MixJoint, SingleAgentDegenerateIsIdentity) {
  const std::vector<double> taus{0.2, 0.5, 0.8};
  const auto out = mix::mix_joint_distribution(std::vector<double>{4.0}, std::vector<double>{-1.5},
                                               std::vector<double>{1.0}, {{2.5, 2.5, 2.5}}, taus);
  for (double v : out.values) EXPECT_DOUBLE_EQ(v, 2.5);
}

TEST(MixJoint, TwoAgentHandExample) {
  const std::vector<double> taus{0.25, 0.75};
  const auto out = mix::mix_joint_distribution(std::vector<double>{1.0, 2.0}, std::vector<double>{-0.5, 0.0},
                                               std::vector<double>{1.0, 2.0}, {{0.5, 0.5}, {2.0, 2.0}}, taus);
  for (double v : out.values) EXPECT_DOUBLE_EQ(v, 2.5);
}

TEST(MixJoint, MismatchedSampleCountsRejected) {
  const std::vector<double> taus{0.25, 0.75};
  EXPECT_THROW(mix::mix_joint_distribution(std::vector<double>{1.0, 2.0}, std::vector<double>{0.0, 0.0},
                                           std::vector<double>{1.0, 1.0}, {{0.5, 0.5}, {2.0}}, taus),
               mix::MixError);
}

TEST(MixJoint, MeanEqualsMeanPath) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 1 + uniform_index(rng, 4);
    const std::size_t k = 1 + uniform_index(rng, 10);
    const auto v = random_vector(rng, n, 5.0);
    auto a = random_vector(rng, n, 5.0);
    for (double& x : a) x = -std::abs(x);
    std::vector<double> lam(n);
    for (double& l : lam) l = uniform_real(rng, 1e-3, 4.0);
    const auto z = random_features(rng, n, k, 10.0);
    const auto out = mix::mix_joint_distribution(v, a, lam, z, policy::sample_taus(rng, k));
    double mean_path = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean_path += v[i] + lam[i] * a[i];
    EXPECT_NEAR(out.mean(), mean_path, 1e-10);
  }
}

TEST(MixJoint, MeanPathIncreasesWithAnyV) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + uniform_index(rng, 3);
    auto v = random_vector(rng, n, 3.0);
    const auto a = random_vector(rng, n, 1.0);
    const std::vector<double> lam(n, 0.5);
    const auto z = random_features(rng, n, 4);
    const std::vector<double> taus{0.1, 0.4, 0.6, 0.9};
    const double before = mix::mix_joint_distribution(v, a, lam, z, taus).mean();
    v[uniform_index(rng, n)] += uniform_real(rng, 0.01, 1.0);
    EXPECT_GT(mix::mix_joint_distribution(v, a, lam, z, taus).mean(), before);
  }
}

TEST(MixJoint, TapeFormMatchesValueForm) {
  std::mt19937_64 rng(5);
  const std::size_t n = 3, k = 4;
  const auto v = random_vector(rng, n), a = random_vector(rng, n), lam = random_vector(rng, n);
  const auto z = random_features(rng, n, k);
  Tensor zt(n, k);
  std::vector<double> q(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) zt(i, j) = z[i][j];
    q[i] = std::accumulate(z[i].begin(), z[i].end(), 0.0) / k;
  }
  Tape tape;
  Var out = mix::mix_joint(tape.constant(Tensor::column(v)), tape.constant(Tensor::column(a)),
                           tape.constant(Tensor::column(lam)), tape.constant(zt), tape.constant(Tensor::column(q)), n);
  const auto ref = mix::mix_joint_distribution(v, a, lam, z, std::vector<double>{0.1, 0.3, 0.5, 0.7});
  ASSERT_EQ(out.rows(), 1u);
  for (std::size_t j = 0; j < k; ++j) EXPECT_NEAR(out.value()(0, j), ref.values[j], 1e-12);
}

TEST(Digm, JointArgmaxMatchesLocalArgmaxes) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 500; ++trial) {
    const auto inst = oracle::random_digm_instance(rng, 3, 4);
    EXPECT_EQ(oracle::brute_force_joint_argmax(inst), oracle::local_argmaxes(inst));
  }
}

TEST(Barrier, ZeroParametersPredictZero) {
  std::mt19937_64 rng(7);
  ParameterSet ps;
  MixerNet net(small_mixer(), ps, rng);
  ps.assign(std::vector<double>(ps.total_size(), 0.0));
  EXPECT_EQ(net.predict_barrier(ps, random_vector(rng, 6)), 0.0);
}

TEST(Barrier, DeterministicPerState) {
  std::mt19937_64 rng(8);
  ParameterSet ps;
  MixerNet net(small_mixer(), ps, rng);
  const auto s = random_vector(rng, 6);
  EXPECT_EQ(net.predict_barrier(ps, s), net.predict_barrier(ps, s));
}

TEST(Barrier, RegressesToConstantTarget) {
  std::mt19937_64 rng(9);
  ParameterSet ps;
  MixerNet net(small_mixer(), ps, rng);
  Tensor states(16, 6);
  for (double& v : states.values()) v = uniform_real(rng, 0.0, 1.0);
  const std::vector<double> target(16, 2.0);
  diff::Adam adam(diff::AdamConfig{0.01}, ps.total_size());
  for (int it = 0; it < 1500; ++it) {
    Tape tape;
    Var pred = diff::reshape(net.predict_barrier(tape, ps, tape.constant(states)), 1, 16);
    Var err = diff::sub(pred, tape.constant(Tensor::row(target)));
    adam.step(ps, tape.backward(diff::mean(diff::mul(err, err)), ps));
  }
  for (std::size_t r = 0; r < 16; ++r) {
    std::vector<double> s(states.data() + r * 6, states.data() + (r + 1) * 6);
    EXPECT_NEAR(net.predict_barrier(ps, s), 2.0, 0.1);
  }
}

TEST(Mixer, RejectsWrongStateWidth) {
  std::mt19937_64 rng(10);
  ParameterSet ps;
  MixerNet net(small_mixer(), ps, rng);
  EXPECT_THROW(net.predict_barrier(ps, std::vector<double>(5, 0.0)), diff::ShapeError);
  EXPECT_THROW(net.lambda_weights(ps, std::vector<double>(6, 0.0), random_features(rng, 2, 5)), mix::MixError);
}

TEST(Mixer, NetworkAndLossGradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(11);
  int checked = 0;
  for (int trial = 0; trial < 10; ++trial) {
    auto c = oracle::random_network_loss(rng);
    const auto rep = diff::finite_diff_report(c->loss, c->params, 1e-5);
    if (rep.kink_margin < 1e-3) continue;
    ++checked;
    EXPECT_LE(rep.max_relative_error, 1e-4) << c->description;
  }
  EXPECT_GE(checked, 3);
}

}  // namespace
