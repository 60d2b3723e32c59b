#pragma once

#include <cstddef>
#include <iosfwd>
#include <stdexcept>
#include <vector>

#include "safemarl/battlegrid/trajectory_log.h"

namespace safemarl::certify {

class CertifyError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct SafetyQuery {
  std::size_t n_samples = 100;  // N
  std::size_t removed = 0;      // k
  std::size_t param_count = 1;  // m
  double beta = 0.05;
  double omega = 0.0;

  // k + m - 1 < N, m >= 1, beta in (0,1], omega >= 0.
  void validate() const;
};

struct SafetyCertificate {
  double epsilon = 0.0;
  std::size_t violations = 0;
  bool satisfied = false;
  std::vector<int> episode_deaths;      // V^B per episode, log order
  std::vector<std::size_t> removed_ids;  // indices of the k discarded episodes
};

// log of C(k+m-1, k) * sum_{i=0}^{k+m-1} C(N,i) eps^i (1-eps)^(N-i),
// accumulated with log-sum-exp.
double log_scenario_bound(std::size_t n, std::size_t k, std::size_t m, double eps);
double scenario_bound(std::size_t n, std::size_t k, std::size_t m, double eps);

// Smallest eps in [0,1) with scenario_bound(eps) <= beta, by bisection on
// the monotone bound. Throws CertifyError when no eps below 1 qualifies at
// double precision.
double epsilon_bound(const SafetyQuery& query);

// V^B per episode, violation count against omega, the k largest-V^B episodes
// as the discarded set, and the risk level from epsilon_bound.
SafetyCertificate certify_policy(const std::vector<env::EpisodeLog>& log, const SafetyQuery& query);

// Human-readable summary followed by a key=value block.
void write_certificate(std::ostream& out, const SafetyQuery& query, const SafetyCertificate& cert);

}  // namespace safemarl::certify
