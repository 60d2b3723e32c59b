#pragma once

#include <cstddef>
#include <vector>

#include "safemarl/diffcore/params.h"

namespace safemarl::diff {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adaptive-moment optimizer over a ParameterSet's flat ordering.
class Adam {
 public:
  Adam(AdamConfig config, std::size_t n) : config_(config), m_(n, 0.0), v_(n, 0.0) {}

  // Descends along `grad` (parameters move against it).
  void step(ParameterSet& params, const GradientVector& grad);

  std::size_t steps() const { return t_; }
  const AdamConfig& config() const { return config_; }

 private:
  AdamConfig config_;
  std::vector<double> m_;
  std::vector<double> v_;
  std::size_t t_ = 0;
};

}  // namespace safemarl::diff
