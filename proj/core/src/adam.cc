#include "safemarl/diffcore/adam.h"

#include <cmath>

namespace safemarl::diff {

void Adam::step(ParameterSet& params, const GradientVector& grad) {
  if (grad.size() != params.total_size() || grad.size() != m_.size()) {
    throw ShapeError("adam: gradient length does not match parameter count");
  }
  ++t_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  std::vector<double> flat = params.flatten();
  for (std::size_t i = 0; i < flat.size(); ++i) {
    const double g = grad[i];
    m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * g;
    v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * g * g;
    const double mhat = m_[i] / c1;
    const double vhat = v_[i] / c2;
    flat[i] -= config_.learning_rate * mhat / (std::sqrt(vhat) + config_.epsilon);
  }
  params.assign(flat);
}

}  // namespace safemarl::diff
