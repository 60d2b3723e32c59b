#pragma once

#include <cstddef>
#include <functional>
#include <stdexcept>

#include "safemarl/diffcore/params.h"
#include "safemarl/diffcore/tape.h"

namespace safemarl::diff {

// Builds a scalar loss on the given tape from the given parameters. Must be
// deterministic in the parameter values.
using LossBuilder = std::function<Var(Tape&, const ParameterSet&)>;

class NonFiniteLoss : public std::runtime_error {
 public:
  NonFiniteLoss(std::size_t index, double value);
  std::size_t parameter_index() const { return index_; }

 private:
  std::size_t index_;
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  // Minimum kink margin seen at the base point (see Tape::kink_margin).
  double kink_margin = 0.0;
};

// Compares backward() against central differences for every parameter:
// max_i |analytic_i - fd_i| / max(1, |fd_i|). `params` is restored on return.
GradCheckReport finite_diff_report(const LossBuilder& loss_fn, ParameterSet& params, double step);

double finite_diff_check(const LossBuilder& loss_fn, ParameterSet& params, double step);

// Loss value and gradient in one call.
struct ValueAndGrad {
  double value = 0.0;
  GradientVector grad;
};
ValueAndGrad value_and_grad(const LossBuilder& loss_fn, const ParameterSet& params);

}  // namespace safemarl::diff
