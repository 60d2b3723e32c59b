#include "safemarl/diffcore/gradcheck.h"

#include <algorithm>
#include <cmath>
#include <string>

namespace safemarl::diff {

NonFiniteLoss::NonFiniteLoss(std::size_t index, double value)
    : std::runtime_error("non-finite loss " + std::to_string(value) +
                         " while probing parameter " + std::to_string(index)),
      index_(index) {}

namespace {
double eval(const LossBuilder& loss_fn, const ParameterSet& params) {
  Tape tape;
  return loss_fn(tape, params).item();
}
}  // namespace

ValueAndGrad value_and_grad(const LossBuilder& loss_fn, const ParameterSet& params) {
  Tape tape;
  Var out = loss_fn(tape, params);
  ValueAndGrad r;
  r.value = out.item();
  r.grad = tape.backward(out, params);
  return r;
}

GradCheckReport finite_diff_report(const LossBuilder& loss_fn, ParameterSet& params, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("finite_diff_check: step must be positive");
  GradCheckReport report;
  GradientVector analytic;
  {
    Tape tape;
    Var out = loss_fn(tape, params);
    report.kink_margin = tape.kink_margin();
    analytic = tape.backward(out, params);
  }
  for (std::size_t i = 0; i < params.total_size(); ++i) {
    const double orig = params.get_flat(i);
    params.set_flat(i, orig + step);
    const double up = eval(loss_fn, params);
    params.set_flat(i, orig - step);
    const double down = eval(loss_fn, params);
    params.set_flat(i, orig);
    if (!std::isfinite(up)) throw NonFiniteLoss(i, up);
    if (!std::isfinite(down)) throw NonFiniteLoss(i, down);
    const double fd = (up - down) / (2.0 * step);
    const double err = std::abs(analytic[i] - fd) / std::max(1.0, std::abs(fd));
    if (err > report.max_relative_error) {
      report.max_relative_error = err;
      report.worst_index = i;
    }
  }
  return report;
}

double finite_diff_check(const LossBuilder& loss_fn, ParameterSet& params, double step) {
  return finite_diff_report(loss_fn, params, step).max_relative_error;
}

}  // namespace safemarl::diff
