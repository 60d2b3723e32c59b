#pragma once

#include <span>
#include <stdexcept>
#include <vector>

#include "safemarl/diffcore/ops.h"
#include "safemarl/diffcore/params.h"

namespace safemarl::losses {

class LossError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Quantile-regression Huber loss of IQN. `pred` is B x K (row b holds K
// samples at levels `taus`), `target` is B x K' and carries no gradient.
// Row b contributes
//   (1/(K K')) sum_{k,k'} |tau_k - 1{delta < 0}| * huber_kappa(delta) / kappa,
//   delta = target[b,k'] - pred[b,k],
// scaled by row_weights[b] (1/B each when empty).
diff::Var huber_quantile_loss(diff::Var pred, const diff::Tensor& target,
                              std::span<const double> taus, double kappa,
                              std::span<const double> row_weights = {});

// Single-row convenience form.
double huber_quantile_loss(std::span<const double> pred, std::span<const double> taus,
                           std::span<const double> target, double kappa = 1.0);

// Discounted death count along a trajectory, computed backwards:
// out[t] = deaths[t] + gamma_b * out[t+1], with zero after the last step.
std::vector<double> empirical_barrier(std::span<const int> deaths, double gamma_b);

// (1/T) sum_t max(B[t+1] - (1 - lambda_b) B[t], 0) over a 1 x T row of
// predicted barrier values. T is the number of visited states.
diff::Var barrier_invariance_loss(diff::Var predicted, double lambda_b);
double barrier_invariance_loss(std::span<const double> predicted, double lambda_b);

// Mean squared error between a 1 x T prediction row and its targets.
diff::Var barrier_regression_loss(diff::Var predicted, std::span<const double> empirical);
double barrier_regression_loss(std::span<const double> predicted, std::span<const double> empirical);

struct CombineWeights {
  double beta_q = 0.5;
  double beta_b = 0.5;
  double beta_q_plus = 0.5;
  double beta_b_plus = 0.5;
};

struct GradientPair {
  diff::GradientVector g_q;
  diff::GradientVector g_b;
  CombineWeights weights;
  // (g_q . g_b) / (|g_q| |g_b|), 0 when either norm is zero.
  double cos_theta = 0.0;

  GradientPair() = default;
  GradientPair(diff::GradientVector q, diff::GradientVector b, CombineWeights w = {});
  // Angle strictly above 90 degrees.
  bool conflicting() const;
};

// g minus its component along `normal` (g unchanged when normal is zero).
diff::GradientVector project_out(const diff::GradientVector& g, const diff::GradientVector& normal);

// Gradient surgery. Conflicting pairs are each projected onto the normal
// plane of the other and blended with the "plus" weights; otherwise the plain
// weighted sum. A zero gradient on either side yields the weighted other.
diff::GradientVector pcgrad_combine(const GradientPair& pair);

}  // namespace safemarl::losses
