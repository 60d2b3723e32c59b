#include "safemarl/losses/losses.h"

#include <algorithm>
#include <cmath>
#include <string>

namespace safemarl::losses {

using diff::GradientVector;
using diff::Tape;
using diff::Tensor;
using diff::Var;

Var huber_quantile_loss(Var pred, const Tensor& target, std::span<const double> taus, double kappa,
                        std::span<const double> row_weights) {
  const Tensor& p = pred.value();
  const std::size_t rows = p.rows();
  const std::size_t k = p.cols();
  const std::size_t kt = target.cols();
  if (rows == 0 || k == 0 || kt == 0) throw LossError("huber_quantile_loss: empty batch");
  if (target.rows() != rows) throw LossError("huber_quantile_loss: prediction/target row mismatch");
  if (taus.size() != k) throw LossError("huber_quantile_loss: one quantile level per sample required");
  if (!(kappa > 0.0)) throw LossError("huber_quantile_loss: kappa must be positive");
  if (!row_weights.empty() && row_weights.size() != rows) {
    throw LossError("huber_quantile_loss: row weight count mismatch");
  }

  Tape& tape = *pred.tape();
  // Column k*K' + k' pairs prediction k with target k'.
  Var pred_rep = diff::repeat_cols(pred, kt);
  Tensor tgt(rows, k * kt);
  Tensor weight(rows, k * kt);
  const double norm = 1.0 / (static_cast<double>(k * kt) * kappa);
  for (std::size_t b = 0; b < rows; ++b) {
    const double wb = row_weights.empty() ? 1.0 / static_cast<double>(rows) : row_weights[b];
    for (std::size_t i = 0; i < k; ++i) {
      for (std::size_t j = 0; j < kt; ++j) {
        const double t = target(b, j);
        const double delta = t - p(b, i);
        tgt(b, i * kt + j) = t;
        weight(b, i * kt + j) = wb * norm * std::abs(taus[i] - (delta < 0.0 ? 1.0 : 0.0));
      }
    }
  }
  Var delta = diff::sub(tape.constant(std::move(tgt)), pred_rep);
  return diff::sum(diff::mul(diff::huber(delta, kappa), tape.constant(std::move(weight))));
}

double huber_quantile_loss(std::span<const double> pred, std::span<const double> taus,
                           std::span<const double> target, double kappa) {
  Tape tape;
  Var p = tape.constant(Tensor::row(pred));
  return huber_quantile_loss(p, Tensor::row(target), taus, kappa).item();
}

std::vector<double> empirical_barrier(std::span<const int> deaths, double gamma_b) {
  if (deaths.empty()) throw LossError("empirical_barrier: empty death sequence");
  if (!(gamma_b > 0.0 && gamma_b < 1.0)) throw LossError("empirical_barrier: gamma_b must lie in (0,1)");
  std::vector<double> out(deaths.size());
  double next = 0.0;
  for (std::size_t t = deaths.size(); t-- > 0;) {
    if (deaths[t] < 0) throw LossError("empirical_barrier: negative death count");
    out[t] = deaths[t] + gamma_b * next;
    next = out[t];
  }
  return out;
}

Var barrier_invariance_loss(Var predicted, double lambda_b) {
  const Tensor& p = predicted.value();
  if (p.rows() != 1) throw LossError("barrier_invariance_loss: expected a 1 x T row");
  const std::size_t n = p.cols();
  if (n < 2) throw LossError("barrier_invariance_loss: need at least two visited states");
  if (!(lambda_b > 0.0 && lambda_b < 1.0)) {
    throw LossError("barrier_invariance_loss: lambda_b must lie in (0,1)");
  }
  Var next = diff::slice_cols(predicted, 1, n - 1);
  Var cur = diff::slice_cols(predicted, 0, n - 1);
  Var excess = diff::relu(diff::sub(next, diff::scale(cur, 1.0 - lambda_b)));
  return diff::scale(diff::sum(excess), 1.0 / static_cast<double>(n));
}

double barrier_invariance_loss(std::span<const double> predicted, double lambda_b) {
  Tape tape;
  return barrier_invariance_loss(tape.constant(Tensor::row(predicted)), lambda_b).item();
}

Var barrier_regression_loss(Var predicted, std::span<const double> empirical) {
  const Tensor& p = predicted.value();
  if (p.rows() != 1 || p.cols() != empirical.size()) {
    throw LossError("barrier_regression_loss: length mismatch (" + std::to_string(p.size()) + " vs " +
                    std::to_string(empirical.size()) + ")");
  }
  if (empirical.empty()) throw LossError("barrier_regression_loss: empty input");
  Var err = diff::sub(predicted, predicted.tape()->constant(Tensor::row(empirical)));
  return diff::mean(diff::mul(err, err));
}

double barrier_regression_loss(std::span<const double> predicted, std::span<const double> empirical) {
  Tape tape;
  return barrier_regression_loss(tape.constant(Tensor::row(predicted)), empirical).item();
}

GradientPair::GradientPair(GradientVector q, GradientVector b, CombineWeights w)
    : g_q(std::move(q)), g_b(std::move(b)), weights(w) {
  if (g_q.size() != g_b.size()) throw LossError("gradient pair: length mismatch");
  const double nq = g_q.norm();
  const double nb = g_b.norm();
  cos_theta = nq > 0.0 && nb > 0.0 ? std::clamp(g_q.dot(g_b) / (nq * nb), -1.0, 1.0) : 0.0;
}

bool GradientPair::conflicting() const { return g_q.dot(g_b) < 0.0; }

GradientVector project_out(const GradientVector& g, const GradientVector& normal) {
  if (g.size() != normal.size()) throw LossError("project_out: length mismatch");
  GradientVector out = g;
  const double n2 = normal.squared_norm();
  if (n2 > 0.0) out.axpy(-g.dot(normal) / n2, normal);
  return out;
}

GradientVector pcgrad_combine(const GradientPair& pair) {
  const GradientVector& gq = pair.g_q;
  const GradientVector& gb = pair.g_b;
  const CombineWeights& w = pair.weights;
  if (gq.size() != gb.size()) throw LossError("pcgrad_combine: length mismatch");

  GradientVector out(gq.size());
  if (gb.is_zero()) {
    out.axpy(w.beta_q, gq);
    return out;
  }
  if (gq.is_zero()) {
    out.axpy(w.beta_b, gb);
    return out;
  }
  if (gq.dot(gb) < 0.0) {
    out.axpy(w.beta_q_plus, project_out(gq, gb));
    out.axpy(w.beta_b_plus, project_out(gb, gq));
    return out;
  }
  out.axpy(w.beta_q, gq);
  out.axpy(w.beta_b, gb);
  return out;
}

}  // namespace safemarl::losses
