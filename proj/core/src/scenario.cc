#include "safemarl/certify/scenario.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <ostream>
#include <string>

namespace safemarl::certify {
namespace {

double log_choose(double n, double k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void SafetyQuery::validate() const {
  if (param_count < 1) throw CertifyError("safety query: param_count must be at least 1");
  if (n_samples < 1) throw CertifyError("safety query: n_samples must be positive");
  if (removed + param_count - 1 >= n_samples) {
    throw CertifyError("safety query: removed + param_count - 1 must be below n_samples (" +
                       std::to_string(removed + param_count - 1) + " >= " + std::to_string(n_samples) + ")");
  }
  if (!(beta > 0.0 && beta <= 1.0)) throw CertifyError("safety query: beta must lie in (0,1]");
  if (!(omega >= 0.0)) throw CertifyError("safety query: omega must be non-negative");
}

double log_scenario_bound(std::size_t n, std::size_t k, std::size_t m, double eps) {
  if (!(eps >= 0.0 && eps <= 1.0)) throw CertifyError("scenario bound: eps outside [0,1]");
  const std::size_t top = k + m - 1;
  const double log_lead = log_choose(static_cast<double>(top), static_cast<double>(k));
  if (eps == 0.0) return log_lead;  // only the i = 0 term survives
  const double le = std::log(eps);
  const double l1e = std::log1p(-eps);
  const double nd = static_cast<double>(n);
  std::vector<double> terms;
  terms.reserve(std::min(top, n) + 1);
  for (std::size_t i = 0; i <= std::min(top, n); ++i) {
    const double id = static_cast<double>(i);
    const double rest = nd - id;
    // 0 * log(0) is 0 at eps == 1.
    const double tail = rest == 0.0 ? 0.0 : rest * l1e;
    terms.push_back(log_choose(nd, id) + id * le + tail);
  }
  const double peak = *std::max_element(terms.begin(), terms.end());
  if (peak == -std::numeric_limits<double>::infinity()) return peak;
  double s = 0.0;
  for (double t : terms) s += std::exp(t - peak);
  return log_lead + peak + std::log(s);
}

double scenario_bound(std::size_t n, std::size_t k, std::size_t m, double eps) {
  return std::exp(log_scenario_bound(n, k, m, eps));
}

double epsilon_bound(const SafetyQuery& q) {
  q.validate();
  const double log_beta = std::log(q.beta);
  auto ok = [&](double eps) { return log_scenario_bound(q.n_samples, q.removed, q.param_count, eps) <= log_beta; };
  if (ok(0.0)) return 0.0;
  double hi = std::nextafter(1.0, 0.0);
  if (!ok(hi)) {
    throw CertifyError("epsilon_bound: inequality unsatisfiable for any eps < 1 (N=" + std::to_string(q.n_samples) +
                       ", k=" + std::to_string(q.removed) + ", m=" + std::to_string(q.param_count) +
                       ", beta=" + format_double(q.beta) + ")");
  }
  double lo = 0.0;
  // The bound is decreasing in eps; keep lo failing and hi passing.
  for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    (ok(mid) ? hi : lo) = mid;
  }
  return hi;
}

SafetyCertificate certify_policy(const std::vector<env::EpisodeLog>& log, const SafetyQuery& q) {
  q.validate();
  if (log.size() != q.n_samples) {
    throw CertifyError("certify_policy: log holds " + std::to_string(log.size()) + " episodes, query expects " +
                       std::to_string(q.n_samples));
  }
  SafetyCertificate c;
  for (const auto& ep : log) {
    const int d = ep.total_deaths();
    c.episode_deaths.push_back(d);
    if (static_cast<double>(d) > q.omega) ++c.violations;
  }
  c.satisfied = c.violations <= q.removed;
  std::vector<std::size_t> order(log.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return c.episode_deaths[a] > c.episode_deaths[b]; });
  c.removed_ids.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(q.removed));
  std::sort(c.removed_ids.begin(), c.removed_ids.end());
  c.epsilon = epsilon_bound(q);
  return c;
}

void write_certificate(std::ostream& out, const SafetyQuery& q, const SafetyCertificate& c) {
  out << "Safety certificate\n"
      << "  episodes checked: " << q.n_samples << "\n"
      << "  death threshold omega: " << q.omega << "\n"
      << "  episodes over threshold: " << c.violations << " (allowed to discard " << q.removed << ")\n"
      << "  constraint " << (c.satisfied ? "holds" : "violated") << " on the retained episodes\n"
      << "  with confidence 1 - " << q.beta << ", violation probability <= " << format_double(c.epsilon) << "\n"
      << "\n[certificate]\n"
      << "N=" << q.n_samples << "\n"
      << "k=" << q.removed << "\n"
      << "m=" << q.param_count << "\n"
      << "beta=" << format_double(q.beta) << "\n"
      << "epsilon=" << format_double(c.epsilon) << "\n"
      << "omega=" << format_double(q.omega) << "\n"
      << "violations=" << c.violations << "\n"
      << "satisfied=" << (c.satisfied ? "true" : "false") << "\n";
}

}  // namespace safemarl::certify
