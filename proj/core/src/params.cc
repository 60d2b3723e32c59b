#include "safemarl/diffcore/params.h"

#include <algorithm>
#include <cmath>

#include "safemarl/diffcore/random.h"

namespace safemarl::diff {

double GradientVector::dot(const GradientVector& o) const {
  if (o.size() != size()) throw ShapeError("gradient dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) s += values[i] * o.values[i];
  return s;
}

double GradientVector::norm() const { return std::sqrt(squared_norm()); }

bool GradientVector::is_zero() const {
  return std::all_of(values.begin(), values.end(), [](double v) { return v == 0.0; });
}

void GradientVector::scale(double s) {
  for (double& v : values) v *= s;
}

void GradientVector::axpy(double s, const GradientVector& o) {
  if (o.size() != size()) throw ShapeError("gradient axpy: length mismatch");
  for (std::size_t i = 0; i < values.size(); ++i) values[i] += s * o.values[i];
}

ParamId ParameterSet::add(std::string name, Tensor init) {
  ParamId id{static_cast<std::uint32_t>(tensors_.size())};
  offsets_.push_back(total_);
  total_ += init.size();
  names_.push_back(std::move(name));
  tensors_.push_back(std::move(init));
  return id;
}

std::vector<double> ParameterSet::flatten() const {
  std::vector<double> out;
  out.reserve(total_);
  for (const auto& t : tensors_) out.insert(out.end(), t.values().begin(), t.values().end());
  return out;
}

void ParameterSet::assign(std::span<const double> flat) {
  if (flat.size() != total_) {
    throw ShapeError("parameter assign: expected " + std::to_string(total_) + " values, got " +
                     std::to_string(flat.size()));
  }
  std::size_t k = 0;
  for (auto& t : tensors_) {
    for (double& v : t.values()) v = flat[k++];
  }
}

std::pair<std::size_t, std::size_t> ParameterSet::locate(std::size_t flat) const {
  if (flat >= total_) throw std::out_of_range("parameter index out of range");
  auto it = std::upper_bound(offsets_.begin(), offsets_.end(), flat);
  const auto t = static_cast<std::size_t>(it - offsets_.begin()) - 1;
  return {t, flat - offsets_[t]};
}

double ParameterSet::get_flat(std::size_t i) const {
  auto [t, e] = locate(i);
  return tensors_[t][e];
}

void ParameterSet::set_flat(std::size_t i, double v) {
  auto [t, e] = locate(i);
  tensors_[t][e] = v;
}

Tensor uniform_init(std::size_t rows, std::size_t cols, double bound, std::mt19937_64& rng) {
  Tensor t(rows, cols);
  for (double& v : t.values()) v = uniform_real(rng, -bound, bound);
  return t;
}

}  // namespace safemarl::diff
