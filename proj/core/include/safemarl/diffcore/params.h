#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "safemarl/diffcore/tensor.h"

namespace safemarl::diff {

// Index of a parameter tensor inside a ParameterSet. Stable for the lifetime
// of the set; copies of a set share the same ids.
struct ParamId {
  std::uint32_t index = 0;
  bool operator==(const ParamId&) const = default;
};

// Flat gradient aligned with ParameterSet registration order.
struct GradientVector {
  std::vector<double> values;

  GradientVector() = default;
  explicit GradientVector(std::size_t n) : values(n, 0.0) {}
  explicit GradientVector(std::vector<double> v) : values(std::move(v)) {}

  std::size_t size() const { return values.size(); }
  double operator[](std::size_t i) const { return values[i]; }
  double& operator[](std::size_t i) { return values[i]; }

  double dot(const GradientVector& o) const;
  double squared_norm() const { return dot(*this); }
  double norm() const;
  bool is_zero() const;
  void scale(double s);
  // this += s * o
  void axpy(double s, const GradientVector& o);

  bool operator==(const GradientVector&) const = default;
};

// Ordered collection of named parameter tensors. Registration order defines
// the flattening used by GradientVector and the optimizer.
class ParameterSet {
 public:
  ParamId add(std::string name, Tensor init);

  const Tensor& operator[](ParamId id) const { return tensors_[id.index]; }
  Tensor& mutable_tensor(ParamId id) { return tensors_[id.index]; }
  const std::string& name(ParamId id) const { return names_[id.index]; }

  std::size_t count() const { return tensors_.size(); }
  std::size_t total_size() const { return total_; }
  std::size_t offset(ParamId id) const { return offsets_[id.index]; }

  std::vector<double> flatten() const;
  void assign(std::span<const double> flat);
  // Flat index -> (tensor, element) accessors used by gradient checks.
  double get_flat(std::size_t i) const;
  void set_flat(std::size_t i, double v);

  bool operator==(const ParameterSet&) const = default;

 private:
  std::pair<std::size_t, std::size_t> locate(std::size_t flat) const;

  std::vector<std::string> names_;
  std::vector<Tensor> tensors_;
  std::vector<std::size_t> offsets_;
  std::size_t total_ = 0;
};

// Uniform(-bound, bound) initializer with bound = 1/sqrt(fan_in), as used by
// common linear layers.
Tensor uniform_init(std::size_t rows, std::size_t cols, double bound, std::mt19937_64& rng);

}  // namespace safemarl::diff
