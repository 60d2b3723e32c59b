#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "safemarl/diffcore/params.h"
#include "safemarl/diffcore/tensor.h"

namespace safemarl::diff {

class Tape;

// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::uint32_t id) : tape_(tape), id_(id) {}

  Tape* tape() const { return tape_; }
  std::uint32_t id() const { return id_; }
  const Tensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  double item() const;

 private:
  Tape* tape_ = nullptr;
  std::uint32_t id_ = 0;
};

enum class Op : std::uint8_t {
  kConstant,
  kParam,
  kMatmul,
  kAdd,
  kSub,
  kMul,
  kScale,
  kAddScalar,
  kRelu,
  kSoftplus,
  kSigmoid,
  kTanh,
  kAbs,
  kCos,
  kHuber,
  kSum,
  kRowMean,
  kRowMax,
  kGroupSumRows,
  kGroupMeanRows,
  kConcatCols,
  kSliceCols,
  kRepeatRows,
  kTileRows,
  kRepeatCols,
  kTileCols,
  kGatherCols,
  kBatchedMatvec,
  kReshape,
};

const char* op_name(Op op);

// Append-only record of primitive evaluations. Forward values are computed
// eagerly as nodes are appended; backward() walks the nodes in reverse.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  // Leaf bound to a parameter. The set must outlive the tape and must not be
  // mutated while the tape is in use.
  Var param(const ParameterSet& params, ParamId id);

  const Tensor& value(Var v) const;
  std::size_t size() const { return nodes_.size(); }

  // Gradient of a scalar node with respect to every parameter of `params`,
  // in registration order. Parameters not reached get zeros.
  GradientVector backward(Var output, const ParameterSet& params);

  // Smallest distance of any recorded ReLU/abs input from zero, or of any
  // row-max winner from its runner-up. Gradient checks use it to stay away
  // from non-differentiable points.
  double kink_margin() const { return kink_margin_; }

  // Internal: used by the primitive functions in ops.h.
  struct Node {
    Op op = Op::kConstant;
    std::uint32_t a = 0;
    std::uint32_t b = 0;
    double scalar = 0.0;
    std::size_t aux = 0;
    std::vector<std::uint32_t> inputs;   // concat
    std::vector<std::uint32_t> indices;  // gather / argmax
    const Tensor* ref = nullptr;          // parameter leaves
    ParamId param{};
    bool needs_grad = false;
    Tensor own;
    const Tensor& value() const { return ref ? *ref : own; }
  };
  Var push(Node node);
  const Node& node(std::uint32_t id) const { return nodes_[id]; }
  void note_kink(double distance) {
    if (distance < kink_margin_) kink_margin_ = distance;
  }

 private:
  void backward_node(std::uint32_t id, std::vector<Tensor>& grads);

  std::vector<Node> nodes_;
  const ParameterSet* bound_params_ = nullptr;
  double kink_margin_ = std::numeric_limits<double>::infinity();
};

}  // namespace safemarl::diff
