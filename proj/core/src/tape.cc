#include "safemarl/diffcore/tape.h"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>

#include "safemarl/diffcore/ops.h"

namespace safemarl::diff {
namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMajor>;
using Map = Eigen::Map<RowMajor>;

MapC view(const Tensor& t) { return MapC(t.data(), t.rows(), t.cols()); }
Map view(Tensor& t) { return Map(t.data(), t.rows(), t.cols()); }

enum Broadcast : std::size_t { kSame = 0, kRow = 1, kCol = 2, kScalar = 3 };

[[noreturn]] void shape_fail(Op op, const std::string& detail) {
  throw ShapeError(std::string(op_name(op)) + ": " + detail);
}

Broadcast broadcast_mode(Op op, const Tensor& a, const Tensor& b) {
  if (a.same_shape(b)) return kSame;
  if (b.is_scalar()) return kScalar;
  if (b.rows() == 1 && b.cols() == a.cols()) return kRow;
  if (b.cols() == 1 && b.rows() == a.rows()) return kCol;
  shape_fail(op, "cannot broadcast " + b.shape_string() + " onto " + a.shape_string());
}

inline std::size_t bindex(Broadcast m, std::size_t r, std::size_t c, std::size_t cols) {
  switch (m) {
    case kSame: return r * cols + c;
    case kRow: return c;
    case kCol: return r;
    case kScalar: return 0;
  }
  return 0;
}

Tape& tape_of(Var a) {
  if (a.tape() == nullptr) throw std::logic_error("variable is not bound to a tape");
  return *a.tape();
}

Tape::Node make(Op op, Var a) {
  Tape::Node n;
  n.op = op;
  n.a = a.id();
  n.needs_grad = tape_of(a).node(a.id()).needs_grad;
  return n;
}

Tape::Node make(Op op, Var a, Var b) {
  if (a.tape() != b.tape()) throw std::logic_error(std::string(op_name(op)) + ": mixed tapes");
  Tape::Node n;
  n.op = op;
  n.a = a.id();
  n.b = b.id();
  n.needs_grad = tape_of(a).node(a.id()).needs_grad || tape_of(b).node(b.id()).needs_grad;
  return n;
}

template <typename F>
Var unary(Op op, Var a, F f) {
  Tape& t = tape_of(a);
  Tape::Node n = make(op, a);
  const Tensor& x = a.value();
  n.own = Tensor(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) n.own[i] = f(x[i]);
  return t.push(std::move(n));
}

Var binary(Op op, Var a, Var b) {
  Tape& t = tape_of(a);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  const Broadcast m = broadcast_mode(op, x, y);
  Tape::Node n = make(op, a, b);
  n.aux = m;
  n.own = Tensor(x.rows(), x.cols());
  const std::size_t cols = x.cols();
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const double u = x[r * cols + c];
      const double v = y[bindex(m, r, c, cols)];
      double& out = n.own[r * cols + c];
      switch (op) {
        case Op::kAdd: out = u + v; break;
        case Op::kSub: out = u - v; break;
        default: out = u * v; break;
      }
    }
  }
  return t.push(std::move(n));
}

double softplus_value(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }
double sigmoid_value(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Accumulates `g` into the (possibly not yet allocated) gradient slot.
Tensor& slot(std::vector<Tensor>& grads, std::uint32_t id, const Tensor& like) {
  Tensor& g = grads[id];
  if (g.size() == 0 && like.size() != 0) g = Tensor(like.rows(), like.cols());
  return g;
}

}  // namespace

const char* op_name(Op op) {
  switch (op) {
    case Op::kConstant: return "constant";
    case Op::kParam: return "param";
    case Op::kMatmul: return "matmul";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul";
    case Op::kScale: return "scale";
    case Op::kAddScalar: return "add_scalar";
    case Op::kRelu: return "relu";
    case Op::kSoftplus: return "softplus";
    case Op::kSigmoid: return "sigmoid";
    case Op::kTanh: return "tanh";
    case Op::kAbs: return "abs";
    case Op::kCos: return "cos";
    case Op::kHuber: return "huber";
    case Op::kSum: return "sum";
    case Op::kRowMean: return "row_mean";
    case Op::kRowMax: return "row_max";
    case Op::kGroupSumRows: return "group_sum_rows";
    case Op::kGroupMeanRows: return "group_mean_rows";
    case Op::kConcatCols: return "concat_cols";
    case Op::kSliceCols: return "slice_cols";
    case Op::kRepeatRows: return "repeat_rows";
    case Op::kTileRows: return "tile_rows";
    case Op::kRepeatCols: return "repeat_cols";
    case Op::kTileCols: return "tile_cols";
    case Op::kGatherCols: return "gather_cols";
    case Op::kBatchedMatvec: return "batched_matvec";
    case Op::kReshape: return "reshape";
  }
  return "unknown";
}

const Tensor& Var::value() const { return tape_->value(*this); }

double Var::item() const {
  const Tensor& v = value();
  if (!v.is_scalar()) throw ShapeError("item: tensor " + v.shape_string() + " is not a scalar");
  return v[0];
}

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Tape::constant(Tensor value) {
  Node n;
  n.op = Op::kConstant;
  n.own = std::move(value);
  return push(std::move(n));
}

Var Tape::param(const ParameterSet& params, ParamId id) {
  if (bound_params_ != nullptr && bound_params_ != &params) {
    throw std::logic_error("tape: parameters from two different sets");
  }
  bound_params_ = &params;
  Node n;
  n.op = Op::kParam;
  n.ref = &params[id];
  n.param = id;
  n.needs_grad = true;
  return push(std::move(n));
}

const Tensor& Tape::value(Var v) const { return nodes_[v.id()].value(); }

GradientVector Tape::backward(Var output, const ParameterSet& params) {
  if (output.tape() != this) throw std::logic_error("backward: output is on another tape");
  const Tensor& out = value(output);
  if (!out.is_scalar()) {
    throw ShapeError("backward: output " + out.shape_string() + " is not a scalar");
  }
  if (bound_params_ != nullptr && bound_params_ != &params) {
    throw std::logic_error("backward: parameter set differs from the one used in forward");
  }
  GradientVector result(params.total_size());
  if (!nodes_[output.id()].needs_grad) return result;

  std::vector<Tensor> grads(output.id() + 1);
  grads[output.id()] = Tensor::scalar(1.0);
  for (std::uint32_t id = output.id() + 1; id-- > 0;) {
    const Node& n = nodes_[id];
    if (!n.needs_grad || grads[id].size() == 0) continue;
    if (n.op == Op::kParam) {
      const std::size_t off = params.offset(n.param);
      const Tensor& g = grads[id];
      for (std::size_t i = 0; i < g.size(); ++i) result.values[off + i] += g[i];
      continue;
    }
    backward_node(id, grads);
    grads[id] = Tensor();  // release early
  }
  return result;
}

void Tape::backward_node(std::uint32_t id, std::vector<Tensor>& grads) {
  const Node& n = nodes_[id];
  const Tensor& g = grads[id];
  const Tensor& y = n.value();
  auto wants = [&](std::uint32_t in) { return nodes_[in].needs_grad; };

  switch (n.op) {
    case Op::kConstant:
    case Op::kParam:
      return;
    case Op::kMatmul: {
      const Tensor& a = nodes_[n.a].value();
      const Tensor& b = nodes_[n.b].value();
      if (wants(n.a)) view(slot(grads, n.a, a)).noalias() += view(g) * view(b).transpose();
      if (wants(n.b)) view(slot(grads, n.b, b)).noalias() += view(a).transpose() * view(g);
      return;
    }
    case Op::kAdd:
    case Op::kSub:
    case Op::kMul: {
      const Tensor& a = nodes_[n.a].value();
      const Tensor& b = nodes_[n.b].value();
      const auto m = static_cast<Broadcast>(n.aux);
      const std::size_t cols = a.cols();
      const bool ga = wants(n.a);
      const bool gb = wants(n.b);
      Tensor* da = ga ? &slot(grads, n.a, a) : nullptr;
      Tensor* db = gb ? &slot(grads, n.b, b) : nullptr;
      for (std::size_t r = 0; r < a.rows(); ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
          const std::size_t i = r * cols + c;
          const std::size_t j = bindex(m, r, c, cols);
          const double gi = g[i];
          if (n.op == Op::kMul) {
            if (ga) (*da)[i] += gi * b[j];
            if (gb) (*db)[j] += gi * a[i];
          } else {
            if (ga) (*da)[i] += gi;
            if (gb) (*db)[j] += n.op == Op::kAdd ? gi : -gi;
          }
        }
      }
      return;
    }
    default:
      break;
  }

  if (!wants(n.a)) return;
  const Tensor& a = nodes_[n.a].value();
  Tensor& da = slot(grads, n.a, a);

  switch (n.op) {
    case Op::kScale:
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += n.scalar * g[i];
      return;
    case Op::kAddScalar:
    case Op::kReshape:
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
      return;
    case Op::kRelu:
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += a[i] > 0.0 ? g[i] : 0.0;
      return;
    case Op::kSoftplus:
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * sigmoid_value(a[i]);
      return;
    case Op::kSigmoid:
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * y[i] * (1.0 - y[i]);
      return;
    case Op::kTanh:
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * (1.0 - y[i] * y[i]);
      return;
    case Op::kAbs:
      for (std::size_t i = 0; i < g.size(); ++i) {
        da[i] += a[i] > 0.0 ? g[i] : (a[i] < 0.0 ? -g[i] : 0.0);
      }
      return;
    case Op::kCos:
      for (std::size_t i = 0; i < g.size(); ++i) da[i] -= g[i] * std::sin(a[i]);
      return;
    case Op::kHuber: {
      const double k = n.scalar;
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double d = a[i];
        const double dd = std::abs(d) <= k ? d : (d > 0 ? k : -k);
        da[i] += g[i] * dd;
      }
      return;
    }
    case Op::kSum:
      for (std::size_t i = 0; i < da.size(); ++i) da[i] += g[0] * n.scalar;
      return;
    case Op::kRowMean: {
      const double inv = 1.0 / static_cast<double>(a.cols());
      for (std::size_t r = 0; r < a.rows(); ++r) {
        for (std::size_t c = 0; c < a.cols(); ++c) da(r, c) += g[r] * inv;
      }
      return;
    }
    case Op::kRowMax:
      for (std::size_t r = 0; r < a.rows(); ++r) da(r, n.indices[r]) += g[r];
      return;
    case Op::kGroupSumRows:
    case Op::kGroupMeanRows: {
      const std::size_t k = n.aux;
      const double s = n.op == Op::kGroupMeanRows ? 1.0 / static_cast<double>(k) : 1.0;
      const std::size_t cols = a.cols();
      for (std::size_t r = 0; r < a.rows(); ++r) {
        const std::size_t grp = r / k;
        for (std::size_t c = 0; c < cols; ++c) da[r * cols + c] += s * g[grp * cols + c];
      }
      return;
    }
    case Op::kConcatCols: {
      std::size_t off = 0;
      for (std::uint32_t in : n.inputs) {
        const Tensor& part = nodes_[in].value();
        if (wants(in)) {
          Tensor& dp = slot(grads, in, part);
          for (std::size_t r = 0; r < part.rows(); ++r) {
            for (std::size_t c = 0; c < part.cols(); ++c) dp(r, c) += g(r, off + c);
          }
        }
        off += part.cols();
      }
      return;
    }
    case Op::kSliceCols:
      for (std::size_t r = 0; r < g.rows(); ++r) {
        for (std::size_t c = 0; c < g.cols(); ++c) da(r, n.aux + c) += g(r, c);
      }
      return;
    case Op::kRepeatRows:
      for (std::size_t r = 0; r < g.rows(); ++r) {
        const std::size_t src = r / n.aux;
        for (std::size_t c = 0; c < g.cols(); ++c) da(src, c) += g(r, c);
      }
      return;
    case Op::kTileRows:
      for (std::size_t r = 0; r < g.rows(); ++r) {
        const std::size_t src = r % a.rows();
        for (std::size_t c = 0; c < g.cols(); ++c) da(src, c) += g(r, c);
      }
      return;
    case Op::kRepeatCols:
      for (std::size_t r = 0; r < g.rows(); ++r) {
        for (std::size_t c = 0; c < g.cols(); ++c) da(r, c / n.aux) += g(r, c);
      }
      return;
    case Op::kTileCols:
      for (std::size_t r = 0; r < g.rows(); ++r) {
        for (std::size_t c = 0; c < g.cols(); ++c) da(r, c % a.cols()) += g(r, c);
      }
      return;
    case Op::kGatherCols:
      for (std::size_t r = 0; r < g.rows(); ++r) da(r, n.indices[r]) += g[r];
      return;
    case Op::kBatchedMatvec: {
      // a = w (r x m*k); second operand x (r x k)
      const Tensor& x = nodes_[n.b].value();
      const std::size_t m = n.aux;
      const std::size_t k = x.cols();
      const bool gx = wants(n.b);
      Tensor* dx = gx ? &slot(grads, n.b, x) : nullptr;
      for (std::size_t r = 0; r < g.rows(); ++r) {
        const double* wr = a.data() + r * m * k;
        double* dwr = da.data() + r * m * k;
        const double* xr = x.data() + r * k;
        for (std::size_t i = 0; i < m; ++i) {
          const double gi = g(r, i);
          if (gi == 0.0) continue;
          for (std::size_t j = 0; j < k; ++j) dwr[i * k + j] += gi * xr[j];
          if (gx) {
            double* dxr = dx->data() + r * k;
            for (std::size_t j = 0; j < k; ++j) dxr[j] += gi * wr[i * k + j];
          }
        }
      }
      return;
    }
    default:
      throw std::logic_error(std::string("backward: unhandled op ") + op_name(n.op));
  }
}

// ---------------------------------------------------------------------------
// Primitives

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  if (x.cols() != y.rows()) {
    shape_fail(Op::kMatmul, x.shape_string() + " * " + y.shape_string());
  }
  Tape::Node n = make(Op::kMatmul, a, b);
  n.own = Tensor(x.rows(), y.cols());
  view(n.own).noalias() = view(x) * view(y);
  return t.push(std::move(n));
}

Var add(Var a, Var b) { return binary(Op::kAdd, a, b); }
Var sub(Var a, Var b) { return binary(Op::kSub, a, b); }
Var mul(Var a, Var b) { return binary(Op::kMul, a, b); }

Var scale(Var a, double s) {
  Tape& t = tape_of(a);
  Tape::Node n = make(Op::kScale, a);
  n.scalar = s;
  const Tensor& x = a.value();
  n.own = Tensor(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) n.own[i] = s * x[i];
  return t.push(std::move(n));
}

Var add_scalar(Var a, double s) {
  Tape& t = tape_of(a);
  Tape::Node n = make(Op::kAddScalar, a);
  n.scalar = s;
  const Tensor& x = a.value();
  n.own = Tensor(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) n.own[i] = x[i] + s;
  return t.push(std::move(n));
}

Var relu(Var a) {
  Tape& t = tape_of(a);
  for (double v : a.value().values()) t.note_kink(std::abs(v));
  return unary(Op::kRelu, a, [](double v) { return v > 0.0 ? v : 0.0; });
}

Var softplus(Var a) { return unary(Op::kSoftplus, a, softplus_value); }
Var sigmoid(Var a) { return unary(Op::kSigmoid, a, sigmoid_value); }
Var tanh(Var a) { return unary(Op::kTanh, a, [](double v) { return std::tanh(v); }); }

Var abs(Var a) {
  Tape& t = tape_of(a);
  for (double v : a.value().values()) t.note_kink(std::abs(v));
  return unary(Op::kAbs, a, [](double v) { return std::abs(v); });
}

Var cos(Var a) { return unary(Op::kCos, a, [](double v) { return std::cos(v); }); }

Var huber(Var a, double kappa) {
  if (!(kappa > 0.0)) shape_fail(Op::kHuber, "kappa must be positive");
  Tape& t = tape_of(a);
  Tape::Node n = make(Op::kHuber, a);
  n.scalar = kappa;
  const Tensor& x = a.value();
  n.own = Tensor(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = std::abs(x[i]);
    n.own[i] = d <= kappa ? 0.5 * d * d : kappa * (d - 0.5 * kappa);
  }
  return t.push(std::move(n));
}

namespace {
Var reduce_all(Var a, double s) {
  Tape& t = tape_of(a);
  Tape::Node n = make(Op::kSum, a);
  n.scalar = s;
  double acc = 0.0;
  for (double v : a.value().values()) acc += v;
  n.own = Tensor::scalar(s * acc);
  return t.push(std::move(n));
}
}  // namespace

Var sum(Var a) { return reduce_all(a, 1.0); }

Var mean(Var a) {
  const std::size_t n = a.value().size();
  if (n == 0) shape_fail(Op::kSum, "mean of an empty tensor");
  return reduce_all(a, 1.0 / static_cast<double>(n));
}

Var row_mean(Var a) {
  Tape& t = tape_of(a);
  const Tensor& x = a.value();
  if (x.cols() == 0) shape_fail(Op::kRowMean, "no columns");
  Tape::Node n = make(Op::kRowMean, a);
  n.own = Tensor(x.rows(), 1);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < x.cols(); ++c) s += x(r, c);
    n.own[r] = s / static_cast<double>(x.cols());
  }
  return t.push(std::move(n));
}

Var row_max(Var a) {
  Tape& t = tape_of(a);
  const Tensor& x = a.value();
  if (x.cols() == 0) shape_fail(Op::kRowMax, "no columns");
  Tape::Node n = make(Op::kRowMax, a);
  n.own = Tensor(x.rows(), 1);
  n.indices.resize(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    std::size_t best = 0;
    double second = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 1; c < x.cols(); ++c) {
      if (x(r, c) > x(r, best)) {
        second = x(r, best);
        best = c;
      } else if (x(r, c) > second) {
        second = x(r, c);
      }
    }
    if (x.cols() > 1) t.note_kink(x(r, best) - second);
    n.indices[r] = static_cast<std::uint32_t>(best);
    n.own[r] = x(r, best);
  }
  return t.push(std::move(n));
}

namespace {
Var group_rows(Op op, Var a, std::size_t k) {
  Tape& t = tape_of(a);
  const Tensor& x = a.value();
  if (k == 0 || x.rows() % k != 0) {
    shape_fail(op, "row count " + std::to_string(x.rows()) + " is not a multiple of " +
                       std::to_string(k));
  }
  Tape::Node n = make(op, a);
  n.aux = k;
  const std::size_t groups = x.rows() / k;
  const double s = op == Op::kGroupMeanRows ? 1.0 / static_cast<double>(k) : 1.0;
  n.own = Tensor(groups, x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t c = 0; c < x.cols(); ++c) n.own(r / k, c) += s * x(r, c);
  }
  return t.push(std::move(n));
}
}  // namespace

Var group_sum_rows(Var a, std::size_t n) { return group_rows(Op::kGroupSumRows, a, n); }
Var group_mean_rows(Var a, std::size_t n) { return group_rows(Op::kGroupMeanRows, a, n); }

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) shape_fail(Op::kConcatCols, "no inputs");
  Tape& t = tape_of(parts[0]);
  const std::size_t rows = parts[0].value().rows();
  std::size_t cols = 0;
  Tape::Node n;
  n.op = Op::kConcatCols;
  for (const Var& p : parts) {
    if (p.tape() != &t) throw std::logic_error("concat_cols: mixed tapes");
    if (p.value().rows() != rows) {
      shape_fail(Op::kConcatCols, "row mismatch " + p.value().shape_string());
    }
    cols += p.value().cols();
    n.inputs.push_back(p.id());
    n.needs_grad = n.needs_grad || t.node(p.id()).needs_grad;
  }
  n.a = parts[0].id();
  n.own = Tensor(rows, cols);
  std::size_t off = 0;
  for (const Var& p : parts) {
    const Tensor& x = p.value();
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < x.cols(); ++c) n.own(r, off + c) = x(r, c);
    }
    off += x.cols();
  }
  return t.push(std::move(n));
}

Var slice_cols(Var a, std::size_t begin, std::size_t count) {
  Tape& t = tape_of(a);
  const Tensor& x = a.value();
  if (begin + count > x.cols()) shape_fail(Op::kSliceCols, "range exceeds " + x.shape_string());
  Tape::Node n = make(Op::kSliceCols, a);
  n.aux = begin;
  n.own = Tensor(x.rows(), count);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t c = 0; c < count; ++c) n.own(r, c) = x(r, begin + c);
  }
  return t.push(std::move(n));
}

Var repeat_rows(Var a, std::size_t k) {
  Tape& t = tape_of(a);
  const Tensor& x = a.value();
  if (k == 0) shape_fail(Op::kRepeatRows, "zero repeats");
  Tape::Node n = make(Op::kRepeatRows, a);
  n.aux = k;
  n.own = Tensor(x.rows() * k, x.cols());
  for (std::size_t r = 0; r < n.own.rows(); ++r) {
    std::copy_n(x.data() + (r / k) * x.cols(), x.cols(), n.own.data() + r * x.cols());
  }
  return t.push(std::move(n));
}

Var tile_rows(Var a, std::size_t k) {
  Tape& t = tape_of(a);
  const Tensor& x = a.value();
  if (k == 0) shape_fail(Op::kTileRows, "zero repeats");
  Tape::Node n = make(Op::kTileRows, a);
  n.aux = k;
  n.own = Tensor(x.rows() * k, x.cols());
  for (std::size_t i = 0; i < k; ++i) {
    std::copy(x.values().begin(), x.values().end(), n.own.data() + i * x.size());
  }
  return t.push(std::move(n));
}

Var repeat_cols(Var a, std::size_t k) {
  Tape& t = tape_of(a);
  const Tensor& x = a.value();
  if (k == 0) shape_fail(Op::kRepeatCols, "zero repeats");
  Tape::Node n = make(Op::kRepeatCols, a);
  n.aux = k;
  n.own = Tensor(x.rows(), x.cols() * k);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t c = 0; c < n.own.cols(); ++c) n.own(r, c) = x(r, c / k);
  }
  return t.push(std::move(n));
}

Var tile_cols(Var a, std::size_t k) {
  Tape& t = tape_of(a);
  const Tensor& x = a.value();
  if (k == 0) shape_fail(Op::kTileCols, "zero repeats");
  Tape::Node n = make(Op::kTileCols, a);
  n.aux = k;
  n.own = Tensor(x.rows(), x.cols() * k);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t c = 0; c < n.own.cols(); ++c) n.own(r, c) = x(r, c % x.cols());
  }
  return t.push(std::move(n));
}

Var gather_cols(Var a, std::span<const std::size_t> cols) {
  Tape& t = tape_of(a);
  const Tensor& x = a.value();
  if (cols.size() != x.rows()) {
    shape_fail(Op::kGatherCols, std::to_string(cols.size()) + " indices for " + x.shape_string());
  }
  Tape::Node n = make(Op::kGatherCols, a);
  n.own = Tensor(x.rows(), 1);
  n.indices.resize(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    if (cols[r] >= x.cols()) shape_fail(Op::kGatherCols, "column index out of range");
    n.indices[r] = static_cast<std::uint32_t>(cols[r]);
    n.own[r] = x(r, cols[r]);
  }
  return t.push(std::move(n));
}

Var batched_matvec(Var w, Var x, std::size_t out_dim) {
  Tape& t = tape_of(w);
  const Tensor& W = w.value();
  const Tensor& X = x.value();
  const std::size_t k = X.cols();
  if (W.rows() != X.rows() || W.cols() != out_dim * k) {
    shape_fail(Op::kBatchedMatvec, "weights " + W.shape_string() + " incompatible with input " +
                                       X.shape_string() + " and output width " +
                                       std::to_string(out_dim));
  }
  Tape::Node n = make(Op::kBatchedMatvec, w, x);
  n.aux = out_dim;
  n.own = Tensor(W.rows(), out_dim);
  for (std::size_t r = 0; r < W.rows(); ++r) {
    const double* wr = W.data() + r * out_dim * k;
    const double* xr = X.data() + r * k;
    for (std::size_t i = 0; i < out_dim; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < k; ++j) s += wr[i * k + j] * xr[j];
      n.own(r, i) = s;
    }
  }
  return t.push(std::move(n));
}

Var reshape(Var a, std::size_t rows, std::size_t cols) {
  Tape& t = tape_of(a);
  const Tensor& x = a.value();
  if (rows * cols != x.size()) {
    shape_fail(Op::kReshape, "cannot view " + x.shape_string() + " with " +
                                 std::to_string(rows * cols) + " elements");
  }
  Tape::Node n = make(Op::kReshape, a);
  n.own = x;
  n.own.reshape(rows, cols);
  return t.push(std::move(n));
}

}  // namespace safemarl::diff
