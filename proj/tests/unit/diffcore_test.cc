#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "safemarl/diffcore/adam.h"
#include "safemarl/diffcore/gradcheck.h"
#include "safemarl/diffcore/ops.h"
#include "safemarl/diffcore/random.h"

namespace {

using namespace safemarl::diff;

Tensor random_tensor(std::size_t r, std::size_t c, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(r, c);
  for (double& v : t.values()) v = safemarl::uniform_real(rng, lo, hi);
  return t;
}

// Values whose magnitude stays at least `gap` away from zero.
Tensor away_from_zero(std::size_t r, std::size_t c, std::mt19937_64& rng, double gap) {
  Tensor t(r, c);
  for (double& v : t.values()) {
    const double m = safemarl::uniform_real(rng, gap, 1.0);
    v = (rng() & 1) ? m : -m;
  }
  return t;
}

TEST(Tensor, RejectsDataOfWrongLength) {
  EXPECT_THROW(Tensor(2, 2, std::vector<double>{1, 2, 3}), ShapeError);
}

TEST(Tensor, ReshapeKeepsElementCount) {
  Tensor t(2, 3, 1.0);
  t.reshape(3, 2);
  EXPECT_EQ(t.rows(), 3u);
  EXPECT_THROW(t.reshape(4, 2), ShapeError);
}

TEST(Ops, MatmulByIdentityIsNoop) {
  Tape tape;
  Tensor a = Tensor::from_rows({{1.5, -2.0}, {0.25, 7.0}});
  Var out = matmul(tape.constant(Tensor::identity(2)), tape.constant(a));
  EXPECT_EQ(out.value(), a);
}

TEST(Ops, ReluClampsNegatives) {
  Tape tape;
  EXPECT_EQ(relu(tape.constant(Tensor::scalar(-3.0))).item(), 0.0);
  Var r = relu(tape.constant(Tensor::row({-1.0, 2.0})));
  EXPECT_EQ(r.value(), Tensor::row({0.0, 2.0}));
}

TEST(Ops, ShapeMismatchNamesPrimitive) {
  Tape tape;
  Var a = tape.constant(Tensor(2, 3));
  Var b = tape.constant(Tensor(2, 3));
  try {
    matmul(a, b);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("matmul"), std::string::npos);
  }
  EXPECT_THROW(add(a, tape.constant(Tensor(3, 2))), ShapeError);
  EXPECT_THROW(slice_cols(a, 2, 2), ShapeError);
  EXPECT_THROW(group_sum_rows(a, 4), ShapeError);
}

TEST(Ops, RowMaxBreaksTiesByLowestColumn) {
  ParameterSet ps;
  ParamId id = ps.add("x", Tensor::row({1.0, 3.0, 3.0}));
  Tape tape;
  Var m = row_max(tape.param(ps, id));
  EXPECT_EQ(m.item(), 3.0);
  GradientVector g = tape.backward(m, ps);
  EXPECT_EQ(g.values, (std::vector<double>{0.0, 1.0, 0.0}));
}

TEST(Ops, BroadcastAddOfRowAndColumn) {
  Tape tape;
  Var a = tape.constant(Tensor::from_rows({{1, 2}, {3, 4}}));
  EXPECT_EQ(add(a, tape.constant(Tensor::row({10, 20}))).value(), Tensor::from_rows({{11, 22}, {13, 24}}));
  EXPECT_EQ(add(a, tape.constant(Tensor::column(std::vector<double>{10, 20}))).value(),
            Tensor::from_rows({{11, 12}, {23, 24}}));
  EXPECT_EQ(mul(a, tape.constant(Tensor::scalar(2))).value(), Tensor::from_rows({{2, 4}, {6, 8}}));
}

TEST(Backward, SquareAtThree) {
  ParameterSet ps;
  ParamId x = ps.add("x", Tensor::scalar(3.0));
  Tape tape;
  Var v = tape.param(ps, x);
  GradientVector g = tape.backward(mul(v, v), ps);
  EXPECT_DOUBLE_EQ(g[0], 6.0);
}

TEST(Backward, AbsAtMinusTwo) {
  ParameterSet ps;
  ps.add("x", Tensor::scalar(-2.0));
  Tape tape;
  GradientVector g = tape.backward(safemarl::diff::abs(tape.param(ps, ParamId{0})), ps);
  EXPECT_DOUBLE_EQ(g[0], -1.0);
}

TEST(Backward, SubgradientsAtZeroAreZero) {
  ParameterSet ps;
  ps.add("x", Tensor::row({0.0, 0.0}));
  Tape tape;
  Var x = tape.param(ps, ParamId{0});
  Var out = add(sum(relu(x)), sum(safemarl::diff::abs(x)));
  EXPECT_EQ(tape.backward(out, ps).values, (std::vector<double>{0.0, 0.0}));
}

TEST(Backward, RejectsNonScalarOutput) {
  ParameterSet ps;
  ps.add("x", Tensor(2, 2, 1.0));
  Tape tape;
  EXPECT_THROW(tape.backward(tape.param(ps, ParamId{0}), ps), ShapeError);
}

TEST(Backward, UnusedParametersGetZero) {
  ParameterSet ps;
  ParamId a = ps.add("a", Tensor::scalar(2.0));
  ps.add("b", Tensor(1, 3, 5.0));
  Tape tape;
  GradientVector g = tape.backward(scale(tape.param(ps, a), 4.0), ps);
  EXPECT_EQ(g.values, (std::vector<double>{4.0, 0.0, 0.0, 0.0}));
}

TEST(Backward, LinearInSumOfLosses) {
  std::mt19937_64 rng(11);
  ParameterSet ps;
  ParamId w = ps.add("w", random_tensor(3, 4, rng));
  ParamId b = ps.add("b", random_tensor(1, 4, rng));
  const Tensor x = random_tensor(5, 3, rng);
  auto f1 = [&](Tape& t, const ParameterSet& p) {
    return mean(tanh(add(matmul(t.constant(x), t.param(p, w)), t.param(p, b))));
  };
  auto f2 = [&](Tape& t, const ParameterSet& p) { return sum(softplus(t.param(p, w))); };
  const GradientVector g1 = value_and_grad(f1, ps).grad;
  const GradientVector g2 = value_and_grad(f2, ps).grad;
  const GradientVector g12 =
      value_and_grad([&](Tape& t, const ParameterSet& p) { return add(f1(t, p), f2(t, p)); }, ps).grad;
  for (std::size_t i = 0; i < g12.size(); ++i) EXPECT_NEAR(g12[i], g1[i] + g2[i], 1e-10);
}

TEST(Backward, ReplayIsBitIdentical) {
  std::mt19937_64 rng(5);
  ParameterSet ps;
  ParamId w = ps.add("w", random_tensor(4, 4, rng));
  const Tensor x = random_tensor(3, 4, rng);
  LossBuilder f = [&](Tape& t, const ParameterSet& p) {
    return mean(cos(matmul(t.constant(x), t.param(p, w))));
  };
  const ValueAndGrad a = value_and_grad(f, ps);
  const ValueAndGrad b = value_and_grad(f, ps);
  EXPECT_EQ(a.value, b.value);
  EXPECT_EQ(a.grad, b.grad);
}

TEST(FiniteDiff, QuadraticIsNearlyExact) {
  ParameterSet ps;
  ps.add("x", Tensor::row({0.3, -1.2, 2.0}));
  LossBuilder f = [](Tape& t, const ParameterSet& p) {
    Var x = t.param(p, ParamId{0});
    return add(sum(mul(x, x)), scale(sum(x), 3.0));
  };
  EXPECT_LE(finite_diff_check(f, ps, 1e-5), 1e-8);
}

TEST(FiniteDiff, ConstantLossHasZeroGradient) {
  ParameterSet ps;
  ps.add("x", Tensor::row({1.0, 2.0}));
  LossBuilder f = [](Tape& t, const ParameterSet&) { return t.constant(Tensor::scalar(4.0)); };
  EXPECT_TRUE(value_and_grad(f, ps).grad.is_zero());
  EXPECT_EQ(finite_diff_check(f, ps, 1e-5), 0.0);
}

TEST(FiniteDiff, ReportsNonFiniteProbe) {
  ParameterSet ps;
  ps.add("x", Tensor::row({1.0, 1e308}));
  LossBuilder f = [](Tape& t, const ParameterSet& p) {
    Var x = t.param(p, ParamId{0});
    return sum(mul(x, x));
  };
  try {
    finite_diff_check(f, ps, 1e-5);
    FAIL() << "expected NonFiniteLoss";
  } catch (const NonFiniteLoss& e) {
    EXPECT_EQ(e.parameter_index(), 0u);
  }
}

TEST(FiniteDiff, RestoresParameters) {
  ParameterSet ps;
  ps.add("x", Tensor::row({0.1, 0.2}));
  const auto before = ps.flatten();
  finite_diff_check([](Tape& t, const ParameterSet& p) { return sum(tanh(t.param(p, ParamId{0}))); }, ps,
                    1e-5);
  EXPECT_EQ(ps.flatten(), before);
}

TEST(FiniteDiff, TwoLayerReluNetwork) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 20; ++trial) {
    ParameterSet ps;
    ParamId w1 = ps.add("w1", random_tensor(4, 6, rng));
    ParamId b1 = ps.add("b1", random_tensor(1, 6, rng));
    ParamId w2 = ps.add("w2", random_tensor(6, 2, rng));
    const Tensor x = random_tensor(5, 4, rng);
    LossBuilder f = [&](Tape& t, const ParameterSet& p) {
      Var h = relu(add(matmul(t.constant(x), t.param(p, w1)), t.param(p, b1)));
      return mean(huber(matmul(h, t.param(p, w2)), 1.0));
    };
    GradCheckReport r = finite_diff_report(f, ps, 1e-5);
    if (r.kink_margin < 1e-3) continue;
    EXPECT_LE(r.max_relative_error, 1e-4) << "trial " << trial;
  }
}

// One gradient check per primitive, at 100 random points each.
struct PrimitiveCase {
  std::string name;
  std::function<Var(Tape&, Var, Var)> op;
  std::size_t ar, ac, br, bc;
  bool kinked = false;
};

class PrimitiveGradient : public ::testing::TestWithParam<PrimitiveCase> {};

TEST_P(PrimitiveGradient, MatchesCentralDifferences) {
  const PrimitiveCase& pc = GetParam();
  std::mt19937_64 rng(std::hash<std::string>{}(pc.name));
  const Tensor w = random_tensor(pc.ar * pc.ac, 1, rng);
  int checked = 0;
  for (int trial = 0; trial < 100; ++trial) {
    ParameterSet ps;
    ParamId a = ps.add("a", pc.kinked ? away_from_zero(pc.ar, pc.ac, rng, 1e-3) : random_tensor(pc.ar, pc.ac, rng));
    ParamId b = ps.add("b", away_from_zero(pc.br, pc.bc, rng, 0.1));
    LossBuilder f = [&](Tape& t, const ParameterSet& p) {
      Var out = pc.op(t, t.param(p, a), t.param(p, b));
      // Random linear read-out so every output entry carries a distinct weight.
      Var flat = reshape(out, 1, out.rows() * out.cols());
      Tensor r(1, flat.cols());
      for (std::size_t i = 0; i < r.size(); ++i) r[i] = 0.5 + w[i % w.size()];
      return sum(mul(flat, t.constant(std::move(r))));
    };
    GradCheckReport rep = finite_diff_report(f, ps, 1e-5);
    if (rep.kink_margin < 1e-3) continue;
    ++checked;
    ASSERT_LE(rep.max_relative_error, 1e-4) << pc.name << " trial " << trial;
  }
  EXPECT_GE(checked, 90);
}

INSTANTIATE_TEST_SUITE_P(
    AllPrimitives, PrimitiveGradient,
    ::testing::Values(
        PrimitiveCase{"matmul", [](Tape&, Var a, Var b) { return matmul(a, b); }, 3, 4, 4, 2},
        PrimitiveCase{"add", [](Tape&, Var a, Var b) { return add(a, b); }, 3, 4, 3, 4},
        PrimitiveCase{"add_row", [](Tape&, Var a, Var b) { return add(a, b); }, 3, 4, 1, 4},
        PrimitiveCase{"add_col", [](Tape&, Var a, Var b) { return add(a, b); }, 3, 4, 3, 1},
        PrimitiveCase{"sub_scalar", [](Tape&, Var a, Var b) { return sub(a, b); }, 3, 4, 1, 1},
        PrimitiveCase{"mul", [](Tape&, Var a, Var b) { return mul(a, b); }, 3, 4, 3, 4},
        PrimitiveCase{"mul_row", [](Tape&, Var a, Var b) { return mul(a, b); }, 3, 4, 1, 4},
        PrimitiveCase{"scale", [](Tape&, Var a, Var) { return add_scalar(scale(a, -1.7), 0.3); }, 2, 3, 1, 1},
        PrimitiveCase{"relu", [](Tape&, Var a, Var) { return relu(a); }, 3, 3, 1, 1, true},
        PrimitiveCase{"abs", [](Tape&, Var a, Var) { return safemarl::diff::abs(a); }, 3, 3, 1, 1, true},
        PrimitiveCase{"softplus", [](Tape&, Var a, Var) { return softplus(scale(a, 4.0)); }, 3, 3, 1, 1},
        PrimitiveCase{"sigmoid", [](Tape&, Var a, Var) { return sigmoid(scale(a, 3.0)); }, 3, 3, 1, 1},
        PrimitiveCase{"tanh", [](Tape&, Var a, Var) { return tanh(scale(a, 2.0)); }, 3, 3, 1, 1},
        PrimitiveCase{"cos", [](Tape&, Var a, Var) { return cos(scale(a, 3.0)); }, 3, 3, 1, 1},
        PrimitiveCase{"huber", [](Tape&, Var a, Var) { return huber(scale(a, 3.0), 1.0); }, 4, 3, 1, 1},
        PrimitiveCase{"sum_mean", [](Tape&, Var a, Var) { return add(sum(a), mean(mul(a, a))); }, 3, 2, 1, 1},
        PrimitiveCase{"row_mean", [](Tape&, Var a, Var) { return row_mean(a); }, 3, 4, 1, 1},
        PrimitiveCase{"row_max", [](Tape&, Var a, Var) { return row_max(a); }, 3, 4, 1, 1, true},
        PrimitiveCase{"group_sum_rows", [](Tape&, Var a, Var) { return group_sum_rows(a, 2); }, 6, 2, 1, 1},
        PrimitiveCase{"group_mean_rows", [](Tape&, Var a, Var) { return group_mean_rows(a, 3); }, 6, 2, 1, 1},
        PrimitiveCase{"concat_cols",
                      [](Tape&, Var a, Var b) {
                        std::vector<Var> parts{a, b, a};
                        return concat_cols(parts);
                      },
                      3, 2, 3, 1},
        PrimitiveCase{"slice_cols", [](Tape&, Var a, Var) { return slice_cols(a, 1, 2); }, 3, 4, 1, 1},
        PrimitiveCase{"repeat_rows", [](Tape&, Var a, Var) { return repeat_rows(a, 3); }, 2, 3, 1, 1},
        PrimitiveCase{"tile_rows", [](Tape&, Var a, Var) { return tile_rows(a, 3); }, 2, 3, 1, 1},
        PrimitiveCase{"repeat_cols", [](Tape&, Var a, Var) { return repeat_cols(a, 2); }, 2, 3, 1, 1},
        PrimitiveCase{"tile_cols", [](Tape&, Var a, Var) { return tile_cols(a, 2); }, 2, 3, 1, 1},
        PrimitiveCase{"gather_cols",
                      [](Tape&, Var a, Var) {
                        std::vector<std::size_t> c{2, 0, 3};
                        return gather_cols(a, c);
                      },
                      3, 4, 1, 1},
        PrimitiveCase{"batched_matvec", [](Tape&, Var a, Var b) { return batched_matvec(a, b, 2); }, 3, 6, 3, 3},
        PrimitiveCase{"reshape", [](Tape&, Var a, Var b) { return mul(reshape(a, 2, 6), b); }, 3, 4, 1, 6}),
    [](const ::testing::TestParamInfo<PrimitiveCase>& info) { return info.param.name; });

TEST(Adam, FirstStepMovesByLearningRateAgainstGradientSign) {
  ParameterSet ps;
  ps.add("x", Tensor::row({1.0, -2.0, 0.5}));
  Adam adam(AdamConfig{0.1, 0.9, 0.999, 1e-8}, 3);
  GradientVector g(std::vector<double>{3.0, -0.5, 0.0});
  adam.step(ps, g);
  // Bias-corrected moments give m/sqrt(v) = sign(g) on the first step.
  EXPECT_NEAR(ps.get_flat(0), 0.9, 1e-7);
  EXPECT_NEAR(ps.get_flat(1), -1.9, 1e-7);
  EXPECT_EQ(ps.get_flat(2), 0.5);
  EXPECT_EQ(adam.steps(), 1u);
}

TEST(Adam, MinimizesQuadratic) {
  ParameterSet ps;
  ps.add("x", Tensor::row({3.0, -4.0}));
  Adam adam(AdamConfig{0.05}, 2);
  for (int i = 0; i < 2000; ++i) {
    GradientVector g(std::vector<double>{2.0 * (ps.get_flat(0) - 1.0), 2.0 * (ps.get_flat(1) + 1.0)});
    adam.step(ps, g);
  }
  EXPECT_NEAR(ps.get_flat(0), 1.0, 1e-3);
  EXPECT_NEAR(ps.get_flat(1), -1.0, 1e-3);
}

TEST(ParameterSet, FlattenAssignRoundTrip) {
  std::mt19937_64 rng(3);
  ParameterSet ps;
  ps.add("a", random_tensor(2, 3, rng));
  ps.add("b", random_tensor(1, 4, rng));
  EXPECT_EQ(ps.total_size(), 10u);
  auto flat = ps.flatten();
  for (double& v : flat) v *= 2.0;
  ps.assign(flat);
  EXPECT_EQ(ps.flatten(), flat);
  EXPECT_EQ(ps.offset(ParamId{1}), 6u);
  EXPECT_THROW(ps.assign(std::vector<double>(3)), ShapeError);
}

}  // namespace
