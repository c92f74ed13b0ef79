#include <gtest/gtest.h>

#include <cmath>
#include <memory>

#include "navil/finite_diff.hpp"
#include "navil/ops.hpp"
#include "navil/rng.hpp"
#include "navil/tape.hpp"

using namespace navil;

namespace {

constexpr double kH = 1e-6;
// Tighter than the 1e-4 acceptance bound; central differences resolve ~1e-6.
constexpr double kTol = 1e-5;

// Builds a scalar from `x` on a fresh tape and compares d/dx with central differences.
template <class Build>
void expect_grad_matches(const Tensor& x0, Build build) {
  ParameterStore store;
  store.add("x", ParamGroup::kVision, x0);
  GradTape tape;
  const Var px = tape.param(store, "x");
  tape.backward(build(tape, px));
  const Tensor analytic = tape.grad(px);

  auto f = [&](const Tensor& theta) {
    ParameterStore s;
    s.add("x", ParamGroup::kVision, theta);
    GradTape g;
    return g.value(build(g, g.param(s, "x")))[0];
  };
  const Tensor numeric = finite_diff_grad(f, x0, kH);
  ASSERT_EQ(analytic.shape(), numeric.shape());
  for (std::size_t i = 0; i < numeric.numel(); ++i) {
    EXPECT_LT(relative_error(analytic[i], numeric[i], 1e-6), kTol) << "coordinate " << i;
  }
}

Var sum_weighted(GradTape& t, Var y, std::uint64_t seed) {
  // Random linear functional so every output coordinate matters.
  Rng rng(seed);
  const std::size_t n = t.value(y).numel();
  const Var w = t.constant(rng.normal_tensor({n, 1}, 1.0));
  auto idx = std::make_shared<std::vector<std::size_t>>(n);
  for (std::size_t i = 0; i < n; ++i) (*idx)[i] = i;
  const Var flat = ag::permute(t, y, idx, {1, n});
  return ag::matmul(t, flat, w);
}

}  // namespace

TEST(Tape, MatmulGradient) {
  Rng rng(1);
  const Tensor b = rng.normal_tensor({4, 3}, 1.0);
  expect_grad_matches(rng.normal_tensor({5, 4}, 1.0), [&](GradTape& t, Var x) {
    return sum_weighted(t, ag::matmul(t, x, t.constant(b)), 2);
  });
}

TEST(Tape, SiluRmsnormGradient) {
  Rng rng(3);
  const Tensor gain = rng.normal_tensor({6}, 1.0);
  expect_grad_matches(rng.normal_tensor({4, 6}, 1.0), [&](GradTape& t, Var x) {
    return sum_weighted(t, ag::rmsnorm(t, ag::silu(t, x), t.constant(gain), 1e-6), 4);
  });
}

TEST(Tape, RopeGradient) {
  Rng rng(5);
  const std::vector<int> pos{0, 3, 7};
  auto angles = std::make_shared<const std::vector<double>>(rope_angles_1d(pos, 4, kRopeBase));
  expect_grad_matches(rng.normal_tensor({3, 8}, 1.0), [&](GradTape& t, Var x) {
    return sum_weighted(t, ag::rope(t, x, angles, 2), 6);
  });
}

TEST(Tape, AttentionGradientCausalAndBidirectional) {
  Rng rng(7);
  const Tensor k = rng.normal_tensor({5, 8}, 1.0), v = rng.normal_tensor({5, 8}, 1.0);
  for (bool causal : {true, false}) {
    expect_grad_matches(rng.normal_tensor({5, 8}, 1.0), [&](GradTape& t, Var x) {
      // x feeds q, k and v so all three backward paths are exercised.
      const Var kk = ag::add(t, x, t.constant(k));
      const Var vv = ag::mul(t, x, t.constant(v));
      return sum_weighted(t, ag::attention(t, x, kk, vv, 2, causal), 8);
    });
  }
}

TEST(Tape, RoutedMatmulGradient) {
  Rng rng(9);
  auto route = std::make_shared<const std::vector<std::uint8_t>>(std::vector<std::uint8_t>{0, 1, 1, 0, 1});
  const Tensor x = rng.normal_tensor({5, 3}, 1.0), w1 = rng.normal_tensor({3, 4}, 1.0);
  expect_grad_matches(rng.normal_tensor({3, 4}, 1.0), [&](GradTape& t, Var w0) {
    return sum_weighted(t, ag::routed_matmul(t, t.constant(x), route, {w0, t.constant(w1)}), 10);
  });
}

TEST(Tape, CrossEntropyGradientAndMaskedMean) {
  Rng rng(11);
  auto targets = std::make_shared<const std::vector<int>>(std::vector<int>{1, 0, 3, 2});
  auto mask = std::make_shared<const std::vector<std::uint8_t>>(std::vector<std::uint8_t>{1, 0, 1, 1});
  expect_grad_matches(rng.normal_tensor({4, 5}, 1.0),
                      [&](GradTape& t, Var x) { return ag::cross_entropy(t, x, targets, mask); });

  // Masked rows get zero gradient.
  ParameterStore s;
  s.add("x", ParamGroup::kVision, rng.normal_tensor({4, 5}, 1.0));
  GradTape t;
  const Var x = t.param(s, "x");
  t.backward(ag::cross_entropy(t, x, targets, mask));
  for (std::size_t c = 0; c < 5; ++c) EXPECT_EQ(t.grad(x).at(1, c), 0.0);
}

TEST(Tape, GatherConcatInterleaveGradient) {
  Rng rng(13);
  auto ids = std::make_shared<const std::vector<int>>(std::vector<int>{2, 0, 2});
  auto from_a = std::make_shared<const std::vector<std::uint8_t>>(std::vector<std::uint8_t>{1, 0, 1, 0, 1});
  const Tensor other = rng.normal_tensor({2, 4}, 1.0);
  expect_grad_matches(rng.normal_tensor({3, 4}, 1.0), [&](GradTape& t, Var table) {
    const Var rows = ag::gather_rows(t, table, ids);
    const Var mixed = ag::interleave_rows(t, rows, t.constant(other), from_a);
    return sum_weighted(t, ag::concat_rows(t, {mixed, table}), 14);
  });
}

TEST(Tape, ParamLeafIsSharedAndGradsAccumulateIntoStore) {
  ParameterStore s;
  s.add("w", ParamGroup::kVision, Tensor::from_rows({{2.0}}));
  GradTape t;
  const Var a = t.param(s, "w");
  const Var b = t.param(s, "w");
  EXPECT_EQ(a.id, b.id);
  const Var y = ag::mul(t, a, b);  // w²
  t.backward(y);
  EXPECT_EQ(t.grad(a)[0], 4.0);
  t.accumulate_param_grads(s);
  t.accumulate_param_grads(s);
  EXPECT_EQ(s.get("w").grad[0], 8.0);
}

TEST(Tape, ReplayReproducesValuesBitwise) {
  Rng rng(15);
  ParameterStore s;
  s.add("x", ParamGroup::kVision, rng.normal_tensor({4, 8}, 1.0));
  GradTape t;
  const Var x = t.param(s, "x");
  const Var h = ag::silu(t, ag::attention(t, x, x, x, 2, true));
  ag::mean(t, {ag::cross_entropy(t, h, std::make_shared<const std::vector<int>>(std::vector<int>{1, 2, 3, 4}),
                                 std::make_shared<const std::vector<std::uint8_t>>(4, 1))});
  EXPECT_TRUE(t.replay());
}

TEST(Tape, BackwardRequiresScalar) {
  GradTape t;
  ParameterStore s;
  s.add("x", ParamGroup::kVision, Tensor::zeros({2, 2}));
  EXPECT_THROW(t.backward(t.param(s, "x")), ShapeError);
}

TEST(FiniteDiff, RestoresStoreBitwise) {
  Rng rng(17);
  ParameterStore s;
  s.add("a", ParamGroup::kVision, rng.normal_tensor({3, 3}, 1.0));
  const auto before = s.get("a").value;
  auto g = finite_diff_grad([&] {
    double acc = 0;
    for (double v : s.get("a").value.data()) acc += std::sin(v);
    return acc;
  }, s, 1e-5);
  EXPECT_EQ(s.get("a").value, before);
  for (std::size_t i = 0; i < 9; ++i) EXPECT_NEAR(g[0][i], std::cos(before[i]), 1e-9);
}

TEST(FiniteDiff, RelativeErrorFloor) {
  EXPECT_NEAR(relative_error(1.0, 1.1, 1e-6), 0.1 / 1.1, 1e-15);
  EXPECT_DOUBLE_EQ(relative_error(1e-9, 2e-9, 1e-6), 1e-9 / 1e-6);
}
