// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "takd/adam.hpp"
#include "takd/ops.hpp"

using namespace takd;

namespace {

void step_with(Tensor<double>& p, std::vector<double> g, AdamState<double>& st) {
  std::vector<Tensor<double>> params{p};
  std::vector<std::span<const double>> grads{g};
  adam_step<double>(params, grads, st);
}

}  // namespace

TEST(Adam, ZeroGradientLeavesParamsUnchanged) {
  Tensor<double> p(Shape{3}, std::vector<double>{1, -2, 3});
  AdamState<double> st;
  step_with(p, {0, 0, 0}, st);
  step_with(p, {0, 0, 0}, st);
  EXPECT_EQ(p[0], 1);
  EXPECT_EQ(p[1], -2);
  EXPECT_EQ(p[2], 3);
}

TEST(Adam, FirstStepIsLearningRateTimesSign) {
  Tensor<double> p = Tensor<double>::scalar(0.5);
  AdamState<double> st;
  step_with(p, {1.0}, st);
  EXPECT_NEAR(p[0] - 0.5, -0.01 / (1 + 1e-8), 1e-15);
  EXPECT_EQ(st.step, 1u);
}

TEST(Adam, ConstantGradientMovesMonotonically) {
  Tensor<double> p(Shape{2}, std::vector<double>{0, 0});
  AdamState<double> st;
  double prev0 = 0, prev1 = 0;
  for (int i = 0; i < 5; ++i) {
    step_with(p, {2.0, -3.0}, st);
    EXPECT_LT(p[0], prev0);
    EXPECT_GT(p[1], prev1);
    prev0 = p[0];
    prev1 = p[1];
  }
  EXPECT_EQ(st.step, 5u);
}

TEST(Adam, MomentShapesFollowParameters) {
  Tensor<double> a(Shape{2, 3}), b(Shape{4});
  std::vector<Tensor<double>> params{a, b};
  std::vector<double> ga(6, 1.0), gb(4, 1.0);
  std::vector<std::span<const double>> grads{ga, gb};
  AdamState<double> st;
  adam_step<double>(params, grads, st);
  ASSERT_EQ(st.first.size(), 2u);
  EXPECT_EQ(st.first[0].size(), 6u);
  EXPECT_EQ(st.second[1].size(), 4u);
}

TEST(Adam, ShapeMismatchThrows) {
  Tensor<double> a(Shape{3});
  std::vector<Tensor<double>> params{a};
  std::vector<double> g(2, 1.0);
  std::vector<std::span<const double>> grads{g};
  AdamState<double> st;
  EXPECT_THROW(adam_step<double>(params, grads, st), ShapeError);
}

TEST(Adam, ClassReadsAccumulatedGradients) {
  Tensor<double> w(Shape{2}, std::vector<double>{1, 1});
  w.set_requires_grad();
  Adam<double> opt({w}, 0.1);
  {
    GradTape<double> tape;
    TapeScope<double> scope(tape);
    tape.backward(sum(square(w)));
  }
  opt.step();
  EXPECT_NEAR(w[0], 0.9, 1e-9);
  opt.zero_grad();
  EXPECT_EQ(w.grad()[0], 0.0);
}
