#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "gpg/adagrad.hpp"

using namespace gpg;

TEST(Adagrad, ZeroGradientLeavesParametersUnchanged) {
  Parameter p("p", Tensor::vector({0.3, -2.0, 7.5}));
  Parameter* ps[] = {&p};
  AdagradState st;
  adagrad_step(ps, st);
  EXPECT_EQ(p.value.values, (std::vector<double>{0.3, -2.0, 7.5}));
}

TEST(Adagrad, SingleStepArithmetic) {
  Parameter p("p", Tensor::vector({0.0}));
  p.grad = {1.0};
  Parameter* ps[] = {&p};
  AdagradState st({0.1, 0.0, 1e-8, 0.0});
  adagrad_step(ps, st);
  // acc = 1, update = 0.1 * 1 / (1 + 1e-8)
  EXPECT_NEAR(p.value[0], -0.1 / (1.0 + 1e-8), 1e-15);
}

TEST(Adagrad, RepeatedGradientGivesShrinkingSteps) {
  // Hand simulation: with g = 1 and acc0 = 0.1 the k-th step is
  // lr / (sqrt(0.1 + k) + eps), strictly decreasing in k.
  Parameter p("p", Tensor::vector({0.0}));
  Parameter* ps[] = {&p};
  AdagradState st({0.15, 0.1, 1e-8, 0.0});
  double prev_value = 0.0, prev_step = INFINITY;
  for (int k = 1; k <= 10; ++k) {
    p.grad = {1.0};
    adagrad_step(ps, st);
    const double step = prev_value - p.value[0];
    EXPECT_NEAR(step, 0.15 / (std::sqrt(0.1 + k) + 1e-8), 1e-15);
    EXPECT_LE(step, prev_step);
    prev_step = step;
    prev_value = p.value[0];
  }
}

TEST(Adagrad, AccumulatorsNeverDecrease) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> d(0.0, 3.0);
  Parameter a("a", Tensor::zeros({4})), b("b", Tensor::zeros({2, 3}));
  Parameter* ps[] = {&a, &b};
  AdagradState st;
  std::vector<std::vector<double>> before;
  for (int step = 0; step < 50; ++step) {
    for (auto* p : ps)
      for (auto& g : p->grad) g = d(rng);
    adagrad_step(ps, st);
    if (!before.empty())
      for (std::size_t k = 0; k < 2; ++k)
        for (std::size_t i = 0; i < before[k].size(); ++i) EXPECT_GE(st.accumulators[k][i], before[k][i]);
    before = st.accumulators;
  }
}

TEST(Adagrad, ShapeChangeIsRejected) {
  Parameter a("a", Tensor::zeros({2}));
  Parameter* ps[] = {&a};
  AdagradState st;
  adagrad_step(ps, st);
  a.grad.resize(3);
  EXPECT_THROW(adagrad_step(ps, st), DimensionError);
}

TEST(Adagrad, DefaultsMatchDocumentedValues) {
  AdagradOptions o;
  EXPECT_EQ(o.learning_rate, 0.15);
  EXPECT_EQ(o.accumulator_init, 0.1);
  EXPECT_EQ(o.epsilon, 1e-8);
  EXPECT_EQ(o.clip_norm, 2.0);
}

TEST(ClipGradNorm, RescalesOnlyAboveThreshold) {
  Parameter a("a", Tensor::zeros({2})), b("b", Tensor::zeros({1}));
  Parameter* ps[] = {&a, &b};
  a.grad = {3.0, 0.0};
  b.grad = {4.0};
  EXPECT_DOUBLE_EQ(clip_grad_norm(ps, 2.0), 5.0);
  EXPECT_NEAR(a.grad[0], 1.2, 1e-15);
  EXPECT_NEAR(b.grad[0], 1.6, 1e-15);
  a.grad = {0.3, 0.4};
  b.grad = {0.0};
  EXPECT_DOUBLE_EQ(clip_grad_norm(ps, 2.0), 0.5);
  EXPECT_EQ(a.grad, (std::vector<double>{0.3, 0.4}));
}
