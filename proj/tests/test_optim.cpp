#include <gtest/gtest.h>

#include <cmath>

#include "deforma/common.hpp"
#include "deforma/optim.hpp"

using namespace deforma;

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  Adam opt;
  const std::size_t g = opt.add_group("all", 3, 0.1);
  std::vector<double> p{1.0, -2.0, 0.5};
  const auto before = p;
  for (int i = 0; i < 5; ++i) {
    opt.advance();
    opt.step(g, p, std::vector<double>(3, 0.0));
  }
  EXPECT_EQ(p, before);
}

TEST(Adam, FirstStepByHand) {
  // beta1 = 0: m = g = 1. v = (1 - 0.9) g^2 = 0.1, corrected v = 0.1 / (1 - 0.9) = 1.
  Adam opt;
  const std::size_t g = opt.add_group("w", 1, 0.1);
  std::vector<double> w{0.0};
  opt.advance();
  opt.step(g, w, std::vector<double>{1.0});
  EXPECT_DOUBLE_EQ(w[0], -0.1 / (1.0 + 1e-8));
  EXPECT_DOUBLE_EQ(opt.group(g).m[0], 1.0);
  EXPECT_DOUBLE_EQ(opt.group(g).v[0], 0.1);
}

TEST(Adam, ConvergesOnQuadratic) {
  Adam opt;
  const std::size_t g = opt.add_group("w", 1, 0.1);
  std::vector<double> w{0.0};
  for (int i = 0; i < 200; ++i) {
    opt.advance();
    opt.step(g, w, std::vector<double>{2.0 * (w[0] - 3.0)});
  }
  EXPECT_LT(std::abs(w[0] - 3.0), 1e-2);
}

TEST(Adam, SingleGroupHelperAndErrors) {
  Adam opt;
  opt.add_group("w", 2, 0.01);
  std::vector<double> w{1.0, 1.0};
  adam_step(opt, w, std::vector<double>{1.0, -1.0});
  EXPECT_EQ(opt.steps(), 1);
  EXPECT_LT(w[0], 1.0);
  EXPECT_GT(w[1], 1.0);
  EXPECT_THROW(opt.step(0, w, std::vector<double>{1.0}), InvalidArgument);
  EXPECT_THROW(opt.add_group("bad", 1, 0.0), InvalidArgument);
  Adam fresh;
  fresh.add_group("w", 1, 0.1);
  std::vector<double> x{0.0};
  EXPECT_THROW(fresh.step(0, x, std::vector<double>{1.0}), InvalidArgument);  // step before advance
}

TEST(Adam, GroupsShareTheStepCounter) {
  Adam a, b;
  a.add_group("x", 1, 0.05);
  a.add_group("y", 1, 0.05);
  b.add_group("x", 1, 0.05);
  std::vector<double> x1{0.0}, y1{0.0}, x2{0.0};
  for (int i = 0; i < 3; ++i) {
    a.advance();
    a.step(0, x1, std::vector<double>{0.5});
    a.step(1, y1, std::vector<double>{0.5});
    b.advance();
    b.step(0, x2, std::vector<double>{0.5});
  }
  EXPECT_EQ(x1, x2);
  EXPECT_EQ(y1, x2);
}

TEST(Hyperparameters, DefaultsEncodeTheReferenceTrainingSetup) {
  const TrainingHyperparams h;
  EXPECT_EQ(h.field_lr, 2e-5);
  EXPECT_EQ(h.discriminator_lr, 2e-4);
  EXPECT_EQ(h.adam.beta1, 0.0);
  EXPECT_EQ(h.adam.beta2, 0.9);
  EXPECT_EQ(h.adam.eps, 1e-8);
  EXPECT_TRUE(h.adam.bias_correction);
  EXPECT_EQ(h.batch_size, 32);
  EXPECT_EQ(h.resolution, 128);
  EXPECT_EQ(h.r1_weight, 10.0);
  const AdamConfig defaults;
  EXPECT_EQ(defaults.beta1, 0.0);
  EXPECT_EQ(defaults.beta2, 0.9);
}
