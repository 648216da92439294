#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "deforma/adversarial.hpp"
#include "deforma/oracle.hpp"

using namespace deforma;

namespace {

std::vector<std::vector<double>> batch(std::mt19937_64& rng, const ImageShape& shape, int n) {
  std::vector<std::vector<double>> out;
  for (int i = 0; i < n; ++i) out.push_back(toy_two_mode_sample(rng, shape));
  return out;
}

}  // namespace

TEST(Adversarial, ConstantZeroLogitGivesLnTwo) {
  const PatchDiscriminator d(ImageShape{}, 4, 16);
  const std::vector<double> zero(d.param_count(), 0.0);
  std::mt19937_64 rng(1);
  const auto real = batch(rng, d.shape(), 3), fake = batch(rng, d.shape(), 2);
  const GanLosses<double> l = adversarial_losses(d, zero, real, fake);
  EXPECT_NEAR(l.g_loss, std::numbers::ln2, 1e-15);
  EXPECT_NEAR(l.d_loss, 2.0 * std::numbers::ln2, 1e-15);
}

TEST(Adversarial, ConstantDiscriminatorHasNoR1Penalty) {
  const PatchDiscriminator d(ImageShape{}, 4, 16);
  std::vector<double> p(d.param_count(), 0.0);
  p.back() = 0.7;              // b2: constant logit 0.7
  for (std::size_t h = 0; h < 16; ++h) p[d.patch_len() * 16 + h] = 0.3;  // b1 only, W1 = 0
  std::mt19937_64 rng(2);
  const auto real = batch(rng, d.shape(), 2), fake = batch(rng, d.shape(), 2);
  EXPECT_EQ(d.input_gradient_sq(std::span<const double>(p), std::span<const double>(real[0])), 0.0);
  const auto with_r1 = adversarial_losses(d, p, real, fake, 10.0);
  const auto without = adversarial_losses(d, p, real, fake, 0.0);
  EXPECT_EQ(with_r1.d_loss, without.d_loss);
  EXPECT_NEAR(without.d_loss, std::log1p(std::exp(0.7)) + std::log1p(std::exp(-0.7)), 1e-14);
}

TEST(Adversarial, InputGradientMatchesFiniteDifferences) {
  const PatchDiscriminator d(ImageShape{8, 8}, 4, 6);
  std::mt19937_64 rng(3);
  const auto p = d.init(rng);
  const auto img = toy_two_mode_sample(rng, d.shape());
  const auto fd = oracle::fd_gradient(
      [&](std::span<const double> x) { return d.logit(std::span<const double>(p), x); }, img);
  double sq = 0.0;
  for (double g : fd) sq += g * g;
  EXPECT_NEAR(d.input_gradient_sq(std::span<const double>(p), std::span<const double>(img)), sq, 1e-8 * sq);
}

TEST(Adversarial, ShapeErrors) {
  const PatchDiscriminator d(ImageShape{}, 4, 4);
  const std::vector<double> p(d.param_count(), 0.0);
  const std::vector<std::vector<double>> good{std::vector<double>(d.shape().size(), 0.5)};
  const std::vector<std::vector<double>> bad{std::vector<double>(10, 0.5)};
  EXPECT_THROW(adversarial_losses(d, p, good, bad), InvalidArgument);
  EXPECT_THROW(adversarial_losses(d, p, {}, good), InvalidArgument);
  EXPECT_THROW(adversarial_losses(d, std::vector<double>(3, 0.0), good, good), InvalidArgument);
  EXPECT_THROW(PatchDiscriminator(ImageShape{10, 10}, 4, 4), InvalidArgument);
}

TEST(Adversarial, ToySamplesHaveTwoModes) {
  std::mt19937_64 rng(4);
  const ImageShape s;
  int left = 0, top = 0;
  for (int i = 0; i < 200; ++i) {
    const auto img = toy_two_mode_sample(rng, s);
    // Pixel (0, 15): top-right corner is bright only in the top mode.
    const double tr = img[(0 * 16 + 15) * 3];
    const double bl = img[(15 * 16 + 0) * 3];
    (tr > 0.5 ? top : left) += 1;
    EXPECT_GT(tr > 0.5 ? 1.0 - bl : bl, 0.5);
    for (double v : img) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
  EXPECT_GT(left, 60);
  EXPECT_GT(top, 60);
}

TEST(Adversarial, ToyRunLowersGeneratorLossInMostSeeds) {
  int improved = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    ToyGanConfig c;
    c.seed = seed;
    const ToyGanTrace t = run_toy_gan(c);
    ASSERT_EQ(t.g_loss.size(), 100u);
    for (double d : t.d_loss) ASSERT_TRUE(std::isfinite(d));
    for (double g : t.g_loss) ASSERT_TRUE(std::isfinite(g));
    if (t.g_loss.back() < t.g_loss.front()) ++improved;
  }
  EXPECT_GE(improved, 3);
}
