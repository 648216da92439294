#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "deforma/facemodel.hpp"
#include "deforma/losses.hpp"
#include "deforma/oracle.hpp"

using namespace deforma;

namespace {

std::vector<Vec3> random_cloud(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<Vec3> v(n);
  for (Vec3& p : v) p = {u(rng), u(rng), u(rng)};
  return v;
}

double chamfer(const std::vector<Vec3>& a, const std::vector<Vec3>& b, std::size_t threshold = 4096) {
  return chamfer_directed<double>(std::span<const Vec3>(a), std::span<const Vec3>(b), threshold);
}

}  // namespace

TEST(Chamfer, Examples) {
  std::mt19937_64 rng(3);
  const auto s = random_cloud(rng, 50);
  EXPECT_EQ(chamfer(s, s), 0.0);
  EXPECT_EQ(chamfer({{0, 0, 0}}, {{1, 0, 0}, {5, 5, 5}}), 1.0);
  EXPECT_THROW(chamfer({}, s), InvalidArgument);
  EXPECT_THROW(chamfer(s, {}), InvalidArgument);
}

TEST(Chamfer, MatchesExhaustiveOracleBitwise) {
  std::mt19937_64 rng(7);
  const auto s = random_cloud(rng, 200);
  const auto t = random_cloud(rng, 500);
  EXPECT_EQ(chamfer(s, t), oracle::chamfer_exhaustive(s, t));
  const auto big = random_cloud(rng, 5000);
  EXPECT_EQ(chamfer(s, big), oracle::chamfer_exhaustive(s, big));
  EXPECT_EQ(chamfer(s, t, 1), oracle::chamfer_exhaustive(s, t));  // grid forced on a small set
}

TEST(Chamfer, IsAsymmetric) {
  const std::vector<Vec3> a{{0, 0, 0}};
  const std::vector<Vec3> b{{0, 0, 0}, {3, 0, 0}};
  EXPECT_EQ(chamfer(a, b), 0.0);
  EXPECT_EQ(chamfer(b, a), 4.5);
}

TEST(Chamfer, ZeroOnlyWhenContained) {
  std::mt19937_64 rng(8);
  auto s = random_cloud(rng, 30);
  auto t = s;
  const auto extra = random_cloud(rng, 10);
  t.insert(t.end(), extra.begin(), extra.end());
  EXPECT_EQ(chamfer(s, t), 0.0);
  s[4].x += 1e-6;
  EXPECT_GT(chamfer(s, t), 0.0);
}

TEST(Landmark, Examples) {
  const std::vector<Vec3> a{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  EXPECT_EQ(landmark_loss<double>(a, a), 0.0);
  auto b = a;
  b[2].z += 2.0;
  EXPECT_EQ(landmark_loss<double>(a, b), 1.0);
  const std::vector<Vec3> short_list{{0, 0, 0}};
  EXPECT_THROW(landmark_loss<double>(a, short_list), InvalidArgument);
}

TEST(Landmark, ComposesWithReconstruction) {
  FaceBasis basis = synth_basis(7, 32, 4, 2, 3);
  basis.landmark_indices = {3, 9, 17};
  const std::vector<double> beta{0.3, -0.1, 0.0, 0.5};
  const std::vector<double> g{0.2, -0.2}, g_hat{0.2, 0.1};
  const auto la = extract_landmarks(reconstruct_shape(basis, {beta, g}), basis);
  const auto lb = extract_landmarks(reconstruct_shape(basis, {beta, g_hat}), basis);
  const auto ra = oracle::naive_reconstruct(basis, beta, g);
  const auto rb = oracle::naive_reconstruct(basis, beta, g_hat);
  double ref = 0.0;
  for (std::uint32_t i : basis.landmark_indices) {
    for (int c = 0; c < 3; ++c) ref += (ra[i][c] - rb[i][c]) * (ra[i][c] - rb[i][c]);
  }
  EXPECT_NEAR(landmark_loss<double>(la, lb), ref / 3.0, 1e-15);
  EXPECT_GT(ref, 0.0);
}

TEST(DeformationLosses, Examples) {
  EXPECT_EQ(deformation_imitation({0.3, -1, 2}, {0.3, -1, 2}), 0.0);
  EXPECT_EQ(deformation_imitation({1, 0, 0}, {0, 0, 0}), 1.0);
  EXPECT_EQ(deformation_reg({0, 0, 0}), 0.0);
  EXPECT_EQ(deformation_reg({0, 3, 4}), 25.0);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g;
  for (int i = 0; i < 50; ++i) {
    const Vec3 d{g(rng), g(rng), g(rng)};
    const double s = g(rng);
    EXPECT_NEAR(deformation_reg(s * d), s * s * deformation_reg(d), 1e-12 * (1 + deformation_reg(s * d)));
    EXPECT_GE(deformation_imitation(d, {g(rng), g(rng), g(rng)}), 0.0);
  }
  const std::vector<Vec3> a{{1, 0, 0}, {0, 2, 0}};
  const std::vector<Vec3> zero(2, Vec3{});
  EXPECT_EQ(deformation_reg<double>(a), 2.5);
  EXPECT_EQ(deformation_imitation<double>(a, zero), 2.5);
}

TEST(DeformationLosses, ZeroInitNetworkAndNeutralReferenceGiveZero) {
  const DeformField f(DeformConfig{}, LatentDims{});
  std::mt19937_64 rng(3);
  const auto p = f.init(rng, true);
  const FaceBasis basis = synth_basis(7, 64, 8, 4, 4);
  const std::vector<double> zid(8, 0.2), gamma(4, 0.0);
  for (std::size_t v = 0; v < basis.vertex_count(); ++v) {
    const Vec3 dx = f.displacement(p, basis.mean_shape[v], zid, gamma);
    EXPECT_EQ(deformation_imitation(dx, reference_deformation(basis, gamma, v)), 0.0);
  }
}

TEST(Smoothness, Examples) {
  std::mt19937_64 rng(5);
  const auto constant = [](const Vec3&) { return Vec3{0.1, -0.3, 0.2}; };
  for (int i = 0; i < 20; ++i) EXPECT_EQ(smoothness_loss(constant, {0.1 * i, 0, 0}, 0.01, rng), 0.0);

  // Linear field: the loss is |A xi|^2 for the xi drawn from the same stream.
  const auto linear = [](const Vec3& x) { return Vec3{2 * x.x + x.y, -x.z, 0.5 * x.x}; };
  for (int i = 0; i < 20; ++i) {
    std::mt19937_64 a(100 + i), b(100 + i);
    const double loss = smoothness_loss(linear, {0.3, 0.2, -0.1}, 0.01, a);
    const Vec3 xi = sample_ball(b, 0.01);
    const Vec3 axi = linear(xi);
    EXPECT_NEAR(loss, squared_norm(axi), 1e-12 * loss);
    EXPECT_LE(norm(xi), 0.01);
  }

  const DeformField f(DeformConfig{}, LatentDims{});
  std::mt19937_64 init(3);
  const auto p = f.init(init, true);
  const std::vector<double> zid(8, 0.0), zexp(4, 0.5);
  const auto net = [&](const Vec3& x) { return f.displacement(p, x, zid, zexp); };
  EXPECT_EQ(smoothness_loss(net, {0.2, 0.1, 0.4}, 0.01, rng), 0.0);
  EXPECT_THROW(smoothness_loss(constant, {0, 0, 0}, 0.0, rng), InvalidArgument);
}

TEST(SampleBall, StaysInsideAndFillsTheBall) {
  std::mt19937_64 rng(9);
  double mean_r = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double r = norm(sample_ball(rng, 2.0));
    ASSERT_LE(r, 2.0);
    mean_r += r / n;
  }
  EXPECT_NEAR(mean_r, 1.5, 0.02);  // E|xi| = 3R/4 for a uniform ball
}

TEST(TotalLoss, Arithmetic) {
  LossTerms<double> t;
  t.photo = 0.5;
  t.chamfer = 0.25;
  t.landmark = 2.0;
  t.imitation = 0.125;
  t.reg = 4.0;
  t.smooth = 0.0625;
  t.adversarial = 8.0;

  LossWeights w;
  w.use_photo = false;
  w.chamfer = w.landmark = w.imitation = w.reg = w.smooth = 1.0;
  w.adversarial = 0.0;
  const LossReport r = total_loss(t, w);
  EXPECT_EQ(r.total, 0.25 + 2.0 + 0.125 + 4.0 + 0.0625 + 0.0);
  EXPECT_EQ(r.terms.size(), 6u);
  EXPECT_EQ(r.get("landmark"), 2.0);
  EXPECT_FALSE(r.get("photometric").has_value());

  LossWeights doubled = w;
  doubled.chamfer = doubled.landmark = doubled.imitation = doubled.reg = doubled.smooth = 2.0;
  EXPECT_EQ(total_loss(t, doubled).total, 2.0 * r.total);

  LossWeights single;
  single.use_photo = single.use_chamfer = single.use_landmark = single.use_reg = single.use_smooth =
      single.use_adversarial = false;
  EXPECT_EQ(total_loss(t, single).total, 0.125);

  // Logged terms are unweighted; every weight is 1 except adversarial = 0.
  double manual = 0.0;
  for (const auto& [name, v] : r.terms) manual += name == "adversarial" ? 0.0 : v;
  EXPECT_NEAR(r.total, manual, 1e-12);
}

TEST(TotalLoss, Errors) {
  LossTerms<double> t;
  LossWeights off;
  off.use_photo = off.use_chamfer = off.use_landmark = off.use_imitation = off.use_reg = off.use_smooth =
      off.use_adversarial = false;
  EXPECT_THROW(total_loss(t, off), InvalidArgument);
  LossWeights w;
  EXPECT_THROW(total_loss(t, w), InvalidArgument);  // enabled term without value
  w.reg = -1.0;
  t.photo = t.chamfer = t.landmark = t.imitation = t.reg = t.smooth = t.adversarial = 1.0;
  EXPECT_THROW(total_loss(t, w), InvalidArgument);
}

TEST(TotalLoss, LogLines) {
  LossTerms<double> t;
  t.imitation = 0.5;
  LossWeights w;
  w.use_photo = w.use_chamfer = w.use_landmark = w.use_reg = w.use_smooth = w.use_adversarial = false;
  std::ostringstream out;
  write_loss_log(out, 7, total_loss(t, w));
  EXPECT_EQ(out.str(), "7, imitation, 0.5\n7, total, 0.5\n");
}

TEST(Losses, NonNegativeOnRandomInputs) {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 50; ++i) {
    const auto a = random_cloud(rng, 8), b = random_cloud(rng, 8);
    EXPECT_GE(chamfer(a, b), 0.0);
    EXPECT_GE(landmark_loss<double>(a, b), 0.0);
    EXPECT_GE(deformation_imitation<double>(a, b), 0.0);
    EXPECT_GE(deformation_reg<double>(a), 0.0);
    EXPECT_GE(smoothness_loss<double>(a, b), 0.0);
  }
}
