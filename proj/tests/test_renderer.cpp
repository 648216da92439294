#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "deforma/checkpoint.hpp"
#include "deforma/oracle.hpp"
#include "deforma/renderer.hpp"

using namespace deforma;

namespace {

struct AnalyticFields {
  ManifoldField manifold{ManifoldConfig{}};
  AnalyticRadiance radiance;
  FieldSet fields;

  explicit AnalyticFields(const SceneSpec& scene) {
    radiance.spheres = scene.spheres;
    fields.manifold = &manifold;
    fields.warp = scene.warp;
    fields.analytic = &radiance;
  }
};

SceneSpec face_sphere() {
  SceneSpec s;
  s.spheres.push_back({{0, 0, 0}, 1.0, {Paint::Kind::Face, {}}});
  return s;
}

const LatentCodes kNoLatents{};

}  // namespace

TEST(Camera, FrontalCentreRayLooksDownMinusZ) {
  Camera cam;
  cam.width = cam.height = 1;
  const auto rays = camera_rays(cam);
  ASSERT_EQ(rays.size(), 1u);
  EXPECT_NEAR(rays[0].direction.x, 0.0, 1e-9);
  EXPECT_NEAR(rays[0].direction.y, 0.0, 1e-9);
  EXPECT_NEAR(rays[0].direction.z, -1.0, 1e-9);
  EXPECT_NEAR(rays[0].origin.z, 3.0, 1e-12);
}

TEST(Camera, YawQuarterTurnMovesToPlusX) {
  Camera cam;
  cam.width = cam.height = 1;
  cam.pose = {0.0, std::numbers::pi / 2, 3.0};
  const auto r = camera_rays(cam)[0];
  EXPECT_NEAR(r.origin.x, 3.0, 1e-12);
  EXPECT_NEAR(r.direction.x, -1.0, 1e-9);
  EXPECT_NEAR(r.direction.y, 0.0, 1e-9);
  EXPECT_NEAR(r.direction.z, 0.0, 1e-9);
}

TEST(Camera, UnitDirectionsAndPoleFallback) {
  Camera cam;
  cam.width = 13;
  cam.height = 7;
  cam.pose = {0.3, -0.7, 2.5};
  for (const Ray& r : camera_rays(cam)) EXPECT_NEAR(norm(r.direction), 1.0, 1e-9);
  cam.pose = {std::numbers::pi / 2, 0.0, 3.0};
  const auto pole = camera_rays(cam);
  for (const Ray& r : pole) {
    EXPECT_TRUE(is_finite(r.direction));
    EXPECT_NEAR(norm(r.direction), 1.0, 1e-9);
  }
  cam.fov_y = 0.0;
  EXPECT_THROW(camera_rays(cam), InvalidArgument);
}

TEST(Composite, HandExamples) {
  const Vec3 bg{0.1, 0.2, 0.3};
  const std::vector<RadianceSample> opaque{{{0.2, 0.4, 0.6}, 1.0}};
  const Composite a = composite(opaque, bg);
  EXPECT_EQ(a.color, (Vec3{0.2, 0.4, 0.6}));
  EXPECT_EQ(a.residual, 0.0);

  const std::vector<RadianceSample> clear{{{1, 1, 1}, 0.0}, {{1, 0, 1}, 0.0}};
  const Composite b = composite(clear, bg);
  EXPECT_EQ(b.color, bg);
  EXPECT_EQ(b.residual, 1.0);

  const std::vector<RadianceSample> two{{{1, 0, 0}, 0.5}, {{0, 1, 0}, 0.5}};
  const Composite c = composite(two, bg);
  EXPECT_EQ(c.weights, (std::vector<double>{0.5, 0.25}));
  EXPECT_EQ(c.residual, 0.25);
  const Vec3 expected{0.5 + 0.25 * bg[0], 0.25 + 0.25 * bg[1], 0.25 * bg[2]};
  for (int k = 0; k < 3; ++k) EXPECT_DOUBLE_EQ(c.color[k], expected[k]);

  const std::vector<RadianceSample> bad{{{0, 0, 0}, 1.5}};
  EXPECT_THROW(composite(bad, bg), InvalidArgument);
}

TEST(Composite, ConservationFuzz) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0, 1);
  std::uniform_int_distribution<int> len(0, 12);
  for (int i = 0; i < 20000; ++i) {
    std::vector<RadianceSample> s(static_cast<std::size_t>(len(rng)));
    for (auto& x : s) x.occupancy = u(rng) < 0.1 ? (u(rng) < 0.5 ? 0.0 : 1.0) : u(rng);
    const Composite c = composite(s, {0, 0, 0});
    double sum = c.residual;
    for (double w : c.weights) sum += w;
    ASSERT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(Composite, MonotoneOcclusion) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0, 1);
  for (int i = 0; i < 2000; ++i) {
    std::vector<RadianceSample> s(6);
    for (auto& x : s) x.occupancy = u(rng);
    const std::size_t j = static_cast<std::size_t>(i % 6);
    const Composite before = composite(s, {0, 0, 0});
    s[j].occupancy = s[j].occupancy + (1.0 - s[j].occupancy) * u(rng);
    const Composite after = composite(s, {0, 0, 0});
    for (std::size_t k = j + 1; k < 6; ++k) ASSERT_LE(after.weights[k], before.weights[k]);
  }
}

TEST(RenderPixel, MissGivesBackgroundAndNoDepth) {
  AnalyticFields af(face_sphere());
  RenderOptions opt;
  opt.background = {0.3, 0.6, 0.9};
  const Ray r{{0, 3, 3}, {0, 0, -1}, 0.5, 6.0};
  const Pixel p = render_pixel(af.fields, kNoLatents, r, opt);
  EXPECT_EQ(p.color, opt.background);
  EXPECT_FALSE(p.has_depth);
  EXPECT_TRUE(p.hits.empty());
}

TEST(RenderPixel, OpaqueSphereDepthIsTwo) {
  SceneSpec s;
  s.spheres.push_back({{0, 0, 0}, 1.0, {}});
  AnalyticFields af(s);
  Camera cam;
  cam.width = cam.height = 1;
  const Pixel p = render_pixel(af.fields, kNoLatents, camera_rays(cam)[0]);
  ASSERT_TRUE(p.has_depth);
  EXPECT_NEAR(p.depth, 2.0, 1e-3);
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(p.color[k], 0.8, 1e-12);

  ImageBuffer img = render_image(af.fields, kNoLatents, cam);
  const auto cloud = depth_pointcloud(img, cam);
  ASSERT_EQ(cloud.size(), 1u);
  EXPECT_NEAR(cloud[0].x, 0.0, 1e-3);
  EXPECT_NEAR(cloud[0].y, 0.0, 1e-3);
  EXPECT_NEAR(cloud[0].z, 1.0, 1e-3);
}

TEST(RenderPixel, TransmittanceDepthVariant) {
  SceneSpec s;
  s.spheres.push_back({{0, 0, 0}, 1.0, {}});
  AnalyticFields af(s);
  RenderOptions opt;
  opt.depth_weighting = DepthWeighting::Transmittance;
  Camera cam;
  cam.width = cam.height = 1;
  const Pixel p = render_pixel(af.fields, kNoLatents, camera_rays(cam)[0], opt);
  // Unnormalized sum of T t: the transparent 1.2 crossing and the opaque 1.0
  // crossing both see full transmittance.
  ASSERT_TRUE(p.has_depth);
  double expected = 0.0;
  for (const auto& h : p.hits) {
    expected += h.t;
    if (h.level_index == 2) break;
  }
  EXPECT_NEAR(p.depth, expected, 1e-12);
}

TEST(RenderPixel, ZeroWarpNetworkMatchesIdentityWarpBitwise) {
  FieldConfig cfg;
  const FieldModel model(cfg);
  const FieldParams params = model.init(5);  // deformation output layer zeroed by default
  FieldSet net = model.bind(params);
  FieldSet ident = net;
  ident.deform = nullptr;
  LatentCodes z;
  z.z_id.assign(8, 0.3);
  z.z_exp.assign(4, -0.5);
  z.eps.assign(8, 0.1);
  Camera cam;
  cam.width = cam.height = 9;
  for (const Ray& r : camera_rays(cam)) {
    const Pixel a = render_pixel(net, z, r);
    const Pixel b = render_pixel(ident, z, r);
    ASSERT_EQ(a.color, b.color);
    ASSERT_EQ(a.has_depth, b.has_depth);
    if (a.has_depth) {
      ASSERT_EQ(a.depth, b.depth);
    }
  }
}

TEST(RenderImage, SinglePixelEqualsRenderPixelAndThreadsAgree) {
  FieldConfig cfg;
  cfg.manifold.mode = ManifoldMode::Learned;
  const FieldModel model(cfg);
  const FieldParams params = model.init(6, InitOptions{false, false, false});
  const FieldSet fs = model.bind(params);
  LatentCodes z;
  z.z_id.assign(8, 0.1);
  z.z_exp.assign(4, 0.2);
  z.eps.assign(8, -0.1);
  Camera one;
  one.width = one.height = 1;
  const ImageBuffer i1 = render_image(fs, z, one);
  const Pixel p = render_pixel(fs, z, camera_rays(one)[0]);
  EXPECT_EQ(i1.rgb[0], p.color);

  Camera cam;
  cam.width = 24;
  cam.height = 16;
  RenderOptions seq, par;
  par.threads = 4;
  const ImageBuffer a = render_image(fs, z, cam, seq);
  const ImageBuffer b = render_image(fs, z, cam, par);
  EXPECT_EQ(a.rgb, b.rgb);
  for (std::size_t k = 0; k < a.depth.size(); ++k) {
    ASSERT_EQ(std::isnan(a.depth[k]), std::isnan(b.depth[k]));
    if (!std::isnan(a.depth[k])) {
      ASSERT_EQ(a.depth[k], b.depth[k]);
    }
  }
}

TEST(RenderImage, AnalyticSceneMatchesOracle) {
  SceneSpec s = face_sphere();
  s.warp.matrix = {0.05, 0.02, 0, -0.03, 0.04, 0.01, 0, 0.02, -0.06};
  s.warp.offset = {0.03, -0.02, 0.01};
  AnalyticFields af(s);
  Camera cam;
  cam.pose = {0.1, -0.2, 3.0};
  RenderOptions opt;
  opt.refine_steps = 8;
  const ImageBuffer img = render_image(af.fields, kNoLatents, cam, opt);
  const auto rays = camera_rays(cam);
  double err = 0.0;
  double worst_t = 0.0;
  std::size_t grazing = 0;
  for (std::size_t k = 0; k < rays.size(); ++k) {
    const oracle::Hit h = oracle::analytic_render(s, rays[k]);
    for (int c = 0; c < 3; ++c) err += std::abs(img.rgb[k][c] - h.color[c]);
    // A silhouette ray whose chord is shorter than the sample spacing can
    // slip between samples; everywhere else the hit sets agree.
    if (h.depth.has_value() != ImageBuffer::present(img.depth[k])) {
      ++grazing;
    } else if (h.depth) {
      worst_t = std::max(worst_t, std::abs(*h.depth - img.depth[k]));
    }
  }
  EXPECT_LE(grazing, rays.size() / 200);
  EXPECT_LE(err / (3.0 * rays.size()), 2e-3);
  EXPECT_LE(worst_t, 5e-4);
}

TEST(RenderImage, RefinementShrinksGrazingErrors) {
  SceneSpec s = face_sphere();
  AnalyticFields af(s);
  Camera cam;
  cam.width = cam.height = 48;
  const auto rays = camera_rays(cam);
  auto worst = [&](int steps) {
    RenderOptions opt;
    opt.refine_steps = steps;
    const auto px = render_rays<double>(af.fields, {}, {}, {}, rays, opt);
    double w = 0.0;
    for (std::size_t k = 0; k < rays.size(); ++k) {
      const oracle::Hit h = oracle::analytic_render(s, rays[k]);
      if (!h.depth) continue;
      for (const Intersection& x : px[k].hits) {
        // Level index 2 is the unit shell; take its first crossing.
        if (x.level_index != 2) continue;
        w = std::max(w, std::abs(*h.depth - x.t));
        break;
      }
    }
    return w;
  };
  const double plain = worst(0), refined = worst(6);
  EXPECT_GT(plain, 5e-4);
  EXPECT_LT(refined, 1e-5);
}

TEST(DepthPointcloud, EmptyAndOnSphereFromTwoViews) {
  Camera cam;
  cam.width = cam.height = 4;
  ImageBuffer none;
  none.width = none.height = 4;
  none.rgb.assign(16, Vec3{});
  none.depth.assign(16, std::numeric_limits<double>::quiet_NaN());
  EXPECT_TRUE(depth_pointcloud(none, cam).empty());
  Camera other = cam;
  other.width = 5;
  EXPECT_THROW(depth_pointcloud(none, other), InvalidArgument);

  SceneSpec s;
  s.spheres.push_back({{0, 0, 0}, 1.0, {}});
  AnalyticFields af(s);
  for (const Vec3 pose : {Vec3{0, 0, 3}, Vec3{0.2, 0.6, 3}}) {
    Camera c;
    c.pose = pose;
    c.width = c.height = 32;
    const auto cloud = depth_pointcloud(render_image(af.fields, kNoLatents, c), c);
    ASSERT_GT(cloud.size(), 100u);
    for (const Vec3& p : cloud) ASSERT_NEAR(norm(p), 1.0, 5e-3);
  }
}
