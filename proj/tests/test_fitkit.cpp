#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "deforma/fitkit.hpp"

using namespace deforma;

namespace {

// Small enough to train for a few steps inside a unit test.
FitConfig tiny_config(int steps) {
  FitConfig c;
  c.steps = steps;
  c.resolution = 16;
  c.pixel_rays = 16;
  c.vertex_rays = 16;
  c.imitation_points = 64;
  c.smooth_points = 16;
  c.vertices = 128;
  c.samples = 32;
  c.eval_poses = 1;
  c.eval_expressions = 1;
  return c;
}

std::string report_without_time(const FitReport& r) {
  std::ostringstream out;
  r.write(out);
  std::string s = out.str();
  return s.substr(0, s.find("seconds"));
}

}  // namespace

TEST(SampleLatents, SeededAndWithinRanges) {
  const LatentDims dims;
  std::mt19937_64 a(5), b(5);
  const LatentCodes x = sample_latents(a, dims), y = sample_latents(b, dims);
  EXPECT_EQ(x.z_id, y.z_id);
  EXPECT_EQ(x.z_exp, y.z_exp);
  EXPECT_EQ(x.eps, y.eps);
  EXPECT_EQ(x.pose, y.pose);

  std::mt19937_64 rng(6);
  const LatentPrior prior;
  double mean = 0.0, exp_sq = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const LatentCodes z = sample_latents(rng, dims, prior);
    mean += z.z_id[0];
    exp_sq += z.z_exp[1] * z.z_exp[1];
    ASSERT_LE(std::abs(z.pose.x), prior.pitch_range);
    ASSERT_LE(std::abs(z.pose.y), prior.yaw_range);
    ASSERT_EQ(z.pose.z, 3.0);
  }
  EXPECT_LT(std::abs(mean / n), 0.02);
  EXPECT_NEAR(std::sqrt(exp_sq / n), 0.5, 0.01);
}

TEST(FitConfigOptions, ParseOverrideAndReject) {
  FitConfig c;
  set_fit_option(c, "steps", "12");
  set_fit_option(c, "w_3dmm", "2.5");
  set_fit_option(c, "use_ch", "false");
  set_fit_option(c, "manifold", "analytic");
  EXPECT_EQ(c.steps, 12);
  EXPECT_EQ(c.weights.imitation, 2.5);
  EXPECT_FALSE(c.weights.use_chamfer);
  EXPECT_EQ(c.fields.manifold.mode, ManifoldMode::AnalyticRadial);
  EXPECT_THROW(set_fit_option(c, "nonsense", "1"), InvalidArgument);
  EXPECT_THROW(set_fit_option(c, "steps", "many"), InvalidArgument);
  EXPECT_THROW(set_fit_option(c, "manifold", "cubic"), InvalidArgument);

  const auto path = std::filesystem::temp_directory_path() / "deforma_test_fit.cfg";
  std::ofstream(path) << "# comment\nsteps = 7\n\nlr_deform=0.002  # trailing\n";
  const FitConfig r = read_fit_config(path);
  EXPECT_EQ(r.steps, 7);
  EXPECT_EQ(r.lr_deform, 0.002);
  std::ofstream(path) << "steps 7\n";
  EXPECT_THROW(read_fit_config(path), InvalidArgument);
  std::filesystem::remove(path);

  FitConfig bad;
  bad.lr_template = 0.0;
  EXPECT_THROW(bad.validate(), InvalidArgument);
}

TEST(FitConfigOptions, DescriptionRoundTrips) {
  FitConfig c = tiny_config(3);
  c.weights.reg = 0.25;
  c.prior.yaw_range = 0.4;
  const auto path = std::filesystem::temp_directory_path() / "deforma_test_describe.cfg";
  std::ofstream(path) << describe_fit_config(c);
  const FitConfig r = read_fit_config(path);
  EXPECT_EQ(describe_fit_config(r), describe_fit_config(c));
  std::filesystem::remove(path);
}

TEST(SyntheticScene, ReferenceDeformationIsExactAtVertices) {
  const FitConfig c;
  const SyntheticScene scene(c);
  for (const Vec3& v : scene.basis().mean_shape) ASSERT_NEAR(norm(v), 1.0, 1e-12);
  const std::vector<double> gamma{0.4, -0.3, 0.2, 0.5};
  const Mesh m = scene.expressed_mesh(gamma);
  for (std::size_t v = 0; v < m.vertices.size(); v += 7) {
    const Vec3 ref = reference_deformation(scene.basis(), gamma, v);
    const Vec3 t = scene.true_displacement(m.vertices[v], gamma);
    for (int k = 0; k < 3; ++k) EXPECT_NEAR(ref[k], t[k], 1e-12);
  }
  const std::vector<double> zero(4, 0.0);
  EXPECT_EQ(scene.true_displacement({0.3, 0.2, 0.9}, zero), (Vec3{0, 0, 0}));
}

TEST(FitSynthetic, ZeroStepsEchoesInitialLosses) {
  const FitResult r = fit_synthetic(tiny_config(0));
  EXPECT_EQ(r.report.steps, 0);
  EXPECT_EQ(r.report.initial.terms, r.report.final.terms);
  EXPECT_EQ(r.report.initial.total, r.report.final.total);
  EXPECT_TRUE(std::isfinite(r.report.heldout_psnr));
  EXPECT_GT(r.report.heldout_psnr, 0.0);
  EXPECT_TRUE(r.report.finite);
  // Adversarial term is off in the fit; the other six are logged.
  EXPECT_EQ(r.report.initial.terms.size(), 6u);
}

TEST(FitSynthetic, IdenticalSeedsGiveIdenticalReports) {
  const FitConfig c = tiny_config(4);
  std::ostringstream log_a, log_b;
  FitHooks ha, hb;
  ha.loss_log = &log_a;
  hb.loss_log = &log_b;
  const FitResult a = fit_synthetic(c, ha);
  const FitResult b = fit_synthetic(c, hb);
  EXPECT_EQ(report_without_time(a.report), report_without_time(b.report));
  EXPECT_EQ(a.params.template_params, b.params.template_params);
  EXPECT_EQ(a.params.deform_params, b.params.deform_params);
  EXPECT_EQ(a.params.manifold_params, b.params.manifold_params);
  EXPECT_EQ(log_a.str(), log_b.str());
  EXPECT_NE(log_a.str().find("3, total, "), std::string::npos);

  FitConfig other = c;
  other.seed = 2;
  EXPECT_NE(fit_synthetic(other).params, a.params);
}

TEST(FitSynthetic, NonFiniteLossAbortsWithDump) {
  FitConfig c = tiny_config(3);
  // Steps of order 1e300 overflow the network activations on the next step.
  c.lr_template = c.lr_deform = c.lr_manifold = 1e300;
  const auto dir = std::filesystem::temp_directory_path() / "deforma_test_nonfinite";
  std::filesystem::remove_all(dir);
  FitHooks h;
  h.dump_dir = dir;
  EXPECT_THROW(fit_synthetic(c, h), NumericalError);
  EXPECT_TRUE(std::filesystem::exists(dir / "nonfinite.txt"));
  EXPECT_TRUE(std::filesystem::exists(dir / "nonfinite.fp01"));
  std::filesystem::remove_all(dir);
}

TEST(FitSynthetic, PhotometricOnlyConvergesOnNeutralScene) {
  FitConfig c = tiny_config(300);
  c.prior.sigma_exp = 0.0;
  c.weights.use_chamfer = c.weights.use_landmark = c.weights.use_imitation = c.weights.use_reg =
      c.weights.use_smooth = false;
  const FitResult r = fit_synthetic(c);
  const double before = *r.report.initial.get("photometric");
  const double after = *r.report.final.get("photometric");
  EXPECT_LT(after, 0.5 * before);
  const FitResult untrained = fit_synthetic([&] {
    FitConfig z = c;
    z.steps = 0;
    return z;
  }());
  EXPECT_GT(r.report.heldout_psnr, untrained.report.heldout_psnr + 3.0);
}

TEST(SurfaceResidual, ZeroOnTheAnalyticShell) {
  FieldConfig cfg;
  const FieldModel model(cfg);
  const FieldParams params = model.init(1);
  LatentCodes z;
  z.z_id.assign(8, 0.0);
  z.z_exp.assign(4, 0.0);
  z.eps.assign(8, 0.0);
  std::vector<std::vector<Vec3>> clouds(2);
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g;
  for (auto& c : clouds) {
    for (int i = 0; i < 50; ++i) c.push_back(normalized(Vec3{g(rng), g(rng), g(rng)}));
  }
  const SurfaceResidual r = depth_cloud_residual(model, params, z, clouds);
  EXPECT_EQ(r.points, 100u);
  EXPECT_NEAR(r.level, 1.0, 1e-12);
  EXPECT_LT(r.max, 1e-12);
  clouds[1][0] = 1.1 * clouds[1][0];
  EXPECT_NEAR(depth_cloud_residual(model, params, z, clouds).max, 0.1, 1e-12);
}
