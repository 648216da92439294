#pragma once

// Latent sampling, the synthetic ground-truth scene, and supervised
// imitative fitting of the three fields against it.

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "deforma/checkpoint.hpp"
#include "deforma/facemodel.hpp"
#include "deforma/losses.hpp"
#include "deforma/neuralfields.hpp"
#include "deforma/optim.hpp"
#include "deforma/renderer.hpp"
#include "deforma/scene.hpp"

namespace deforma {

struct LatentPrior {
  double sigma_id = 1.0;
  double sigma_exp = 0.5;
  double sigma_eps = 1.0;
  double pitch_range = 0.3;  // pitch ~ U(-range, range)
  double yaw_range = 0.5;
  double radius = 3.0;
};

LatentCodes sample_latents(std::mt19937_64& rng, const LatentDims& dims, const LatentPrior& prior = {});

/// Everything `fit_synthetic` reads. Parsed from `key = value` lines; see
/// `set_fit_option` for the key names.
struct FitConfig {
  int steps = 10000;
  int resolution = 64;
  int pixel_rays = 64;    // random pixels per step
  int vertex_rays = 64;   // rays through visible mesh vertices per step
  int imitation_points = 1024;
  int smooth_points = 256;
  double band = 0.2;      // margin added to the mesh bounding box
  double xi_radius = 0.01;

  std::uint64_t seed = 1;          // network init and training stream
  std::uint64_t scene_seed = 7;    // face basis and expression warp
  std::uint64_t heldout_seed = 99;

  int vertices = 512;
  int id_dims = 8;
  int exp_dims = 4;
  int landmarks = 16;
  double warp_linear = 0.15;  // Frobenius norm of each expression matrix
  double warp_offset = 0.04;  // length of each expression offset
  LatentPrior prior{0.0, 0.5, 0.0, 0.3, 0.5, 3.0};

  LossWeights weights = default_weights();
  double lr_template = 1e-3;
  double lr_deform = 1e-3;
  double lr_manifold = 1e-3;
  double occupancy_bias = -3.0;  // initial occupancy logit; negative starts transparent
  AdamConfig adam;

  FieldConfig fields = default_fields();
  int samples = 64;
  int eval_poses = 8;
  int eval_expressions = 3;
  double eval_band = 0.05;
  int log_every = 1;
  int threads = 1;

  static LossWeights default_weights();
  static FieldConfig default_fields();
  void validate() const;
};

/// Applies one `key = value` setting; throws InvalidArgument for unknown
/// keys or unparsable values.
void set_fit_option(FitConfig& config, const std::string& key, const std::string& value);
FitConfig read_fit_config(const std::filesystem::path& path, FitConfig base = {});
std::string describe_fit_config(const FitConfig& config);

/// Ground truth for the fit: a unit sphere painted with the face pattern
/// and an expression-driven affine warp. The expression basis is built
/// from the same warp, so reference deformations at vertices are exact.
///
/// The forward (template to target) map is p -> M p + b with
/// M = I + sum_k gamma_k A_k and b = sum_k gamma_k b_k.
class SyntheticScene {
 public:
  explicit SyntheticScene(const FitConfig& config);

  const FaceBasis& basis() const { return basis_; }
  const std::vector<std::array<double, 9>>& expression_matrices() const { return a_; }
  const std::vector<Vec3>& expression_offsets() const { return b_; }

  /// Inverse warp (target to template) for expression gamma.
  AffineWarp warp(std::span<const double> gamma) const;
  SceneSpec scene(std::span<const double> gamma) const;
  Mesh expressed_mesh(std::span<const double> gamma) const;
  Vec3 true_displacement(const Vec3& x, std::span<const double> gamma) const;

 private:
  FaceBasis basis_;
  std::vector<std::array<double, 9>> a_;
  std::vector<Vec3> b_;
};

struct FitReport {
  int steps = 0;
  LossReport initial;
  LossReport final;
  double heldout_psnr = 0.0;
  double deformation_error = 0.0;     // mean |F - true| / mean |true| over the face band
  double deformation_abs_error = 0.0;
  double true_deformation_mean = 0.0;
  double neutral_residual = 0.0;      // mean |F(x, gamma = 0)| over the neutral face band
  double seconds = 0.0;
  bool finite = true;

  void write(std::ostream& out) const;
};

struct FitResult {
  FitReport report;
  FieldConfig config;
  FieldParams params;
};

struct FitHooks {
  std::ostream* loss_log = nullptr;  // `step, name, value` lines
  std::ostream* progress = nullptr;
  std::filesystem::path dump_dir;    // state dump on a non-finite loss
};

/// Trains from scratch. Throws NumericalError on a non-finite loss after
/// writing a diagnostic dump into `hooks.dump_dir` when set.
FitResult fit_synthetic(const FitConfig& config, const FitHooks& hooks = {});

/// Held-out metrics of a parameter set against the config's scene.
struct EvalResult {
  double psnr = 0.0;
  double deformation_error = 0.0;
  double deformation_abs_error = 0.0;
  double true_deformation_mean = 0.0;
  double neutral_residual = 0.0;
};
EvalResult evaluate_fit(const FitConfig& config, const FieldParams& params);

/// Held-out cameras and expressions, drawn from `heldout_seed`.
std::vector<LatentCodes> heldout_latents(const FitConfig& config);

/// Depth point clouds of the fitted fields from `cameras` views on a ring
/// around the face, all with expression gamma.
std::vector<std::vector<Vec3>> ring_depth_clouds(const FitConfig& config, const FieldParams& params,
                                                 std::span<const double> gamma, int cameras);

/// Spread of depth points around one level set of the fitted scene: each
/// point x is mapped to s(x + F(x)), `level` is the median of those values
/// and the residuals are |s - level|. The manifold field is close to a
/// distance function, so residuals are in scene units.
struct SurfaceResidual {
  double level = 0.0;
  double mean = 0.0;
  double max = 0.0;
  std::size_t points = 0;
};
SurfaceResidual depth_cloud_residual(const FieldModel& model, const FieldParams& params, const LatentCodes& latents,
                                     std::span<const std::vector<Vec3>> clouds);

}  // namespace deforma
