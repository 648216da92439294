#pragma once

// Reference implementations used to verify the engine. Everything here is
// written with plain loops and scalar arithmetic and does not call into the
// engine's rendering, network, nearest-neighbour or loss code.

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "deforma/common.hpp"
#include "deforma/facemodel.hpp"
#include "deforma/manifolds.hpp"
#include "deforma/neuralfields.hpp"
#include "deforma/scene.hpp"

namespace deforma::oracle {

struct Hit {
  Vec3 color;
  std::optional<double> depth;  // ray parameter of the first hit
};

/// Roots t0 <= t1 of |o + t d - c|^2 = r^2, or nothing on a miss.
std::optional<std::pair<double, double>> ray_sphere(const Vec3& origin, const Vec3& direction, const Vec3& center,
                                                    double radius);

/// First hit of the ray within [near, far] against the spheres seen
/// through the scene's affine warp, solved as a quadratic in t.
Hit analytic_render(const SceneSpec& scene, const Ray& ray);

/// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h.
std::vector<double> fd_gradient(const std::function<double(std::span<const double>)>& f,
                                std::span<const double> point, double step = 1e-5);

struct NnResult {
  std::size_t index = 0;
  double squared_distance = 0.0;
  double distance() const;
};

NnResult exhaustive_nn(const Vec3& query, std::span<const Vec3> points);

double chamfer_exhaustive(std::span<const Vec3> source, std::span<const Vec3> target);

/// Row-by-row mean + B_id beta + B_exp gamma.
std::vector<Vec3> naive_reconstruct(const FaceBasis& basis, std::span<const double> beta,
                                    std::span<const double> gamma);

// Layer-by-layer network evaluation from the documented parameter layout.
RadianceSample naive_template(const TemplateConfig& config, const LatentDims& dims, std::span<const double> params,
                              const Vec3& x, std::span<const double> z_id, std::span<const double> eps,
                              const Vec3& d);
Vec3 naive_deform(const DeformConfig& config, const LatentDims& dims, std::span<const double> params, const Vec3& x,
                  std::span<const double> z_id, std::span<const double> z_exp);
double naive_manifold(const ManifoldConfig& config, std::span<const double> params, const Vec3& x);

}  // namespace deforma::oracle
