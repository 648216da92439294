#pragma once

// Camera rays, manifold compositing, depth accumulation and image assembly.

#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "deforma/autodiff.hpp"
#include "deforma/common.hpp"
#include "deforma/manifolds.hpp"
#include "deforma/neuralfields.hpp"
#include "deforma/scene.hpp"

namespace deforma {

struct Camera {
  Vec3 pose{0.0, 0.0, 3.0};  // pitch, yaw (radians), radius
  double fov_y = 0.8;
  int width = 64;
  int height = 64;
  /// Rays span [radius - scene_bound, radius + scene_bound], near clamped above zero.
  double scene_bound = 1.6;

  void validate() const;
  Vec3 position() const;
  double near() const;
  double far() const;
};

/// One ray per pixel centre, row-major from the top-left pixel. The camera
/// looks at the origin with world up (0,1,0), or (0,0,1) when looking
/// straight along the y axis.
std::vector<Ray> camera_rays(const Camera& camera);

/// Opaque painted spheres evaluated on the manifolds: occupancy is
/// `opacity` within `shell_tolerance` of a sphere surface and zero
/// elsewhere.
struct AnalyticRadiance {
  std::vector<AnalyticSphere> spheres;
  double shell_tolerance = 0.05;
  double opacity = 1.0;

  template <typename T>
  RadianceSampleT<T> query(const Vec3T<T>& p) const {
    const Vec3 pv(value_of(p.x), value_of(p.y), value_of(p.z));
    for (const AnalyticSphere& s : spheres) {
      if (std::abs(norm(pv - s.center) - s.radius) < shell_tolerance) {
        return {paint_color(s.paint, p), T(opacity)};
      }
    }
    return {Vec3T<T>(0.0, 0.0, 0.0), T(0.0)};
  }
};

/// The fields a render reads: manifold field, a deformation (network or
/// affine warp) and a radiance source (network or analytic spheres).
struct FieldSet {
  const ManifoldField* manifold = nullptr;
  ParamView manifold_params;
  const DeformField* deform = nullptr;  // null selects `warp`
  ParamView deform_params;
  AffineWarp warp;
  const TemplateField* radiance = nullptr;  // null selects `analytic`
  ParamView template_params;
  const AnalyticRadiance* analytic = nullptr;

  template <typename T>
  std::vector<Vec3T<T>> displacement(std::span<const Vec3T<T>> points, std::span<const T> z_id,
                                     std::span<const T> z_exp) const {
    if (deform != nullptr) return deform->displacement<T>(deform_params, points, z_id, z_exp);
    std::vector<Vec3T<T>> out;
    out.reserve(points.size());
    for (const auto& p : points) out.push_back(warp.displacement(p));
    return out;
  }

  template <typename T>
  std::vector<RadianceSampleT<T>> radiance_at(std::span<const Vec3T<T>> points, std::span<const Vec3T<T>> dirs,
                                              std::span<const T> z_id, std::span<const T> eps) const {
    if (radiance != nullptr) return radiance->query<T>(template_params, points, dirs, z_id, eps);
    if (analytic == nullptr) throw InvalidArgument("field set has no radiance source");
    std::vector<RadianceSampleT<T>> out;
    out.reserve(points.size());
    for (const auto& p : points) out.push_back(analytic->query(p));
    return out;
  }
};

enum class DepthWeighting {
  NormalizedTransmittanceOpacity,  // sum(T a t) / sum(T a)
  Transmittance,                   // sum(T t), unnormalized
};

struct RenderOptions {
  int samples = 64;
  int refine_steps = 0;  // bisections of each bracketing segment before interpolating
  Vec3 background{0.0, 0.0, 0.0};
  DepthWeighting depth_weighting = DepthWeighting::NormalizedTransmittanceOpacity;
  double min_depth_weight = 1e-4;
  int threads = 1;
};

template <typename T>
struct CompositeT {
  Vec3T<T> color;
  std::vector<T> weights;
  T residual{};
};
using Composite = CompositeT<double>;

/// Front-to-back compositing: w_j = prod_{k<j}(1 - a_k) a_j, colour
/// sum w_j c_j plus the residual transmittance times the background.
template <typename T>
CompositeT<T> composite(std::span<const RadianceSampleT<T>> samples, const Vec3& background) {
  CompositeT<T> out;
  out.weights.reserve(samples.size());
  T transmittance(1.0);
  Vec3T<T> color(T(0.0), T(0.0), T(0.0));
  for (const auto& s : samples) {
    const double a = value_of(s.occupancy);
    if (std::isnan(a)) throw NumericalError("NaN occupancy");
    if (!(a >= 0.0 && a <= 1.0)) throw InvalidArgument("occupancy outside [0, 1]");
    const T w = transmittance * s.occupancy;
    out.weights.push_back(w);
    color = color + w * s.color;
    transmittance = transmittance * (T(1.0) - s.occupancy);
  }
  out.residual = transmittance;
  out.color = color + transmittance * Vec3T<T>(background);
  return out;
}

Composite composite(std::span<const RadianceSample> samples, const Vec3& background);

template <typename T>
struct PixelT {
  Vec3T<T> color;
  T depth{};  // ray parameter; meaningful only when has_depth
  bool has_depth = false;
  T weight_sum{};
  std::vector<IntersectionT<T>> hits;
};
using Pixel = PixelT<double>;

/// Renders a batch of rays: intersect, query radiance at template-space
/// crossings with the ray direction as view direction, composite colour,
/// and accumulate depth over the target-space crossing parameters.
template <typename T>
std::vector<PixelT<T>> render_rays(const FieldSet& fields, std::span<const T> z_id, std::span<const T> z_exp,
                                   std::span<const T> eps, std::span<const Ray> rays, const RenderOptions& options) {
  if (fields.manifold == nullptr) throw InvalidArgument("field set has no manifold field");
  for (const Ray& r : rays) r.validate();
  const std::vector<double> zid_v = [&] {
    std::vector<double> v;
    for (const T& x : z_id) v.push_back(value_of(x));
    return v;
  }();
  const std::vector<double> zexp_v = [&] {
    std::vector<double> v;
    for (const T& x : z_exp) v.push_back(value_of(x));
    return v;
  }();
  auto deform = [&](auto points) {
    using P = std::remove_cv_t<typename decltype(points)::value_type>;
    using S = std::remove_cvref_t<decltype(std::declval<P>().x)>;
    if constexpr (std::is_same_v<S, double>) {
      return fields.displacement<double>(points, std::span<const double>(zid_v), std::span<const double>(zexp_v));
    } else {
      return fields.displacement<S>(points, z_id, z_exp);
    }
  };
  auto level = [&](auto points) {
    using P = std::remove_cv_t<typename decltype(points)::value_type>;
    using S = std::remove_cvref_t<decltype(std::declval<P>().x)>;
    return fields.manifold->evaluate<S>(fields.manifold_params, points);
  };
  auto hits = intersect_rays<T>(rays, options.samples, fields.manifold->levels(), deform, level,
                                 options.refine_steps);

  std::vector<Vec3T<T>> points;
  std::vector<Vec3T<T>> dirs;
  for (std::size_t r = 0; r < rays.size(); ++r) {
    for (const auto& h : hits[r]) {
      points.push_back(h.x_template);
      dirs.push_back(Vec3T<T>(rays[r].direction));
    }
  }
  const auto radiance = fields.radiance_at<T>(std::span<const Vec3T<T>>(points), std::span<const Vec3T<T>>(dirs),
                                              z_id, eps);

  std::vector<PixelT<T>> out(rays.size());
  std::size_t cursor = 0;
  for (std::size_t r = 0; r < rays.size(); ++r) {
    const std::size_t m = hits[r].size();
    const std::span<const RadianceSampleT<T>> samples(radiance.data() + cursor, m);
    cursor += m;
    CompositeT<T> comp = composite<T>(samples, options.background);
    PixelT<T>& px = out[r];
    px.color = comp.color;
    T weight_sum(0.0);
    T weighted_t(0.0);
    T transmittance(1.0);
    for (std::size_t j = 0; j < m; ++j) {
      weight_sum = weight_sum + comp.weights[j];
      if (options.depth_weighting == DepthWeighting::NormalizedTransmittanceOpacity) {
        weighted_t = weighted_t + comp.weights[j] * hits[r][j].t;
      } else {
        weighted_t = weighted_t + transmittance * hits[r][j].t;
        transmittance = transmittance * (T(1.0) - samples[j].occupancy);
      }
    }
    px.weight_sum = weight_sum;
    px.has_depth = value_of(weight_sum) >= options.min_depth_weight;
    if (px.has_depth) {
      px.depth = options.depth_weighting == DepthWeighting::NormalizedTransmittanceOpacity ? weighted_t / weight_sum
                                                                                          : weighted_t;
    }
    px.hits = std::move(hits[r]);
  }
  return out;
}

Pixel render_pixel(const FieldSet& fields, const LatentCodes& latents, const Ray& ray,
                   const RenderOptions& options = {});

struct ImageBuffer {
  int width = 0;
  int height = 0;
  std::vector<Vec3> rgb;
  std::vector<double> depth;  // NaN marks an absent depth

  static bool present(double d) { return !std::isnan(d); }
};

/// Renders row by row; each row is one batch regardless of the thread
/// count, so sequential and parallel output are bitwise identical.
ImageBuffer render_image(const FieldSet& fields, const LatentCodes& latents, const Camera& camera,
                         const RenderOptions& options = {});

/// World-space point origin + depth * direction for every pixel with depth.
std::vector<Vec3> depth_pointcloud(const ImageBuffer& image, const Camera& camera);

}  // namespace deforma
