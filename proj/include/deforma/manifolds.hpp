#pragma once

// Radiance manifolds: level sets of a scalar field, ray sampling, and
// intersection of deformed rays with the level sets.

#include <algorithm>
#include <functional>
#include <random>
#include <span>
#include <type_traits>
#include <vector>

#include "deforma/autodiff.hpp"
#include "deforma/common.hpp"
#include "deforma/mlp.hpp"
#include "deforma/neuralfields.hpp"

namespace deforma {

enum class ManifoldMode { AnalyticRadial, Learned };

struct ManifoldConfig {
  ManifoldMode mode = ManifoldMode::AnalyticRadial;
  Vec3 center{0.0, 0.0, 0.0};
  std::vector<double> levels{0.6, 0.8, 1.0, 1.2};
  int pos_frequencies = 2;
  int hidden = 32;
  int layers = 2;
  friend bool operator==(const ManifoldConfig&, const ManifoldConfig&) = default;
};

/// Scalar field whose level sets are the radiance manifolds.
///
/// Analytic mode is the distance to `center`. Learned mode adds a residual
/// network over the encoded point to that distance, so a zero output layer
/// reproduces the analytic shells exactly.
class ManifoldField {
 public:
  explicit ManifoldField(ManifoldConfig config);

  const ManifoldConfig& config() const { return config_; }
  std::span<const double> levels() const { return config_.levels; }
  std::size_t param_count() const;
  const Mlp& net() const { return net_; }

  std::vector<double> init(std::mt19937_64& rng, bool zero_output) const;

  template <typename T>
  std::vector<T> evaluate(const ParamView& params, std::span<const Vec3T<T>> points) const;

  double evaluate(std::span<const double> params, const Vec3& x) const;

 private:
  ManifoldConfig config_;
  Mlp net_;
};

struct Ray {
  Vec3 origin;
  Vec3 direction{0.0, 0.0, 1.0};
  double near = 0.5;
  double far = 4.0;

  void validate() const;
  Vec3 at(double t) const { return origin + t * direction; }
};

std::vector<double> sample_parameters(const Ray& ray, int samples);
std::vector<Vec3> ray_samples(const Ray& ray, int samples);

template <typename T>
struct IntersectionT {
  T t{};
  Vec3T<T> x_template;  // crossing on the deformed polyline (template space)
  Vec3T<T> x_target;    // same crossing on the undeformed ray (target space)
  int level_index = 0;
  int segment_index = 0;
};
using Intersection = IntersectionT<double>;

namespace detail {

struct Crossing {
  double t;
  int level;
  int segment;
};

// Crossings of consecutive level values, sorted by t; equal t values keep
// the lowest level index.
std::vector<Crossing> find_crossings(std::span<const double> t, std::span<const double> s,
                                     std::span<const double> levels);

// Bisects every bracketing segment `steps` times, then interpolates
// linearly inside the final sub-segment. Only its two endpoints are
// evaluated with T.
template <typename T, typename Deform, typename Level>
std::vector<std::vector<IntersectionT<T>>> refined_crossings(std::span<const Ray> rays, std::size_t n,
                                                            const std::vector<double>& ts,
                                                            const std::vector<double>& s,
                                                            const std::vector<std::vector<Crossing>>& crossings,
                                                            std::span<const double> levels, Deform& deform,
                                                            Level& level, int steps) {
  struct Bracket {
    std::size_t ray;
    double level, t0, t1, s0;
  };
  std::vector<Bracket> br;
  for (std::size_t r = 0; r < rays.size(); ++r) {
    for (const auto& c : crossings[r]) {
      const std::size_t i0 = r * n + static_cast<std::size_t>(c.segment);
      br.push_back({r, levels[static_cast<std::size_t>(c.level)], ts[i0], ts[i0 + 1], s[i0]});
    }
  }
  std::vector<Vec3> mid(br.size());
  for (int it = 0; it < steps; ++it) {
    for (std::size_t k = 0; k < br.size(); ++k) mid[k] = rays[br[k].ray].at(0.5 * (br[k].t0 + br[k].t1));
    const std::vector<Vec3> dx = deform(std::span<const Vec3>(mid));
    for (std::size_t k = 0; k < br.size(); ++k) mid[k] = mid[k] + dx[k];
    const std::vector<double> sm = level(std::span<const Vec3>(mid));
    for (std::size_t k = 0; k < br.size(); ++k) {
      Bracket& b = br[k];
      const double tm = 0.5 * (b.t0 + b.t1);
      // Keep the half whose endpoints still straddle (or touch) the level.
      if ((b.s0 - b.level) * (sm[k] - b.level) <= 0.0) {
        b.t1 = tm;
      } else {
        b.t0 = tm;
        b.s0 = sm[k];
      }
    }
  }

  std::vector<Vec3T<T>> pts(2 * br.size());
  for (std::size_t k = 0; k < br.size(); ++k) {
    pts[2 * k] = Vec3T<T>(rays[br[k].ray].at(br[k].t0));
    pts[2 * k + 1] = Vec3T<T>(rays[br[k].ray].at(br[k].t1));
  }
  const std::vector<Vec3T<T>> dx = deform(std::span<const Vec3T<T>>(pts));
  std::vector<Vec3T<T>> warped(pts.size());
  for (std::size_t k = 0; k < pts.size(); ++k) warped[k] = pts[k] + dx[k];
  const std::vector<T> sv = level(std::span<const Vec3T<T>>(warped));

  std::vector<std::vector<IntersectionT<T>>> out(rays.size());
  std::size_t k = 0;
  for (std::size_t r = 0; r < rays.size(); ++r) {
    for (const auto& c : crossings[r]) {
      const Bracket& b = br[k];
      const std::size_t a = 2 * k, e = 2 * k + 1;
      const T w = (T(b.level) - sv[a]) / (sv[e] - sv[a]);
      IntersectionT<T> hit;
      hit.level_index = c.level;
      hit.segment_index = c.segment;
      hit.x_template = warped[a] + w * (warped[e] - warped[a]);
      hit.x_target = pts[a] + w * (pts[e] - pts[a]);
      hit.t = T(b.t0) + w * T(b.t1 - b.t0);
      out[r].push_back(hit);
      ++k;
    }
  }
  return out;
}

}  // namespace detail

/// Intersects every ray with the level sets after deforming its samples.
///
/// `deform` and `level` are generic callables mapping a span of points to
/// displacements and scalar-field values; they are invoked with double for
/// detection and with T for the recorded crossing quantities, so only the
/// two samples bracketing each crossing enter the tape.
///
/// With `refine_steps` > 0 each bracketing segment is first bisected that
/// many times (values only) and the linear interpolation runs between the
/// endpoints of the final sub-segment. This shrinks the interpolation error
/// by 4^refine_steps, which matters for grazing rays.
template <typename T, typename Deform, typename Level>
std::vector<std::vector<IntersectionT<T>>> intersect_rays(std::span<const Ray> rays, int samples,
                                                         std::span<const double> levels, Deform&& deform,
                                                         Level&& level, int refine_steps = 0) {
  if (samples < 2) throw InvalidArgument("intersection needs at least 2 samples per ray");
  if (refine_steps < 0) throw InvalidArgument("refine_steps must be non-negative");
  const auto n = static_cast<std::size_t>(samples);
  std::vector<double> ts;
  std::vector<Vec3> xs;
  ts.reserve(rays.size() * n);
  xs.reserve(rays.size() * n);
  for (const Ray& ray : rays) {
    const std::vector<double> t = sample_parameters(ray, samples);
    for (double ti : t) {
      ts.push_back(ti);
      xs.push_back(ray.at(ti));
    }
  }
  const std::vector<Vec3> dx = deform(std::span<const Vec3>(xs));
  std::vector<Vec3> warped(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) warped[i] = xs[i] + dx[i];
  const std::vector<double> s = level(std::span<const Vec3>(warped));

  std::vector<std::vector<detail::Crossing>> crossings(rays.size());
  for (std::size_t r = 0; r < rays.size(); ++r) {
    crossings[r] = detail::find_crossings(std::span<const double>(ts).subspan(r * n, n),
                                          std::span<const double>(s).subspan(r * n, n), levels);
  }

  if (refine_steps > 0) {
    return detail::refined_crossings<T>(rays, n, ts, s, crossings, levels, deform, level, refine_steps);
  }

  // Samples bracketing a crossing, as global sample ids.
  std::vector<int> slot(xs.size(), -1);
  std::vector<std::size_t> needed;
  for (std::size_t r = 0; r < rays.size(); ++r) {
    for (const auto& c : crossings[r]) {
      for (std::size_t k = 0; k < 2; ++k) {
        const std::size_t id = r * n + static_cast<std::size_t>(c.segment) + k;
        if (slot[id] < 0) {
          slot[id] = static_cast<int>(needed.size());
          needed.push_back(id);
        }
      }
    }
  }
  std::vector<Vec3T<T>> warped_t(needed.size());
  std::vector<T> s_t(needed.size());
  if constexpr (std::is_same_v<T, double>) {
    for (std::size_t k = 0; k < needed.size(); ++k) {
      warped_t[k] = warped[needed[k]];
      s_t[k] = s[needed[k]];
    }
  } else {
    std::vector<Vec3T<T>> pts(needed.size());
    for (std::size_t k = 0; k < needed.size(); ++k) pts[k] = Vec3T<T>(xs[needed[k]]);
    const std::vector<Vec3T<T>> dx_t = deform(std::span<const Vec3T<T>>(pts));
    for (std::size_t k = 0; k < needed.size(); ++k) warped_t[k] = pts[k] + dx_t[k];
    s_t = level(std::span<const Vec3T<T>>(warped_t));
  }

  std::vector<std::vector<IntersectionT<T>>> out(rays.size());
  for (std::size_t r = 0; r < rays.size(); ++r) {
    out[r].reserve(crossings[r].size());
    for (const auto& c : crossings[r]) {
      const std::size_t i0 = r * n + static_cast<std::size_t>(c.segment);
      const auto a = static_cast<std::size_t>(slot[i0]);
      const auto b = static_cast<std::size_t>(slot[i0 + 1]);
      const T w = (T(levels[static_cast<std::size_t>(c.level)]) - s_t[a]) / (s_t[b] - s_t[a]);
      IntersectionT<T> hit;
      hit.level_index = c.level;
      hit.segment_index = c.segment;
      hit.x_template = warped_t[a] + w * (warped_t[b] - warped_t[a]);
      hit.x_target = Vec3T<T>(xs[i0]) + w * Vec3T<T>(xs[i0 + 1] - xs[i0]);
      hit.t = T(ts[i0]) + w * T(ts[i0 + 1] - ts[i0]);
      out[r].push_back(hit);
    }
  }
  return out;
}

/// Single-ray intersection with a value-only deformation callback.
std::vector<Intersection> intersect(const Ray& ray, const std::function<Vec3(const Vec3&)>& deform,
                                    const ManifoldField& field, std::span<const double> field_params, int samples);

template <typename T>
std::vector<T> ManifoldField::evaluate(const ParamView& params, std::span<const Vec3T<T>> points) const {
  using std::sqrt;
  if (params.value.size() != param_count()) throw InvalidArgument("manifold parameter count mismatch");
  std::vector<T> out(points.size());
  const Vec3T<T> c(config_.center);
  for (std::size_t i = 0; i < points.size(); ++i) out[i] = sqrt(squared_norm(points[i] - c));
  if (config_.mode == ManifoldMode::Learned && !points.empty()) {
    std::vector<T> in;
    in.reserve(points.size() * static_cast<std::size_t>(net_.shape().inputs));
    for (const auto& p : points) append_positional_encoding(p, config_.pos_frequencies, in);
    const std::vector<T> residual = net_.forward(params, std::span<const T>(in), points.size());
    for (std::size_t i = 0; i < points.size(); ++i) out[i] = out[i] + residual[i];
  }
  return out;
}

}  // namespace deforma
