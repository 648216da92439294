#pragma once

// Analytic scene description shared by the closed-form oracle renderer and
// the engine's analytic radiance source. Only data and colour functions
// live here; neither rendering path is implemented in this header.

#include <array>
#include <cmath>
#include <vector>

#include "deforma/autodiff.hpp"
#include "deforma/common.hpp"

namespace deforma {

struct Paint {
  enum class Kind { Constant, Face };
  Kind kind = Kind::Constant;
  Vec3 rgb{0.8, 0.8, 0.8};
};

/// Colour painted at template-space point p. The face pattern is a smooth
/// low-frequency texture with every channel inside [0.1, 0.9].
template <typename T>
Vec3T<T> paint_color(const Paint& paint, const Vec3T<T>& p) {
  using std::cos;
  using std::sin;
  if (paint.kind == Paint::Kind::Constant) return Vec3T<T>(paint.rgb);
  return {T(0.55) + T(0.3) * sin(T(3.0) * p.x) * cos(T(2.0) * p.y),
          T(0.45) + T(0.25) * cos(T(3.0) * p.y + T(1.0)) * cos(p.x),
          T(0.4) + T(0.3) * sin(T(2.0) * p.z + p.x)};
}

struct AnalyticSphere {
  Vec3 center{0.0, 0.0, 0.0};
  double radius = 1.0;
  Paint paint;
};

/// Affine inverse deformation: a target-space point x maps to template
/// space as x + (A x + b). A is row-major. All zeros is the identity warp.
struct AffineWarp {
  std::array<double, 9> matrix{};
  Vec3 offset{};

  template <typename T>
  Vec3T<T> displacement(const Vec3T<T>& x) const {
    const auto& a = matrix;
    return {T(a[0]) * x.x + T(a[1]) * x.y + T(a[2]) * x.z + T(offset.x),
            T(a[3]) * x.x + T(a[4]) * x.y + T(a[5]) * x.z + T(offset.y),
            T(a[6]) * x.x + T(a[7]) * x.y + T(a[8]) * x.z + T(offset.z)};
  }

  static AffineWarp translation(const Vec3& v) {
    AffineWarp w;
    w.offset = v;
    return w;
  }
};

/// Union of opaque painted spheres seen through one affine warp.
struct SceneSpec {
  std::vector<AnalyticSphere> spheres;
  AffineWarp warp;
  Vec3 background{0.0, 0.0, 0.0};
};

}  // namespace deforma
