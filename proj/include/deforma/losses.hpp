#pragma once

// Geometry and deformation imitation losses, generic over the scalar type.

#include <functional>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "deforma/autodiff.hpp"
#include "deforma/common.hpp"
#include "deforma/nearest.hpp"

namespace deforma {

/// (1/|S|) sum_{x in S} min_{y in S'} |x - y|^2.
///
/// The nearest neighbour of each x is chosen on values (lowest index on
/// ties) and held fixed, so recorded evaluation differentiates the selected
/// pairs only.
template <typename T>
T chamfer_directed(std::span<const Vec3T<T>> source, std::span<const Vec3T<T>> target,
                   std::size_t grid_threshold = PointIndex::kDefaultGridThreshold) {
  if (source.empty() || target.empty()) throw InvalidArgument("chamfer distance needs non-empty point sets");
  std::vector<Vec3> target_v(target.size());
  for (std::size_t i = 0; i < target.size(); ++i) {
    target_v[i] = {value_of(target[i].x), value_of(target[i].y), value_of(target[i].z)};
  }
  const PointIndex index(target_v, grid_threshold);
  if constexpr (std::is_same_v<T, double>) {
    double sum = 0.0;
    for (const Vec3& x : source) sum += index.nearest(x).squared_distance;
    return sum / static_cast<double>(source.size());
  } else {
    T sum(0.0);
    for (const auto& x : source) {
      const Vec3 xv(value_of(x.x), value_of(x.y), value_of(x.z));
      const std::size_t j = index.nearest(xv).index;
      sum = sum + squared_norm(x - target[j]);
    }
    return sum / T(static_cast<double>(source.size()));
  }
}

/// Mean over pairs of |a_k - b_k|^2.
template <typename T>
T mean_squared_distance(std::span<const Vec3T<T>> a, std::span<const Vec3T<T>> b) {
  if (a.size() != b.size()) {
    throw InvalidArgument("point lists differ in length: " + std::to_string(a.size()) + " vs " +
                          std::to_string(b.size()));
  }
  if (a.empty()) throw InvalidArgument("empty point lists");
  T sum(0.0);
  for (std::size_t i = 0; i < a.size(); ++i) sum = sum + squared_norm(a[i] - b[i]);
  return sum / T(static_cast<double>(a.size()));
}

/// Mean over points of |a_k|^2.
template <typename T>
T mean_squared_norm(std::span<const Vec3T<T>> a) {
  if (a.empty()) throw InvalidArgument("empty point list");
  T sum(0.0);
  for (const auto& v : a) sum = sum + squared_norm(v);
  return sum / T(static_cast<double>(a.size()));
}

/// 3D landmark loss: mean squared distance over the K landmark pairs.
template <typename T>
T landmark_loss(std::span<const Vec3T<T>> a, std::span<const Vec3T<T>> b) {
  if (a.size() != b.size()) throw InvalidArgument("landmark sets differ in K");
  return mean_squared_distance(a, b);
}

/// |dx - dx_ref|^2 averaged over a batch of points.
template <typename T>
T deformation_imitation(std::span<const Vec3T<T>> dx, std::span<const Vec3T<T>> dx_ref) {
  return mean_squared_distance(dx, dx_ref);
}

/// |dx|^2 averaged over a batch of points.
template <typename T>
T deformation_reg(std::span<const Vec3T<T>> dx) {
  return mean_squared_norm(dx);
}

/// |D(x) - D(x + xi)|^2 averaged over pairs, from displacements already
/// evaluated at x and at x + xi.
template <typename T>
T smoothness_loss(std::span<const Vec3T<T>> at_x, std::span<const Vec3T<T>> at_perturbed) {
  return mean_squared_distance(at_x, at_perturbed);
}

// Single-point conveniences.
double deformation_imitation(const Vec3& dx, const Vec3& dx_ref);
double deformation_reg(const Vec3& dx);

/// Uniform sample from the ball of the given radius.
Vec3 sample_ball(std::mt19937_64& rng, double radius);

/// |D(x) - D(x + xi)|^2 with xi uniform in the ball of radius `xi_scale`.
double smoothness_loss(const std::function<Vec3(const Vec3&)>& deform, const Vec3& x, double xi_scale,
                       std::mt19937_64& rng);

/// Weights and switches for every loss term. The photometric term is the
/// supervised colour loss of the synthetic fit.
struct LossWeights {
  double photo = 1.0;
  double chamfer = 1.0;
  double landmark = 1.0;
  double imitation = 1.0;
  double reg = 0.1;
  double smooth = 1.0;
  double adversarial = 1.0;
  bool use_photo = true;
  bool use_chamfer = true;
  bool use_landmark = true;
  bool use_imitation = true;
  bool use_reg = true;
  bool use_smooth = true;
  bool use_adversarial = true;

  void validate() const;
};

template <typename T>
struct LossTerms {
  std::optional<T> photo, chamfer, landmark, imitation, reg, smooth, adversarial;
};

struct LossReport {
  std::vector<std::pair<std::string, double>> terms;  // enabled terms, fixed order
  double total = 0.0;

  std::optional<double> get(const std::string& name) const;
};

namespace detail {

template <typename T, typename F>
void for_each_term(const LossTerms<T>& terms, const LossWeights& w, F&& f) {
  f("photometric", terms.photo, w.use_photo, w.photo);
  f("chamfer", terms.chamfer, w.use_chamfer, w.chamfer);
  f("landmark", terms.landmark, w.use_landmark, w.landmark);
  f("imitation", terms.imitation, w.use_imitation, w.imitation);
  f("reg", terms.reg, w.use_reg, w.reg);
  f("smooth", terms.smooth, w.use_smooth, w.smooth);
  f("adversarial", terms.adversarial, w.use_adversarial, w.adversarial);
}

}  // namespace detail

/// Weighted sum over enabled terms. An enabled term without a value is an
/// error, as is a configuration with every term disabled.
template <typename T>
T weighted_total(const LossTerms<T>& terms, const LossWeights& weights) {
  weights.validate();
  T total(0.0);
  detail::for_each_term(terms, weights, [&](const char* name, const std::optional<T>& v, bool on, double w) {
    if (!on) return;
    if (!v) throw InvalidArgument(std::string("enabled loss '") + name + "' has no value");
    total = total + T(w) * *v;
  });
  return total;
}

LossReport total_loss(const LossTerms<double>& terms, const LossWeights& weights);

/// One `step, name, value` line per term plus the total.
void write_loss_log(std::ostream& out, long step, const LossReport& report);

}  // namespace deforma
