#pragma once

// Coordinate networks: the template radiance field and the inverse
// deformation field. Both are evaluated generically over the scalar type so
// the same code serves plain rendering (double) and recorded training (Var).

#include <cmath>
#include <numbers>
#include <random>
#include <span>
#include <vector>

#include "deforma/autodiff.hpp"
#include "deforma/common.hpp"
#include "deforma/mlp.hpp"

namespace deforma {

struct LatentDims {
  int id = 8;
  int exp = 4;
  int eps = 8;
  friend bool operator==(const LatentDims&, const LatentDims&) = default;
};

/// Identity, expression and noise codes plus camera pose
/// (pitch, yaw in radians; radius in scene units).
struct LatentCodes {
  std::vector<double> z_id;
  std::vector<double> z_exp;
  std::vector<double> eps;
  Vec3 pose{0.0, 0.0, 3.0};

  void validate(const LatentDims& dims) const;
};

template <typename T>
struct RadianceSampleT {
  Vec3T<T> color;
  T occupancy{};
};
using RadianceSample = RadianceSampleT<double>;

/// Appends x followed by sin(2^k pi x), cos(2^k pi x) for k < frequencies.
/// Within each frequency the three sines precede the three cosines.
template <typename T>
void append_positional_encoding(const Vec3T<T>& x, int frequencies, std::vector<T>& out) {
  using std::cos;
  using std::sin;
  out.push_back(x.x);
  out.push_back(x.y);
  out.push_back(x.z);
  double scale = std::numbers::pi;
  for (int k = 0; k < frequencies; ++k, scale *= 2.0) {
    for (int c = 0; c < 3; ++c) out.push_back(sin(x[c] * T(scale)));
    for (int c = 0; c < 3; ++c) out.push_back(cos(x[c] * T(scale)));
  }
}

std::vector<double> positional_encode(const Vec3& x, int frequencies);

inline int encoded_size(int frequencies) { return 3 + 6 * frequencies; }

struct TemplateConfig {
  int pos_frequencies = 6;
  int dir_frequencies = 4;
  int hidden = 64;
  int layers = 4;
  int color_hidden = 32;
  friend bool operator==(const TemplateConfig&, const TemplateConfig&) = default;
};

struct DeformConfig {
  int pos_frequencies = 4;
  int hidden = 64;
  int layers = 4;
  double max_deform = 0.3;
  friend bool operator==(const DeformConfig&, const DeformConfig&) = default;
};

/// Template radiance network G(x, z_id, eps, d) -> (color, occupancy).
///
/// A trunk over [enc(x), z_id, eps] feeds a linear occupancy head and a
/// colour branch over [trunk features, enc(d)]. Parameters are laid out
/// trunk, occupancy head, colour branch.
class TemplateField {
 public:
  TemplateField(const TemplateConfig& config, const LatentDims& dims);

  const TemplateConfig& config() const { return config_; }
  const LatentDims& dims() const { return dims_; }
  std::size_t param_count() const;
  const Mlp& trunk() const { return trunk_; }
  const Mlp& occupancy_head() const { return occupancy_; }
  const Mlp& color_branch() const { return color_; }

  /// Seeded fan-in Gaussian init; `zero_output` zeroes both output layers.
  /// `occupancy_bias` is the initial occupancy logit offset.
  std::vector<double> init(std::mt19937_64& rng, bool zero_output, double occupancy_bias = 0.0) const;

  template <typename T>
  std::vector<RadianceSampleT<T>> query(const ParamView& params, std::span<const Vec3T<T>> points,
                                        std::span<const Vec3T<T>> directions, std::span<const T> z_id,
                                        std::span<const T> eps) const;

  RadianceSample query(std::span<const double> params, const Vec3& x, std::span<const double> z_id,
                       std::span<const double> eps, const Vec3& d) const;

 private:
  TemplateConfig config_;
  LatentDims dims_;
  Mlp trunk_;
  Mlp occupancy_;
  Mlp color_;
};

/// Inverse deformation network F(x, z_id, z_exp) -> displacement, bounded
/// componentwise by max_deform through a scaled tanh.
class DeformField {
 public:
  DeformField(const DeformConfig& config, const LatentDims& dims);

  const DeformConfig& config() const { return config_; }
  const LatentDims& dims() const { return dims_; }
  std::size_t param_count() const { return net_.param_count(); }
  const Mlp& net() const { return net_; }

  std::vector<double> init(std::mt19937_64& rng, bool zero_output) const { return net_.init(rng, zero_output); }

  template <typename T>
  std::vector<Vec3T<T>> displacement(const ParamView& params, std::span<const Vec3T<T>> points,
                                     std::span<const T> z_id, std::span<const T> z_exp) const;

  Vec3 displacement(std::span<const double> params, const Vec3& x, std::span<const double> z_id,
                    std::span<const double> z_exp) const;

 private:
  DeformConfig config_;
  LatentDims dims_;
  Mlp net_;
};

namespace detail {

template <typename T>
void check_latent(std::span<const T> v, int expected, const char* name) {
  if (v.size() != static_cast<std::size_t>(expected)) {
    throw InvalidArgument(std::string(name) + " has length " + std::to_string(v.size()) + ", expected " +
                          std::to_string(expected));
  }
  for (const T& x : v) {
    if (!std::isfinite(value_of(x))) throw InvalidArgument(std::string(name) + " is not finite");
  }
}

template <typename T>
void check_point(const Vec3T<T>& p) {
  if (!std::isfinite(value_of(p.x)) || !std::isfinite(value_of(p.y)) || !std::isfinite(value_of(p.z))) {
    throw InvalidArgument("non-finite query point");
  }
}

}  // namespace detail

template <typename T>
std::vector<RadianceSampleT<T>> TemplateField::query(const ParamView& params, std::span<const Vec3T<T>> points,
                                                     std::span<const Vec3T<T>> directions, std::span<const T> z_id,
                                                     std::span<const T> eps) const {
  if (params.value.size() != param_count()) throw InvalidArgument("template parameter count mismatch");
  if (directions.size() != points.size()) throw InvalidArgument("template query needs one direction per point");
  detail::check_latent(z_id, dims_.id, "z_id");
  detail::check_latent(eps, dims_.eps, "eps");
  const std::size_t n = points.size();
  std::vector<RadianceSampleT<T>> out(n);
  if (n == 0) return out;

  const auto sub = [&](std::size_t offset, std::size_t count) {
    ParamView v{params.value.subspan(offset, count), {}};
    if (!params.grad.empty()) v.grad = params.grad.subspan(offset, count);
    return v;
  };
  const std::size_t n_trunk = trunk_.param_count();
  const std::size_t n_occ = occupancy_.param_count();
  const ParamView trunk_p = sub(0, n_trunk);
  const ParamView occ_p = sub(n_trunk, n_occ);
  const ParamView color_p = sub(n_trunk + n_occ, color_.param_count());

  std::vector<T> trunk_in;
  trunk_in.reserve(n * static_cast<std::size_t>(trunk_.shape().inputs));
  for (std::size_t i = 0; i < n; ++i) {
    detail::check_point(points[i]);
    append_positional_encoding(points[i], config_.pos_frequencies, trunk_in);
    trunk_in.insert(trunk_in.end(), z_id.begin(), z_id.end());
    trunk_in.insert(trunk_in.end(), eps.begin(), eps.end());
  }
  const std::vector<T> features = trunk_.forward(trunk_p, std::span<const T>(trunk_in), n);
  const std::vector<T> occ = occupancy_.forward(occ_p, std::span<const T>(features), n);

  const auto width = static_cast<std::size_t>(config_.hidden);
  std::vector<T> color_in;
  color_in.reserve(n * static_cast<std::size_t>(color_.shape().inputs));
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3T<T>& d = directions[i];
    const double dn = std::sqrt(square(value_of(d.x)) + square(value_of(d.y)) + square(value_of(d.z)));
    if (!(std::abs(dn - 1.0) <= 1e-6)) throw InvalidArgument("view direction must be unit length");
    color_in.insert(color_in.end(), features.begin() + static_cast<std::ptrdiff_t>(i * width),
                    features.begin() + static_cast<std::ptrdiff_t>((i + 1) * width));
    append_positional_encoding(d, config_.dir_frequencies, color_in);
  }
  const std::vector<T> rgb = color_.forward(color_p, std::span<const T>(color_in), n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].occupancy = sigmoid(occ[i]);
    out[i].color = {sigmoid(rgb[3 * i]), sigmoid(rgb[3 * i + 1]), sigmoid(rgb[3 * i + 2])};
  }
  return out;
}

template <typename T>
std::vector<Vec3T<T>> DeformField::displacement(const ParamView& params, std::span<const Vec3T<T>> points,
                                                std::span<const T> z_id, std::span<const T> z_exp) const {
  using std::tanh;
  if (params.value.size() != param_count()) throw InvalidArgument("deformation parameter count mismatch");
  detail::check_latent(z_id, dims_.id, "z_id");
  detail::check_latent(z_exp, dims_.exp, "z_exp");
  const std::size_t n = points.size();
  std::vector<T> in;
  in.reserve(n * static_cast<std::size_t>(net_.shape().inputs));
  for (std::size_t i = 0; i < n; ++i) {
    detail::check_point(points[i]);
    append_positional_encoding(points[i], config_.pos_frequencies, in);
    in.insert(in.end(), z_id.begin(), z_id.end());
    in.insert(in.end(), z_exp.begin(), z_exp.end());
  }
  const std::vector<T> raw = net_.forward(params, std::span<const T>(in), n);
  std::vector<Vec3T<T>> out(n);
  const T scale(config_.max_deform);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = {scale * tanh(raw[3 * i]), scale * tanh(raw[3 * i + 1]), scale * tanh(raw[3 * i + 2])};
  }
  return out;
}

}  // namespace deforma
