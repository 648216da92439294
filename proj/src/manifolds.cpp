#include "deforma/manifolds.hpp"

#include <cmath>

namespace deforma {

ManifoldField::ManifoldField(ManifoldConfig config) : config_(std::move(config)) {
  if (config_.levels.empty()) throw InvalidArgument("manifold field needs at least one level");
  for (std::size_t i = 1; i < config_.levels.size(); ++i) {
    if (!(config_.levels[i] > config_.levels[i - 1])) throw InvalidArgument("manifold levels must strictly increase");
  }
  if (!all_finite(config_.levels) || !is_finite(config_.center)) throw InvalidArgument("manifold config not finite");
  if (config_.mode == ManifoldMode::AnalyticRadial && !(config_.levels.front() > 0)) {
    throw InvalidArgument("analytic manifold radii must be positive");
  }
  if (config_.mode == ManifoldMode::Learned) {
    if (config_.pos_frequencies < 0 || config_.hidden < 1 || config_.layers < 1) {
      throw InvalidArgument("invalid manifold network architecture");
    }
    net_ = Mlp(MlpShape{encoded_size(config_.pos_frequencies),
                        std::vector<int>(static_cast<std::size_t>(config_.layers), config_.hidden), 1, false});
  }
}

std::size_t ManifoldField::param_count() const {
  return config_.mode == ManifoldMode::Learned ? net_.param_count() : 0;
}

std::vector<double> ManifoldField::init(std::mt19937_64& rng, bool zero_output) const {
  if (config_.mode != ManifoldMode::Learned) return {};
  return net_.init(rng, zero_output);
}

double ManifoldField::evaluate(std::span<const double> params, const Vec3& x) const {
  return evaluate<double>(ParamView{params}, std::span<const Vec3>(&x, 1)).front();
}

void Ray::validate() const {
  if (!is_finite(origin) || !is_finite(direction)) throw InvalidArgument("ray is not finite");
  if (std::abs(norm(direction) - 1.0) > 1e-9) throw InvalidArgument("ray direction must be unit length");
  if (!(near > 0 && near < far)) throw InvalidArgument("ray needs 0 < near < far");
}

std::vector<double> sample_parameters(const Ray& ray, int samples) {
  if (samples < 2) throw InvalidArgument("ray sampling needs at least 2 samples");
  std::vector<double> t(static_cast<std::size_t>(samples));
  const double span = ray.far - ray.near;
  const double last = samples - 1;
  for (int i = 0; i < samples; ++i) t[static_cast<std::size_t>(i)] = ray.near + (i / last) * span;
  t.back() = ray.far;
  return t;
}

std::vector<Vec3> ray_samples(const Ray& ray, int samples) {
  ray.validate();
  const std::vector<double> t = sample_parameters(ray, samples);
  std::vector<Vec3> out;
  out.reserve(t.size());
  for (double ti : t) out.push_back(ray.at(ti));
  return out;
}

namespace detail {

std::vector<Crossing> find_crossings(std::span<const double> t, std::span<const double> s,
                                     std::span<const double> levels) {
  std::vector<Crossing> out;
  for (std::size_t i = 0; i + 1 < s.size(); ++i) {
    const double s0 = s[i];
    const double s1 = s[i + 1];
    if (s0 == s1) continue;  // degenerate segment
    for (std::size_t j = 0; j < levels.size(); ++j) {
      const double l = levels[j];
      if ((s0 - l) * (s1 - l) > 0) continue;
      const double w = (l - s0) / (s1 - s0);
      out.push_back({t[i] + w * (t[i + 1] - t[i]), static_cast<int>(j), static_cast<int>(i)});
    }
  }
  std::sort(out.begin(), out.end(), [](const Crossing& a, const Crossing& b) {
    return a.t < b.t || (a.t == b.t && a.level < b.level);
  });
  // A touch at a sample shows up in both adjacent segments.
  std::vector<Crossing> unique;
  unique.reserve(out.size());
  for (const Crossing& c : out) {
    if (unique.empty() || c.t != unique.back().t) unique.push_back(c);
  }
  return unique;
}

}  // namespace detail

std::vector<Intersection> intersect(const Ray& ray, const std::function<Vec3(const Vec3&)>& deform,
                                    const ManifoldField& field, std::span<const double> field_params, int samples) {
  ray.validate();
  auto deform_batch = [&](auto points) {
    using P = typename decltype(points)::value_type;
    std::vector<std::remove_cv_t<P>> out;
    out.reserve(points.size());
    for (const auto& p : points) out.push_back(deform(p));
    return out;
  };
  auto level = [&](auto points) {
    using P = std::remove_cv_t<typename decltype(points)::value_type>;
    return field.evaluate<std::remove_cvref_t<decltype(std::declval<P>().x)>>(ParamView{field_params}, points);
  };
  auto hits = intersect_rays<double>(std::span<const Ray>(&ray, 1), samples, field.levels(), deform_batch, level);
  return std::move(hits.front());
}

}  // namespace deforma
