#include "deforma/neuralfields.hpp"

namespace deforma {

void LatentCodes::validate(const LatentDims& dims) const {
  detail::check_latent(std::span<const double>(z_id), dims.id, "z_id");
  detail::check_latent(std::span<const double>(z_exp), dims.exp, "z_exp");
  detail::check_latent(std::span<const double>(eps), dims.eps, "eps");
  if (!is_finite(pose)) throw InvalidArgument("pose is not finite");
  if (!(pose.z > 0)) throw InvalidArgument("camera radius must be positive");
}

std::vector<double> positional_encode(const Vec3& x, int frequencies) {
  if (frequencies < 0) throw InvalidArgument("frequency count must be non-negative");
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(encoded_size(frequencies)));
  append_positional_encoding(x, frequencies, out);
  return out;
}

namespace {

std::vector<int> repeat(int width, int count) { return std::vector<int>(static_cast<std::size_t>(count), width); }

void check_arch(int frequencies, int hidden, int layers) {
  if (frequencies < 0 || hidden < 1 || layers < 1) throw InvalidArgument("invalid network architecture");
}

}  // namespace

TemplateField::TemplateField(const TemplateConfig& config, const LatentDims& dims) : config_(config), dims_(dims) {
  check_arch(config.pos_frequencies, config.hidden, config.layers);
  check_arch(config.dir_frequencies, config.color_hidden, 1);
  const int trunk_in = encoded_size(config.pos_frequencies) + dims.id + dims.eps;
  trunk_ = Mlp(MlpShape{trunk_in, repeat(config.hidden, config.layers - 1), config.hidden, true});
  occupancy_ = Mlp(MlpShape{config.hidden, {}, 1, false});
  color_ = Mlp(MlpShape{config.hidden + encoded_size(config.dir_frequencies), {config.color_hidden}, 3, false});
}

std::size_t TemplateField::param_count() const {
  return trunk_.param_count() + occupancy_.param_count() + color_.param_count();
}

std::vector<double> TemplateField::init(std::mt19937_64& rng, bool zero_output, double occupancy_bias) const {
  std::vector<double> p = trunk_.init(rng, false);
  std::vector<double> occ = occupancy_.init(rng, zero_output);
  occ.back() = occupancy_bias;
  const std::vector<double> col = color_.init(rng, zero_output);
  p.insert(p.end(), occ.begin(), occ.end());
  p.insert(p.end(), col.begin(), col.end());
  return p;
}

RadianceSample TemplateField::query(std::span<const double> params, const Vec3& x, std::span<const double> z_id,
                                    std::span<const double> eps, const Vec3& d) const {
  const auto out = query<double>(ParamView{params}, std::span<const Vec3>(&x, 1), std::span<const Vec3>(&d, 1),
                                 z_id, eps);
  return out.front();
}

DeformField::DeformField(const DeformConfig& config, const LatentDims& dims) : config_(config), dims_(dims) {
  check_arch(config.pos_frequencies, config.hidden, config.layers);
  if (!(config.max_deform > 0)) throw InvalidArgument("max_deform must be positive");
  const int in = encoded_size(config.pos_frequencies) + dims.id + dims.exp;
  net_ = Mlp(MlpShape{in, repeat(config.hidden, config.layers), 3, false});
}

Vec3 DeformField::displacement(std::span<const double> params, const Vec3& x, std::span<const double> z_id,
                               std::span<const double> z_exp) const {
  return displacement<double>(ParamView{params}, std::span<const Vec3>(&x, 1), z_id, z_exp).front();
}

}  // namespace deforma
