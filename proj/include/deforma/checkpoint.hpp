#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "deforma/manifolds.hpp"
#include "deforma/neuralfields.hpp"
#include "deforma/renderer.hpp"

namespace deforma {

struct FieldConfig {
  LatentDims dims;
  TemplateConfig templ;
  DeformConfig deform;
  ManifoldConfig manifold;
  friend bool operator==(const FieldConfig&, const FieldConfig&) = default;
};

/// Flat parameter vectors of the three fields.
struct FieldParams {
  std::vector<double> template_params;
  std::vector<double> deform_params;
  std::vector<double> manifold_params;

  std::size_t size() const { return template_params.size() + deform_params.size() + manifold_params.size(); }
  /// Same shapes, all zero.
  FieldParams zeros_like() const;
  void add(const FieldParams& other);
  friend bool operator==(const FieldParams&, const FieldParams&) = default;
};

struct InitOptions {
  bool zero_template_output = false;
  bool zero_deform_output = true;    // start from the identity warp
  bool zero_manifold_output = true;  // start from the analytic shells
  double occupancy_bias = 0.0;       // initial occupancy logit offset
};

/// The three field architectures built from one configuration.
class FieldModel {
 public:
  explicit FieldModel(FieldConfig config);

  const FieldConfig& config() const { return config_; }
  const TemplateField& templ() const { return templ_; }
  const DeformField& deform() const { return deform_; }
  const ManifoldField& manifold() const { return manifold_; }

  FieldParams init(std::uint64_t seed, const InitOptions& options = {}) const;
  void check(const FieldParams& params) const;

  /// Neural field set reading `params`; gradients, when requested, are
  /// accumulated into `grads` (same shapes as `params`).
  FieldSet bind(const FieldParams& params, FieldParams* grads = nullptr) const;

 private:
  FieldConfig config_;
  TemplateField templ_;
  DeformField deform_;
  ManifoldField manifold_;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// "FP01" checkpoint: one text header line
///   FP01 dims=... template=... deform=... manifold=... levels=... counts=...
/// followed by the little-endian float64 template, deformation and
/// manifold parameters. Header reals are written with 17 significant
/// digits so a round trip is bitwise exact.
std::string encode_checkpoint(const FieldConfig& config, const FieldParams& params);
void decode_checkpoint(const std::string& bytes, FieldConfig& config, FieldParams& params);
void save_checkpoint(const std::filesystem::path& path, const FieldConfig& config, const FieldParams& params);
void load_checkpoint(const std::filesystem::path& path, FieldConfig& config, FieldParams& params);

}  // namespace deforma
