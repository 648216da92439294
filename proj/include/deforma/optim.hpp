#pragma once

#include <span>
#include <string>
#include <vector>

namespace deforma {

struct AdamConfig {
  double beta1 = 0.0;
  double beta2 = 0.9;
  double eps = 1e-8;
  bool bias_correction = true;
};

/// Adam over a set of named parameter groups, each with its own learning
/// rate. Moments are kept per group and shaped like the group's parameters.
class Adam {
 public:
  struct Group {
    std::string name;
    double lr = 0.0;
    std::vector<double> m;
    std::vector<double> v;
  };

  explicit Adam(AdamConfig config = {}) : config_(config) {}

  /// Registers a group of `size` parameters; returns its index.
  std::size_t add_group(std::string name, std::size_t size, double lr);

  /// One update of group `g`. The step counter advances once per call to
  /// `advance()`, so every group of one iteration shares the same t.
  void step(std::size_t g, std::span<double> params, std::span<const double> grads);
  void advance() { ++t_; }

  long steps() const { return t_; }
  const AdamConfig& config() const { return config_; }
  const std::vector<Group>& groups() const { return groups_; }
  Group& group(std::size_t g);

 private:
  AdamConfig config_;
  std::vector<Group> groups_;
  long t_ = 0;
};

/// Single-group convenience: advances the counter and updates `params`.
void adam_step(Adam& opt, std::span<double> params, std::span<const double> grads);

/// Optimizer settings of the full-scale adversarial training recipe.
struct TrainingHyperparams {
  double field_lr = 2e-5;          // template, deformation and manifold networks
  double discriminator_lr = 2e-4;
  AdamConfig adam;
  int batch_size = 32;
  int resolution = 128;
  double r1_weight = 10.0;
};

}  // namespace deforma
