#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "deforma/autodiff.hpp"

namespace deforma {

/// Read-only parameter values plus an optional buffer that receives
/// parameter gradients during a backward sweep.
struct ParamView {
  std::span<const double> value;
  std::span<double> grad = {};
};

/// Fully connected network with SiLU hidden activations.
///
/// Parameters are stored flat, layer by layer: weights row-major
/// (outputs x inputs) followed by the bias vector. When `activate_output`
/// is set the last layer is also passed through SiLU, which is how trunk
/// networks expose their final hidden features.
struct MlpShape {
  int inputs = 0;
  std::vector<int> hidden;
  int outputs = 0;
  bool activate_output = false;

  int layer_count() const { return static_cast<int>(hidden.size()) + 1; }
  int layer_inputs(int layer) const { return layer == 0 ? inputs : hidden[static_cast<std::size_t>(layer - 1)]; }
  int layer_outputs(int layer) const {
    return layer == layer_count() - 1 ? outputs : hidden[static_cast<std::size_t>(layer)];
  }
  std::size_t layer_offset(int layer) const;
  std::size_t param_count() const;
  friend bool operator==(const MlpShape&, const MlpShape&) = default;
};

class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(MlpShape shape);

  const MlpShape& shape() const { return shape_; }
  std::size_t param_count() const { return shape_.param_count(); }

  /// Gaussian weights with standard deviation sqrt(2 / fan_in), zero
  /// biases. `zero_output` zeroes the last layer entirely.
  std::vector<double> init(std::mt19937_64& rng, bool zero_output) const;

  /// Batched evaluation. `inputs` holds `n` rows of `shape().inputs`
  /// values; the result holds `n` rows of `shape().outputs` values.
  std::vector<double> forward(std::span<const double> params, std::span<const double> inputs, std::size_t n) const;

  /// Recorded evaluation on the active tape. Parameter gradients are
  /// accumulated into `params.grad` when it is non-empty.
  std::vector<Var> forward(const ParamView& params, std::span<const Var> inputs, std::size_t n) const;

  std::vector<double> forward(const ParamView& params, std::span<const double> inputs, std::size_t n) const {
    return forward(params.value, inputs, n);
  }

 private:
  void check(std::span<const double> params, std::size_t input_size, std::size_t n) const;
  MlpShape shape_;
};

}  // namespace deforma
