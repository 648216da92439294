#include "deforma/mlp.hpp"

#include <Eigen/Dense>

#include <string>
#include <utility>

namespace deforma {

namespace {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic>;
using RowMajorMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using VectorMap = Eigen::Map<const Eigen::VectorXd>;

// Products run on owned (aligned) copies of the weights: Eigen's kernels
// peel unaligned heads differently depending on the address, which would
// make results differ in the last bit between otherwise identical runs.
Matrix layer_weights(std::span<const double> params, std::size_t offset, int out, int in) {
  return RowMajorMap(params.data() + offset, out, in);
}

// Vectorized sigmoid-family kernels over whole activation blocks.
Matrix sigmoid_of(const Matrix& z) { return (1.0 + (-z.array()).exp()).inverse().matrix(); }

Matrix silu_of(const Matrix& z) { return z.cwiseProduct(sigmoid_of(z)); }

Matrix silu_prime_of(const Matrix& z) {
  const Eigen::ArrayXXd s = sigmoid_of(z).array();
  return (s * (1.0 + z.array() * (1.0 - s))).matrix();
}

void apply_silu(Matrix& z) { z = silu_of(z); }

// Runs the network on column-major activations (features x batch) and,
// when `pre` is non-null, keeps every pre-activation for the backward pass.
Matrix run(const MlpShape& shape, std::span<const double> params, Matrix x, std::vector<Matrix>* pre) {
  const int layers = shape.layer_count();
  for (int l = 0; l < layers; ++l) {
    const int in = shape.layer_inputs(l);
    const int out = shape.layer_outputs(l);
    const std::size_t offset = shape.layer_offset(l);
    const Matrix w = layer_weights(params, offset, out, in);
    const Eigen::VectorXd b = VectorMap(params.data() + offset + static_cast<std::size_t>(out) * in, out);
    Matrix z = w * x;
    z.colwise() += b;
    const bool activate = l < layers - 1 || shape.activate_output;
    if (pre != nullptr) pre->push_back(z);
    if (activate) apply_silu(z);
    x = std::move(z);
  }
  return x;
}

class MlpBackward final : public ad::CustomOp {
 public:
  MlpBackward(MlpShape shape, std::span<const double> params, std::span<double> grad, Matrix input,
              std::vector<Matrix> pre, std::vector<std::int32_t> input_index)
      : shape_(std::move(shape)),
        params_(params),
        grad_(grad),
        input_(std::move(input)),
        pre_(std::move(pre)),
        input_index_(std::move(input_index)) {
    for (std::int32_t idx : input_index_) inputs_recorded_ = inputs_recorded_ || idx >= 0;
  }

  void backward(std::span<const double> output_adjoints, std::span<double> adjoints) override {
    const int layers = shape_.layer_count();
    const auto n = input_.cols();
    Matrix delta = Eigen::Map<const Matrix>(output_adjoints.data(), shape_.outputs, n);
    for (int l = layers - 1; l >= 0; --l) {
      const int in = shape_.layer_inputs(l);
      const int out = shape_.layer_outputs(l);
      const bool activate = l < layers - 1 || shape_.activate_output;
      const Matrix& z = pre_[static_cast<std::size_t>(l)];
      if (activate) delta = delta.cwiseProduct(silu_prime_of(z));
      const std::size_t offset = shape_.layer_offset(l);
      if (!grad_.empty()) {
        Matrix layer_in;
        if (l == 0) {
          layer_in = input_;
        } else {
          layer_in = silu_of(pre_[static_cast<std::size_t>(l - 1)]);
        }
        const Matrix gw = delta * layer_in.transpose();
        const Eigen::VectorXd gb = delta.rowwise().sum();
        double* g = grad_.data() + offset;
        for (int r = 0; r < out; ++r) {
          for (int c = 0; c < in; ++c) g[static_cast<std::size_t>(r) * in + c] += gw(r, c);
        }
        g += static_cast<std::size_t>(out) * in;
        for (int r = 0; r < out; ++r) g[r] += gb(r);
      }
      if (l == 0 && !inputs_recorded_) return;
      const Matrix w = layer_weights(params_, offset, out, in);
      Matrix next = w.transpose() * delta;
      delta = std::move(next);
    }
    // delta is now d/d(input), features x batch, column-major == row-major rows.
    const double* d = delta.data();
    for (std::size_t i = 0; i < input_index_.size(); ++i) {
      const std::int32_t idx = input_index_[i];
      if (idx >= 0) adjoints[static_cast<std::size_t>(idx)] += d[i];
    }
  }

 private:
  MlpShape shape_;
  std::span<const double> params_;
  std::span<double> grad_;
  Matrix input_;
  std::vector<Matrix> pre_;
  std::vector<std::int32_t> input_index_;
  bool inputs_recorded_ = false;
};

}  // namespace

std::size_t MlpShape::layer_offset(int layer) const {
  std::size_t offset = 0;
  for (int l = 0; l < layer; ++l) {
    offset += static_cast<std::size_t>(layer_outputs(l)) * static_cast<std::size_t>(layer_inputs(l) + 1);
  }
  return offset;
}

std::size_t MlpShape::param_count() const { return layer_offset(layer_count()); }

Mlp::Mlp(MlpShape shape) : shape_(std::move(shape)) {
  if (shape_.inputs <= 0 || shape_.outputs <= 0) throw InvalidArgument("network needs positive input and output sizes");
  for (int h : shape_.hidden) {
    if (h <= 0) throw InvalidArgument("hidden layer sizes must be positive");
  }
}

std::vector<double> Mlp::init(std::mt19937_64& rng, bool zero_output) const {
  std::vector<double> p(param_count(), 0.0);
  for (int l = 0; l < shape_.layer_count(); ++l) {
    if (zero_output && l == shape_.layer_count() - 1) break;
    const int in = shape_.layer_inputs(l);
    const int out = shape_.layer_outputs(l);
    std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / in));
    const std::size_t offset = shape_.layer_offset(l);
    for (std::size_t i = 0; i < static_cast<std::size_t>(in) * static_cast<std::size_t>(out); ++i) {
      p[offset + i] = normal(rng);
    }
  }
  return p;
}

void Mlp::check(std::span<const double> params, std::size_t input_size, std::size_t n) const {
  if (params.size() != param_count()) {
    throw InvalidArgument("network expects " + std::to_string(param_count()) + " parameters, got " +
                          std::to_string(params.size()));
  }
  if (input_size != n * static_cast<std::size_t>(shape_.inputs)) {
    throw InvalidArgument("network input has " + std::to_string(input_size) + " values, expected " +
                          std::to_string(n * static_cast<std::size_t>(shape_.inputs)));
  }
}

std::vector<double> Mlp::forward(std::span<const double> params, std::span<const double> inputs, std::size_t n) const {
  check(params, inputs.size(), n);
  if (n == 0) return {};
  Matrix x = Eigen::Map<const Matrix>(inputs.data(), shape_.inputs, static_cast<Eigen::Index>(n));
  Matrix y = run(shape_, params, std::move(x), nullptr);
  return {y.data(), y.data() + y.size()};
}

std::vector<Var> Mlp::forward(const ParamView& params, std::span<const Var> inputs, std::size_t n) const {
  check(params.value, inputs.size(), n);
  if (!params.grad.empty() && params.grad.size() != params.value.size()) {
    throw InvalidArgument("gradient buffer does not match the parameter count");
  }
  if (n == 0) return {};
  ad::Tape& tape = ad::Tape::require_active();
  Matrix x(shape_.inputs, static_cast<Eigen::Index>(n));
  std::vector<std::int32_t> index(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    x.data()[i] = inputs[i].value();
    index[i] = tape.checked_index(inputs[i]);
  }
  std::vector<Matrix> pre;
  pre.reserve(static_cast<std::size_t>(shape_.layer_count()));
  Matrix y = run(shape_, params.value, x, &pre);
  auto op = std::make_unique<MlpBackward>(shape_, params.value, params.grad, std::move(x), std::move(pre),
                                          std::move(index));
  return tape.record_custom(std::span<const double>(y.data(), static_cast<std::size_t>(y.size())), std::move(op));
}

}  // namespace deforma
