#pragma once

// Small patch discriminator, non-saturating GAN losses with an R1 penalty,
// and a toy two-mode training run used as a smoke test.

#include <cstdint>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "deforma/autodiff.hpp"
#include "deforma/common.hpp"

namespace deforma {

struct ImageShape {
  int width = 16;
  int height = 16;
  std::size_t size() const { return static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 3; }
  friend bool operator==(const ImageShape&, const ImageShape&) = default;
};

/// logit(x) = b2 + mean over non-overlapping patches p of
///            w2 . silu(W1 vec(p) + b1)
/// Images are row-major RGB, `shape.size()` values each. Parameters are
/// W1 (hidden x patch_len, row-major), b1, w2, b2.
class PatchDiscriminator {
 public:
  PatchDiscriminator(ImageShape shape, int patch = 4, int hidden = 16);

  const ImageShape& shape() const { return shape_; }
  int patch() const { return patch_; }
  int hidden() const { return hidden_; }
  std::size_t patch_len() const { return static_cast<std::size_t>(3 * patch_ * patch_); }
  std::size_t patch_count() const {
    return static_cast<std::size_t>(shape_.width / patch_) * static_cast<std::size_t>(shape_.height / patch_);
  }
  std::size_t param_count() const { return (patch_len() + 2) * static_cast<std::size_t>(hidden_) + 1; }

  std::vector<double> init(std::mt19937_64& rng) const;

  template <typename T, typename P>
  T logit(std::span<const P> params, std::span<const T> image) const;

  /// |d logit / d image|^2, evaluated analytically so that it can itself
  /// be recorded and differentiated.
  template <typename T, typename P>
  T input_gradient_sq(std::span<const P> params, std::span<const T> image) const;

 private:
  template <typename T>
  std::vector<T> patch_values(std::span<const T> image, std::size_t p) const;

  ImageShape shape_;
  int patch_;
  int hidden_;
};

template <typename T>
struct GanLosses {
  T g_loss{};
  T d_loss{};
};

/// Non-saturating losses over flat image batches:
///   g = mean softplus(-D(fake))
///   d = mean softplus(D(fake)) + mean softplus(-D(real)) + (r1/2) mean |grad D(real)|^2
template <typename T, typename P>
GanLosses<T> adversarial_losses(const PatchDiscriminator& disc, std::span<const P> params,
                                const std::vector<std::vector<T>>& real_batch,
                                const std::vector<std::vector<T>>& fake_batch, double r1_weight = 10.0);

GanLosses<double> adversarial_losses(const PatchDiscriminator& disc, std::span<const double> params,
                                     const std::vector<std::vector<double>>& real_batch,
                                     const std::vector<std::vector<double>>& fake_batch, double r1_weight = 10.0);

struct ToyGanConfig {
  std::uint64_t seed = 1;
  int steps = 100;
  int batch = 8;
  int latent = 4;
  int disc_hidden = 16;
  double disc_lr = 2e-4;
  double gen_lr = 1e-2;
  double r1_weight = 10.0;
};

struct ToyGanTrace {
  std::vector<double> g_loss;
  std::vector<double> d_loss;
};

/// 16x16 images from two modes (bright left half or bright top half, with
/// small noise); generator sigmoid(W z + b).
std::vector<double> toy_two_mode_sample(std::mt19937_64& rng, const ImageShape& shape);
ToyGanTrace run_toy_gan(const ToyGanConfig& config);

// ---------------------------------------------------------------------------

template <typename T>
std::vector<T> PatchDiscriminator::patch_values(std::span<const T> image, std::size_t p) const {
  const auto per_row = static_cast<std::size_t>(shape_.width / patch_);
  const std::size_t py = p / per_row;
  const std::size_t px = p % per_row;
  const auto ps = static_cast<std::size_t>(patch_);
  const auto w = static_cast<std::size_t>(shape_.width);
  std::vector<T> out;
  out.reserve(patch_len());
  for (std::size_t y = 0; y < ps; ++y) {
    for (std::size_t x = 0; x < ps; ++x) {
      const std::size_t base = ((py * ps + y) * w + px * ps + x) * 3;
      for (std::size_t c = 0; c < 3; ++c) out.push_back(image[base + c]);
    }
  }
  return out;
}

template <typename T, typename P>
T PatchDiscriminator::logit(std::span<const P> params, std::span<const T> image) const {
  if (params.size() != param_count()) throw InvalidArgument("discriminator parameter count mismatch");
  if (image.size() != shape_.size()) throw InvalidArgument("image does not match the discriminator shape");
  const std::size_t L = patch_len();
  const auto H = static_cast<std::size_t>(hidden_);
  const P* W1 = params.data();
  const P* b1 = W1 + H * L;
  const P* w2 = b1 + H;
  const P& b2 = w2[H];
  T sum(0.0);
  for (std::size_t p = 0; p < patch_count(); ++p) {
    const std::vector<T> v = patch_values(image, p);
    for (std::size_t h = 0; h < H; ++h) {
      T a = T(b1[h]);
      for (std::size_t k = 0; k < L; ++k) a = a + T(W1[h * L + k]) * v[k];
      sum = sum + T(w2[h]) * silu(a);
    }
  }
  return T(b2) + sum / T(static_cast<double>(patch_count()));
}

template <typename T, typename P>
T PatchDiscriminator::input_gradient_sq(std::span<const P> params, std::span<const T> image) const {
  if (params.size() != param_count()) throw InvalidArgument("discriminator parameter count mismatch");
  if (image.size() != shape_.size()) throw InvalidArgument("image does not match the discriminator shape");
  const std::size_t L = patch_len();
  const auto H = static_cast<std::size_t>(hidden_);
  const P* W1 = params.data();
  const P* b1 = W1 + H * L;
  const P* w2 = b1 + H;
  const T inv_p(1.0 / static_cast<double>(patch_count()));
  T total(0.0);
  for (std::size_t p = 0; p < patch_count(); ++p) {
    const std::vector<T> v = patch_values(image, p);
    std::vector<T> delta(H);
    for (std::size_t h = 0; h < H; ++h) {
      T a = T(b1[h]);
      for (std::size_t k = 0; k < L; ++k) a = a + T(W1[h * L + k]) * v[k];
      delta[h] = T(w2[h]) * silu_prime(a);
    }
    for (std::size_t k = 0; k < L; ++k) {
      T g(0.0);
      for (std::size_t h = 0; h < H; ++h) g = g + T(W1[h * L + k]) * delta[h];
      g = g * inv_p;
      total = total + g * g;
    }
  }
  return total;
}

template <typename T, typename P>
GanLosses<T> adversarial_losses(const PatchDiscriminator& disc, std::span<const P> params,
                                const std::vector<std::vector<T>>& real_batch,
                                const std::vector<std::vector<T>>& fake_batch, double r1_weight) {
  if (real_batch.empty() || fake_batch.empty()) throw InvalidArgument("adversarial losses need non-empty batches");
  for (const auto& b : {&real_batch, &fake_batch}) {
    for (const auto& img : *b) {
      if (img.size() != disc.shape().size()) {
        throw InvalidArgument("image has " + std::to_string(img.size()) + " values, expected " +
                              std::to_string(disc.shape().size()));
      }
    }
  }
  if (!(r1_weight >= 0)) throw InvalidArgument("R1 weight must be non-negative");
  T g(0.0), d_fake(0.0), d_real(0.0), r1(0.0);
  for (const auto& img : fake_batch) {
    const T l = disc.logit(params, std::span<const T>(img));
    g = g + softplus(-l);
    d_fake = d_fake + softplus(l);
  }
  for (const auto& img : real_batch) {
    d_real = d_real + softplus(-disc.logit(params, std::span<const T>(img)));
    if (r1_weight > 0) r1 = r1 + disc.input_gradient_sq(params, std::span<const T>(img));
  }
  const T nf(static_cast<double>(fake_batch.size()));
  const T nr(static_cast<double>(real_batch.size()));
  GanLosses<T> out;
  out.g_loss = g / nf;
  out.d_loss = d_fake / nf + d_real / nr + T(r1_weight / 2.0) * (r1 / nr);
  return out;
}

}  // namespace deforma
