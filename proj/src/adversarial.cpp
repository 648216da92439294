#include "deforma/adversarial.hpp"

#include <algorithm>
#include <cmath>

#include "deforma/optim.hpp"

namespace deforma {

PatchDiscriminator::PatchDiscriminator(ImageShape shape, int patch, int hidden)
    : shape_(shape), patch_(patch), hidden_(hidden) {
  if (patch < 1 || hidden < 1) throw InvalidArgument("discriminator needs positive patch size and width");
  if (shape.width < patch || shape.height < patch || shape.width % patch != 0 || shape.height % patch != 0) {
    throw InvalidArgument("image size must be a positive multiple of the patch size");
  }
}

std::vector<double> PatchDiscriminator::init(std::mt19937_64& rng) const {
  std::vector<double> p(param_count(), 0.0);
  const std::size_t L = patch_len();
  const auto H = static_cast<std::size_t>(hidden_);
  std::normal_distribution<double> n1(0.0, std::sqrt(2.0 / static_cast<double>(L)));
  std::normal_distribution<double> n2(0.0, std::sqrt(1.0 / static_cast<double>(H)));
  for (std::size_t i = 0; i < H * L; ++i) p[i] = n1(rng);
  for (std::size_t h = 0; h < H; ++h) p[H * L + H + h] = n2(rng);
  return p;
}

GanLosses<double> adversarial_losses(const PatchDiscriminator& disc, std::span<const double> params,
                                     const std::vector<std::vector<double>>& real_batch,
                                     const std::vector<std::vector<double>>& fake_batch, double r1_weight) {
  return adversarial_losses<double, double>(disc, params, real_batch, fake_batch, r1_weight);
}

std::vector<double> toy_two_mode_sample(std::mt19937_64& rng, const ImageShape& shape) {
  std::uniform_int_distribution<int> mode(0, 1);
  std::normal_distribution<double> noise(0.0, 0.05);
  const int m = mode(rng);
  std::vector<double> img(shape.size());
  for (int y = 0; y < shape.height; ++y) {
    for (int x = 0; x < shape.width; ++x) {
      const bool bright = m == 0 ? 2 * x < shape.width : 2 * y < shape.height;
      for (int c = 0; c < 3; ++c) {
        const double v = (bright ? 0.8 : 0.2) + noise(rng);
        img[(static_cast<std::size_t>(y) * static_cast<std::size_t>(shape.width) + static_cast<std::size_t>(x)) * 3 +
            static_cast<std::size_t>(c)] = std::clamp(v, 0.0, 1.0);
      }
    }
  }
  return img;
}

namespace {

// Generator sigmoid(W z + b); W is (pixels x latent) row-major, then b.
template <typename P>
std::vector<P> generate(std::span<const P> g, std::span<const double> z, std::size_t pixels) {
  const std::size_t k = z.size();
  std::vector<P> out(pixels);
  for (std::size_t i = 0; i < pixels; ++i) {
    P a = g[pixels * k + i];
    for (std::size_t j = 0; j < k; ++j) a = a + g[i * k + j] * P(z[j]);
    out[i] = sigmoid(a);
  }
  return out;
}

}  // namespace

ToyGanTrace run_toy_gan(const ToyGanConfig& config) {
  if (config.steps < 0 || config.batch < 1 || config.latent < 1) throw InvalidArgument("invalid toy GAN config");
  const ImageShape shape{16, 16};
  const PatchDiscriminator disc(shape, 4, config.disc_hidden);
  const std::size_t pixels = shape.size();
  const auto k = static_cast<std::size_t>(config.latent);

  std::mt19937_64 rng(config.seed);
  std::vector<double> dparams = disc.init(rng);
  std::vector<double> gparams(pixels * k + pixels, 0.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t i = 0; i < pixels * k; ++i) gparams[i] = 0.1 * normal(rng);

  Adam dopt;
  dopt.add_group("discriminator", dparams.size(), config.disc_lr);
  Adam gopt;
  gopt.add_group("generator", gparams.size(), config.gen_lr);

  auto latents = [&] {
    std::vector<std::vector<double>> zs(static_cast<std::size_t>(config.batch), std::vector<double>(k));
    for (auto& z : zs) {
      for (double& v : z) v = normal(rng);
    }
    return zs;
  };

  ToyGanTrace trace;
  for (int step = 0; step < config.steps; ++step) {
    // Discriminator update on a fresh real batch and generated batch.
    std::vector<std::vector<double>> real;
    for (int i = 0; i < config.batch; ++i) real.push_back(toy_two_mode_sample(rng, shape));
    std::vector<std::vector<double>> fake;
    for (const auto& z : latents()) fake.push_back(generate<double>(gparams, z, pixels));
    {
      ad::Tape tape;
      ad::Tape::Scope scope(tape);
      const std::vector<Var> p = tape.variables(dparams);
      std::vector<std::vector<Var>> real_v, fake_v;
      for (const auto& img : real) real_v.emplace_back(img.begin(), img.end());
      for (const auto& img : fake) fake_v.emplace_back(img.begin(), img.end());
      const auto losses = adversarial_losses<Var, Var>(disc, std::span<const Var>(p), real_v, fake_v, config.r1_weight);
      const ad::Adjoints adj = tape.backward(losses.d_loss);
      const std::vector<double> grad = adj.of(p);
      trace.d_loss.push_back(losses.d_loss.value());
      dopt.advance();
      dopt.step(0, dparams, grad);
    }
    // Generator update against the updated discriminator.
    {
      ad::Tape tape;
      ad::Tape::Scope scope(tape);
      const std::vector<Var> p = tape.variables(gparams);
      Var g_loss(0.0);
      const auto zs = latents();
      for (const auto& z : zs) {
        const std::vector<Var> img = generate<Var>(std::span<const Var>(p), z, pixels);
        g_loss = g_loss + softplus(-disc.logit(std::span<const double>(dparams), std::span<const Var>(img)));
      }
      g_loss = g_loss / Var(static_cast<double>(zs.size()));
      const ad::Adjoints adj = tape.backward(g_loss);
      const std::vector<double> grad = adj.of(p);
      trace.g_loss.push_back(g_loss.value());
      gopt.advance();
      gopt.step(0, gparams, grad);
    }
  }
  return trace;
}

}  // namespace deforma
