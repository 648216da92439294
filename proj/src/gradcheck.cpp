#include "deforma/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

#include "deforma/adversarial.hpp"
#include "deforma/checkpoint.hpp"
#include "deforma/fitkit.hpp"
#include "deforma/losses.hpp"
#include "deforma/oracle.hpp"
#include "deforma/renderer.hpp"

namespace deforma {

using ad::Var;

GradCheckCase check_gradient(const GradCheckProblem& problem, const GradCheckOptions& options) {
  if (options.params < 1) throw InvalidArgument("gradient check needs at least one coordinate");
  if (!(options.step > 0) || !(options.tolerance > 0)) throw InvalidArgument("step and tolerance must be positive");
  GradCheckCase out;
  out.name = problem.name;
  const std::vector<double>& x0 = problem.point;
  const std::vector<double> grad = problem.gradient(x0);
  if (grad.size() != x0.size()) throw InvalidArgument(problem.name + ": gradient has the wrong size");

  std::vector<std::size_t> order(x0.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(options.seed ^ std::hash<std::string>{}(problem.name));
  std::shuffle(order.begin(), order.end(), rng);

  const std::vector<long> sig0 = problem.signature ? problem.signature(x0) : std::vector<long>{};
  std::vector<double> x = x0;
  for (std::size_t i : order) {
    if (out.checked >= options.params) break;
    if (problem.signature) {
      bool stable = true;
      for (double s : {options.step, -options.step}) {
        x[i] = x0[i] + s;
        stable = stable && problem.signature(x) == sig0;
      }
      x[i] = x0[i];
      if (!stable) {
        ++out.skipped;
        continue;
      }
    }
    auto along = [&](std::span<const double> v) {
      x[i] = v[0];
      const double f = problem.value(x);
      x[i] = x0[i];
      return f;
    };
    const double fd = oracle::fd_gradient(along, std::span<const double>(&x0[i], 1), options.step)[0];
    const double a = grad[i];
    const double err = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), options.abs_floor});
    out.max_error = std::max(out.max_error, err);
    ++out.checked;
    if (!(err <= options.tolerance)) {
      char buf[200];
      std::snprintf(buf, sizeof buf, "%s[%zu]: reverse %.10g, central difference %.10g, error %.3g",
                    problem.name.c_str(), i, a, fd, err);
      out.failures.emplace_back(buf);
    }
  }
  return out;
}

namespace {

std::vector<double> normal_vector(std::mt19937_64& rng, std::size_t n, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  std::vector<double> v(n);
  for (double& x : v) x = g(rng);
  return v;
}

std::vector<Vec3> random_points(std::mt19937_64& rng, std::size_t n, double half) {
  std::uniform_real_distribution<double> u(-half, half);
  std::vector<Vec3> v(n);
  for (Vec3& p : v) p = {u(rng), u(rng), u(rng)};
  return v;
}

std::vector<double> flatten(std::span<const Vec3> pts) {
  std::vector<double> out;
  for (const Vec3& p : pts) out.insert(out.end(), {p.x, p.y, p.z});
  return out;
}

template <typename T>
std::vector<Vec3T<T>> unflatten(std::span<const T> v, std::size_t offset, std::size_t count) {
  std::vector<Vec3T<T>> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    out[i] = {v[offset + 3 * i], v[offset + 3 * i + 1], v[offset + 3 * i + 2]};
  }
  return out;
}

template <typename T>
std::vector<T> as(std::span<const double> v) {
  return std::vector<T>(v.begin(), v.end());
}

// Runs `f` on recorded copies of `x` and returns d f / d x.
template <typename F>
std::vector<double> recorded_gradient(std::span<const double> x, F&& f) {
  ad::Tape tape;
  ad::Tape::Scope scope(tape);
  const std::vector<Var> v = tape.variables(x);
  const Var y = f(std::span<const Var>(v));
  return tape.backward(y).of(v);
}

struct PipelineSetup {
  FieldModel model;
  std::vector<double> z_id, z_exp, eps;
  std::vector<Ray> rays;
  std::vector<Vec3> weights;
  std::vector<Vec3> targets;
  FieldParams shapes;
};

FieldParams split(const FieldParams& shapes, std::span<const double> x) {
  FieldParams p = shapes;
  std::size_t o = 0;
  for (auto* v : {&p.template_params, &p.deform_params, &p.manifold_params}) {
    std::copy(x.begin() + static_cast<std::ptrdiff_t>(o), x.begin() + static_cast<std::ptrdiff_t>(o + v->size()),
              v->begin());
    o += v->size();
  }
  return p;
}

template <typename T>
T pipeline_objective(const PipelineSetup& s, const std::vector<PixelT<T>>& px) {
  T f(0.0);
  for (std::size_t r = 0; r < px.size(); ++r) {
    const Vec3T<T> diff = px[r].color - Vec3T<T>(s.targets[r]);
    f = f + dot(px[r].color, Vec3T<T>(s.weights[r])) + squared_norm(diff);
    if (px[r].has_depth) f = f + T(0.3) * px[r].depth;
    for (const auto& h : px[r].hits) f = f + T(0.05) * h.t + T(0.02) * dot(h.x_template, Vec3T<T>(s.weights[r]));
  }
  return f;
}

GradCheckProblem pipeline_problem(std::uint64_t seed, DepthWeighting weighting, const std::string& name,
                                  int refine_steps = 0) {
  auto s = std::make_shared<PipelineSetup>(PipelineSetup{FieldModel(FitConfig::default_fields()), {}, {}, {}, {}, {},
                                                         {}, {}});
  std::mt19937_64 rng(seed);
  const LatentDims& dims = s->model.config().dims;
  s->z_id = normal_vector(rng, static_cast<std::size_t>(dims.id));
  s->z_exp = normal_vector(rng, static_cast<std::size_t>(dims.exp));
  s->eps = normal_vector(rng, static_cast<std::size_t>(dims.eps));
  Camera cam;
  cam.pose = {0.1, 0.2, 3.0};
  cam.width = cam.height = 16;
  const std::vector<Ray> all = camera_rays(cam);
  for (int idx : {8 * 16 + 8, 6 * 16 + 9, 10 * 16 + 7, 7 * 16 + 5}) s->rays.push_back(all[static_cast<std::size_t>(idx)]);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t r = 0; r < s->rays.size(); ++r) {
    s->weights.push_back({u(rng) - 0.5, u(rng) - 0.5, u(rng) - 0.5});
    s->targets.push_back({u(rng), u(rng), u(rng)});
  }
  // Non-zero output layers so every parameter reaches the pixels.
  s->shapes = s->model.init(seed, InitOptions{false, false, false});
  RenderOptions opts;
  opts.depth_weighting = weighting;
  opts.refine_steps = refine_steps;

  GradCheckProblem p;
  p.name = name;
  p.point.insert(p.point.end(), s->shapes.template_params.begin(), s->shapes.template_params.end());
  p.point.insert(p.point.end(), s->shapes.deform_params.begin(), s->shapes.deform_params.end());
  p.point.insert(p.point.end(), s->shapes.manifold_params.begin(), s->shapes.manifold_params.end());
  auto render_d = [s, opts](std::span<const double> x) {
    const FieldParams params = split(s->shapes, x);
    const FieldSet fs = s->model.bind(params);
    return render_rays<double>(fs, s->z_id, s->z_exp, s->eps, s->rays, opts);
  };
  p.value = [s, render_d](std::span<const double> x) { return pipeline_objective(*s, render_d(x)); };
  p.signature = [render_d](std::span<const double> x) {
    std::vector<long> sig;
    for (const Pixel& px : render_d(x)) {
      sig.push_back(px.has_depth ? 1 : 0);
      for (const auto& h : px.hits) sig.push_back(h.segment_index * 16 + h.level_index);
      sig.push_back(-1);
    }
    return sig;
  };
  p.gradient = [s, opts](std::span<const double> x) {
    const FieldParams params = split(s->shapes, x);
    FieldParams grads = params.zeros_like();
    ad::Tape tape;
    ad::Tape::Scope scope(tape);
    const FieldSet fs = s->model.bind(params, &grads);
    const std::vector<Var> zi = as<Var>(s->z_id), ze = as<Var>(s->z_exp), ep = as<Var>(s->eps);
    const auto px = render_rays<Var>(fs, std::span<const Var>(zi), std::span<const Var>(ze),
                                     std::span<const Var>(ep), s->rays, opts);
    tape.backward(pipeline_objective(*s, px));
    std::vector<double> g;
    for (const auto* v : {&grads.template_params, &grads.deform_params, &grads.manifold_params}) {
      g.insert(g.end(), v->begin(), v->end());
    }
    return g;
  };
  return p;
}

GradCheckProblem chamfer_problem(std::uint64_t seed) {
  std::mt19937_64 rng(seed + 11);
  const std::size_t ns = 24, nt = 40;
  GradCheckProblem p;
  p.name = "chamfer";
  const auto src = random_points(rng, ns, 1.0);
  const auto dst = random_points(rng, nt, 1.0);
  p.point = flatten(src);
  const auto d = flatten(dst);
  p.point.insert(p.point.end(), d.begin(), d.end());
  p.value = [=](std::span<const double> x) {
    const auto a = unflatten<double>(x, 0, ns);
    const auto b = unflatten<double>(x, 3 * ns, nt);
    return chamfer_directed<double>(a, b);
  };
  p.gradient = [=](std::span<const double> x) {
    return recorded_gradient(x, [&](std::span<const Var> v) {
      const auto a = unflatten<Var>(v, 0, ns);
      const auto b = unflatten<Var>(v, 3 * ns, nt);
      return chamfer_directed<Var>(a, b);
    });
  };
  p.signature = [=](std::span<const double> x) {
    const auto a = unflatten<double>(x, 0, ns);
    const auto b = unflatten<double>(x, 3 * ns, nt);
    std::vector<long> sig;
    for (const Vec3& q : a) sig.push_back(static_cast<long>(oracle::exhaustive_nn(q, b).index));
    return sig;
  };
  return p;
}

GradCheckProblem landmark_problem(std::uint64_t seed) {
  std::mt19937_64 rng(seed + 12);
  const std::size_t k = 20;
  GradCheckProblem p;
  p.name = "landmark";
  p.point = flatten(random_points(rng, 2 * k, 1.0));
  p.value = [=](std::span<const double> x) {
    return landmark_loss<double>(unflatten<double>(x, 0, k), unflatten<double>(x, 3 * k, k));
  };
  p.gradient = [=](std::span<const double> x) {
    return recorded_gradient(x, [&](std::span<const Var> v) {
      return landmark_loss<Var>(unflatten<Var>(v, 0, k), unflatten<Var>(v, 3 * k, k));
    });
  };
  return p;
}

enum class DeformLoss { Imitation, Reg, Smooth };

GradCheckProblem deform_problem(std::uint64_t seed, DeformLoss which) {
  struct Setup {
    DeformField field{DeformConfig{}, LatentDims{}};
    std::vector<double> z_id, z_exp;
    std::vector<Vec3> points, perturbed, refs;
  };
  auto s = std::make_shared<Setup>();
  std::mt19937_64 rng(seed + 13);
  s->z_id = normal_vector(rng, 8);
  s->z_exp = normal_vector(rng, 4);
  s->points = random_points(rng, 32, 1.0);
  s->refs = random_points(rng, 32, 0.1);
  for (const Vec3& x : s->points) s->perturbed.push_back(x + sample_ball(rng, 0.01));

  GradCheckProblem p;
  p.name = which == DeformLoss::Imitation ? "imitation" : which == DeformLoss::Reg ? "reg" : "smooth";
  p.point = s->field.init(rng, false);
  auto loss = [s, which]<typename T>(const std::vector<Vec3T<T>>& f, const std::vector<Vec3T<T>>& f_xi) {
    std::vector<Vec3T<T>> refs(s->refs.begin(), s->refs.end());
    if (which == DeformLoss::Imitation) return deformation_imitation<T>(f, refs);
    if (which == DeformLoss::Reg) return deformation_reg<T>(f);
    return smoothness_loss<T>(f, f_xi);
  };
  p.value = [s, loss](std::span<const double> x) {
    const ParamView pv{x, {}};
    const auto f = s->field.displacement<double>(pv, s->points, s->z_id, s->z_exp);
    const auto f_xi = s->field.displacement<double>(pv, s->perturbed, s->z_id, s->z_exp);
    return loss(f, f_xi);
  };
  p.gradient = [s, loss](std::span<const double> x) {
    std::vector<double> g(x.size(), 0.0);
    ad::Tape tape;
    ad::Tape::Scope scope(tape);
    const ParamView pv{x, g};
    const std::vector<Var> zi = as<Var>(s->z_id), ze = as<Var>(s->z_exp);
    const std::vector<Vec3T<Var>> pts(s->points.begin(), s->points.end());
    const std::vector<Vec3T<Var>> pxi(s->perturbed.begin(), s->perturbed.end());
    const auto f = s->field.displacement<Var>(pv, pts, zi, ze);
    const auto f_xi = s->field.displacement<Var>(pv, pxi, zi, ze);
    tape.backward(loss(f, f_xi));
    return g;
  };
  return p;
}

struct GanSetup {
  PatchDiscriminator disc{ImageShape{}, 4, 8};
  std::vector<double> params;
  std::vector<std::vector<double>> real, fake;
};

std::shared_ptr<GanSetup> gan_setup(std::uint64_t seed) {
  auto s = std::make_shared<GanSetup>();
  std::mt19937_64 rng(seed + 14);
  s->params = s->disc.init(rng);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 2; ++i) {
    s->real.push_back(toy_two_mode_sample(rng, s->disc.shape()));
    std::vector<double> img(s->disc.shape().size());
    for (double& v : img) v = u(rng);
    s->fake.push_back(std::move(img));
  }
  return s;
}

std::vector<std::vector<Var>> as_var_batch(const std::vector<std::vector<double>>& b) {
  std::vector<std::vector<Var>> out;
  for (const auto& img : b) out.push_back(as<Var>(img));
  return out;
}

GradCheckProblem gan_discriminator_problem(std::uint64_t seed) {
  auto s = gan_setup(seed);
  GradCheckProblem p;
  p.name = "adversarial_d";
  p.point = s->params;
  p.value = [s](std::span<const double> x) { return adversarial_losses(s->disc, x, s->real, s->fake).d_loss; };
  p.gradient = [s](std::span<const double> x) {
    return recorded_gradient(x, [&](std::span<const Var> v) {
      return adversarial_losses<Var, Var>(s->disc, v, as_var_batch(s->real), as_var_batch(s->fake)).d_loss;
    });
  };
  return p;
}

GradCheckProblem gan_generator_problem(std::uint64_t seed) {
  auto s = gan_setup(seed);
  const std::size_t n = s->disc.shape().size();
  GradCheckProblem p;
  p.name = "adversarial_g";
  for (const auto& img : s->fake) p.point.insert(p.point.end(), img.begin(), img.end());
  p.value = [s, n](std::span<const double> x) {
    std::vector<std::vector<double>> fake{{x.begin(), x.begin() + static_cast<std::ptrdiff_t>(n)},
                                          {x.begin() + static_cast<std::ptrdiff_t>(n), x.end()}};
    return adversarial_losses(s->disc, s->params, s->real, fake).g_loss;
  };
  p.gradient = [s, n](std::span<const double> x) {
    return recorded_gradient(x, [&](std::span<const Var> v) {
      std::vector<std::vector<Var>> fake{{v.begin(), v.begin() + static_cast<std::ptrdiff_t>(n)},
                                         {v.begin() + static_cast<std::ptrdiff_t>(n), v.end()}};
      return adversarial_losses<Var, double>(s->disc, std::span<const double>(s->params), as_var_batch(s->real),
                                             fake, 0.0)
          .g_loss;
    });
  };
  return p;
}

}  // namespace

std::vector<GradCheckProblem> gradcheck_problems(std::uint64_t seed) {
  std::vector<GradCheckProblem> out;
  out.push_back(pipeline_problem(seed, DepthWeighting::NormalizedTransmittanceOpacity, "pixel"));
  out.push_back(pipeline_problem(seed, DepthWeighting::Transmittance, "pixel_transmittance_depth"));
  out.push_back(pipeline_problem(seed, DepthWeighting::NormalizedTransmittanceOpacity, "pixel_refined", 4));
  out.push_back(chamfer_problem(seed));
  out.push_back(landmark_problem(seed));
  out.push_back(deform_problem(seed, DeformLoss::Imitation));
  out.push_back(deform_problem(seed, DeformLoss::Reg));
  out.push_back(deform_problem(seed, DeformLoss::Smooth));
  out.push_back(gan_discriminator_problem(seed));
  out.push_back(gan_generator_problem(seed));
  return out;
}

std::vector<GradCheckCase> run_gradcheck(const GradCheckOptions& options, std::ostream* progress) {
  std::vector<GradCheckCase> out;
  for (const GradCheckProblem& p : gradcheck_problems(options.seed)) {
    out.push_back(check_gradient(p, options));
    const GradCheckCase& c = out.back();
    if (progress != nullptr) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "%-26s checked %4d skipped %3d max error %.3g %s\n", c.name.c_str(), c.checked,
                    c.skipped, c.max_error, c.passed() ? "ok" : "FAILED");
      *progress << buf;
      for (const std::string& f : c.failures) *progress << "  " << f << '\n';
    }
  }
  return out;
}

}  // namespace deforma
