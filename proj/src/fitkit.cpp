#include "deforma/fitkit.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <numbers>
#include <ostream>
#include <sstream>

#include "deforma/imageio.hpp"
#include "deforma/nearest.hpp"
#include "deforma/oracle.hpp"

namespace deforma {

LatentCodes sample_latents(std::mt19937_64& rng, const LatentDims& dims, const LatentPrior& prior) {
  std::normal_distribution<double> normal(0.0, 1.0);
  LatentCodes c;
  auto draw = [&](std::vector<double>& v, int n, double sigma) {
    v.resize(static_cast<std::size_t>(n));
    for (double& x : v) x = sigma * normal(rng);
  };
  draw(c.z_id, dims.id, prior.sigma_id);
  draw(c.z_exp, dims.exp, prior.sigma_exp);
  draw(c.eps, dims.eps, prior.sigma_eps);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  c.pose.x = prior.pitch_range * unit(rng);
  c.pose.y = prior.yaw_range * unit(rng);
  c.pose.z = prior.radius;
  return c;
}

// ---------------------------------------------------------------------------
// Configuration

LossWeights FitConfig::default_weights() {
  LossWeights w;
  w.use_adversarial = false;
  w.adversarial = 0.0;
  w.imitation = 10.0;
  w.reg = 0.01;
  return w;
}

FieldConfig FitConfig::default_fields() {
  FieldConfig f;
  f.manifold.mode = ManifoldMode::Learned;
  return f;
}

void FitConfig::validate() const {
  auto positive = [](int v, const char* name) {
    if (v < 1) throw InvalidArgument(std::string(name) + " must be positive");
  };
  if (steps < 0) throw InvalidArgument("steps must be non-negative");
  positive(resolution, "resolution");
  positive(pixel_rays + vertex_rays, "pixel_rays + vertex_rays");
  if (pixel_rays < 0 || vertex_rays < 0) throw InvalidArgument("ray counts must be non-negative");
  positive(imitation_points, "imitation_points");
  positive(smooth_points, "smooth_points");
  if (smooth_points > imitation_points) throw InvalidArgument("smooth_points cannot exceed imitation_points");
  positive(vertices, "vertices");
  positive(id_dims, "id_dims");
  positive(exp_dims, "exp_dims");
  positive(landmarks, "landmarks");
  positive(eval_poses, "eval_poses");
  positive(eval_expressions, "eval_expressions");
  positive(log_every, "log_every");
  positive(threads, "threads");
  if (samples < 2) throw InvalidArgument("samples must be at least 2");
  for (double lr : {lr_template, lr_deform, lr_manifold}) {
    if (!(lr > 0) || !std::isfinite(lr)) throw InvalidArgument("learning rates must be positive");
  }
  if (!std::isfinite(occupancy_bias)) throw InvalidArgument("occupancy_bias must be finite");
  if (!(band >= 0) || !(xi_radius > 0) || !(eval_band >= 0)) throw InvalidArgument("invalid sampling radii");
  if (!(warp_linear >= 0) || !(warp_offset >= 0)) throw InvalidArgument("warp scales must be non-negative");
  if (!(prior.radius > 0) || prior.sigma_exp < 0 || prior.sigma_id < 0 || prior.sigma_eps < 0) {
    throw InvalidArgument("invalid latent prior");
  }
  if (fields.dims.id != id_dims || fields.dims.exp != exp_dims) {
    throw InvalidArgument("field latent sizes must equal the face basis dimensions");
  }
  weights.validate();
}

namespace {

struct Option {
  const char* key;
  std::function<std::string(const FitConfig&)> get;
  std::function<void(FitConfig&, const std::string&)> set;
};

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double to_real(const std::string& key, const std::string& s) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size() || !std::isfinite(v)) {
    throw InvalidArgument("option '" + key + "': expected a number, got '" + s + "'");
  }
  return v;
}

long long to_integer(const std::string& key, const std::string& s) {
  std::size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) throw InvalidArgument("option '" + key + "': expected an integer, got '" + s + "'");
  return v;
}

bool to_bool(const std::string& key, const std::string& s) {
  if (s == "1" || s == "true" || s == "on") return true;
  if (s == "0" || s == "false" || s == "off") return false;
  throw InvalidArgument("option '" + key + "': expected true/false, got '" + s + "'");
}

template <typename M>
Option int_option(const char* key, M member) {
  return {key, [member](const FitConfig& c) { return std::to_string(c.*member); },
          [key, member](FitConfig& c, const std::string& s) {
            c.*member = static_cast<std::remove_reference_t<decltype(c.*member)>>(to_integer(key, s));
          }};
}

Option real_option(const char* key, std::function<double&(FitConfig&)> ref) {
  return {key, [ref](const FitConfig& c) { return fmt(ref(const_cast<FitConfig&>(c))); },
          [key, ref](FitConfig& c, const std::string& s) { ref(c) = to_real(key, s); }};
}

Option bool_option(const char* key, std::function<bool&(FitConfig&)> ref) {
  return {key, [ref](const FitConfig& c) { return std::string(ref(const_cast<FitConfig&>(c)) ? "true" : "false"); },
          [key, ref](FitConfig& c, const std::string& s) { ref(c) = to_bool(key, s); }};
}

const std::vector<Option>& options() {
  static const std::vector<Option> table = [] {
    std::vector<Option> t;
    t.push_back(int_option("steps", &FitConfig::steps));
    t.push_back(int_option("resolution", &FitConfig::resolution));
    t.push_back(int_option("pixel_rays", &FitConfig::pixel_rays));
    t.push_back(int_option("vertex_rays", &FitConfig::vertex_rays));
    t.push_back(int_option("imitation_points", &FitConfig::imitation_points));
    t.push_back(int_option("smooth_points", &FitConfig::smooth_points));
    t.push_back(real_option("band", [](FitConfig& c) -> double& { return c.band; }));
    t.push_back(real_option("occupancy_bias", [](FitConfig& c) -> double& { return c.occupancy_bias; }));
    t.push_back(real_option("xi_radius", [](FitConfig& c) -> double& { return c.xi_radius; }));
    t.push_back(int_option("seed", &FitConfig::seed));
    t.push_back(int_option("scene_seed", &FitConfig::scene_seed));
    t.push_back(int_option("heldout_seed", &FitConfig::heldout_seed));
    t.push_back(int_option("vertices", &FitConfig::vertices));
    t.push_back({"id_dims", [](const FitConfig& c) { return std::to_string(c.id_dims); },
                 [](FitConfig& c, const std::string& s) {
                   c.id_dims = static_cast<int>(to_integer("id_dims", s));
                   c.fields.dims.id = c.id_dims;
                 }});
    t.push_back({"exp_dims", [](const FitConfig& c) { return std::to_string(c.exp_dims); },
                 [](FitConfig& c, const std::string& s) {
                   c.exp_dims = static_cast<int>(to_integer("exp_dims", s));
                   c.fields.dims.exp = c.exp_dims;
                 }});
    t.push_back({"eps_dims", [](const FitConfig& c) { return std::to_string(c.fields.dims.eps); },
                 [](FitConfig& c, const std::string& s) {
                   c.fields.dims.eps = static_cast<int>(to_integer("eps_dims", s));
                 }});
    t.push_back(int_option("landmarks", &FitConfig::landmarks));
    t.push_back(real_option("warp_linear", [](FitConfig& c) -> double& { return c.warp_linear; }));
    t.push_back(real_option("warp_offset", [](FitConfig& c) -> double& { return c.warp_offset; }));
    t.push_back(real_option("sigma_id", [](FitConfig& c) -> double& { return c.prior.sigma_id; }));
    t.push_back(real_option("sigma_exp", [](FitConfig& c) -> double& { return c.prior.sigma_exp; }));
    t.push_back(real_option("sigma_eps", [](FitConfig& c) -> double& { return c.prior.sigma_eps; }));
    t.push_back(real_option("pitch_range", [](FitConfig& c) -> double& { return c.prior.pitch_range; }));
    t.push_back(real_option("yaw_range", [](FitConfig& c) -> double& { return c.prior.yaw_range; }));
    t.push_back(real_option("radius", [](FitConfig& c) -> double& { return c.prior.radius; }));
    t.push_back(real_option("w_photo", [](FitConfig& c) -> double& { return c.weights.photo; }));
    t.push_back(real_option("w_ch", [](FitConfig& c) -> double& { return c.weights.chamfer; }));
    t.push_back(real_option("w_lm", [](FitConfig& c) -> double& { return c.weights.landmark; }));
    t.push_back(real_option("w_3dmm", [](FitConfig& c) -> double& { return c.weights.imitation; }));
    t.push_back(real_option("w_reg", [](FitConfig& c) -> double& { return c.weights.reg; }));
    t.push_back(real_option("w_smooth", [](FitConfig& c) -> double& { return c.weights.smooth; }));
    t.push_back(real_option("w_adv", [](FitConfig& c) -> double& { return c.weights.adversarial; }));
    t.push_back(bool_option("use_photo", [](FitConfig& c) -> bool& { return c.weights.use_photo; }));
    t.push_back(bool_option("use_ch", [](FitConfig& c) -> bool& { return c.weights.use_chamfer; }));
    t.push_back(bool_option("use_lm", [](FitConfig& c) -> bool& { return c.weights.use_landmark; }));
    t.push_back(bool_option("use_3dmm", [](FitConfig& c) -> bool& { return c.weights.use_imitation; }));
    t.push_back(bool_option("use_reg", [](FitConfig& c) -> bool& { return c.weights.use_reg; }));
    t.push_back(bool_option("use_smooth", [](FitConfig& c) -> bool& { return c.weights.use_smooth; }));
    t.push_back(bool_option("use_adv", [](FitConfig& c) -> bool& { return c.weights.use_adversarial; }));
    t.push_back(real_option("lr_template", [](FitConfig& c) -> double& { return c.lr_template; }));
    t.push_back(real_option("lr_deform", [](FitConfig& c) -> double& { return c.lr_deform; }));
    t.push_back(real_option("lr_manifold", [](FitConfig& c) -> double& { return c.lr_manifold; }));
    t.push_back(real_option("adam_beta1", [](FitConfig& c) -> double& { return c.adam.beta1; }));
    t.push_back(real_option("adam_beta2", [](FitConfig& c) -> double& { return c.adam.beta2; }));
    t.push_back(real_option("adam_eps", [](FitConfig& c) -> double& { return c.adam.eps; }));
    t.push_back(real_option("max_deform", [](FitConfig& c) -> double& { return c.fields.deform.max_deform; }));
    t.push_back({"manifold",
                 [](const FitConfig& c) {
                   return std::string(c.fields.manifold.mode == ManifoldMode::Learned ? "learned" : "analytic");
                 },
                 [](FitConfig& c, const std::string& s) {
                   if (s == "learned") {
                     c.fields.manifold.mode = ManifoldMode::Learned;
                   } else if (s == "analytic") {
                     c.fields.manifold.mode = ManifoldMode::AnalyticRadial;
                   } else {
                     throw InvalidArgument("option 'manifold': expected learned or analytic, got '" + s + "'");
                   }
                 }});
    t.push_back(int_option("samples", &FitConfig::samples));
    t.push_back(int_option("eval_poses", &FitConfig::eval_poses));
    t.push_back(int_option("eval_expressions", &FitConfig::eval_expressions));
    t.push_back(real_option("eval_band", [](FitConfig& c) -> double& { return c.eval_band; }));
    t.push_back(int_option("log_every", &FitConfig::log_every));
    t.push_back(int_option("threads", &FitConfig::threads));
    return t;
  }();
  return table;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

void set_fit_option(FitConfig& config, const std::string& key, const std::string& value) {
  for (const Option& o : options()) {
    if (key == o.key) {
      o.set(config, trim(value));
      return;
    }
  }
  throw InvalidArgument("unknown fit option '" + key + "'");
}

FitConfig read_fit_config(const std::filesystem::path& path, FitConfig base) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open config " + path.string());
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const std::string body = trim(line.substr(0, line.find('#')));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw InvalidArgument(path.string() + ":" + std::to_string(number) + ": expected key = value");
    }
    set_fit_option(base, trim(body.substr(0, eq)), body.substr(eq + 1));
  }
  return base;
}

std::string describe_fit_config(const FitConfig& config) {
  std::string out;
  for (const Option& o : options()) out += std::string(o.key) + " = " + o.get(config) + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Ground-truth scene

namespace {

using Mat3 = Eigen::Matrix3d;

Mat3 to_mat(const std::array<double, 9>& a) {
  Mat3 m;
  m << a[0], a[1], a[2], a[3], a[4], a[5], a[6], a[7], a[8];
  return m;
}

}  // namespace

SyntheticScene::SyntheticScene(const FitConfig& config) {
  basis_ = synth_basis(config.scene_seed, config.vertices, config.id_dims, config.exp_dims, config.landmarks);
  for (Vec3& v : basis_.mean_shape) v = normalized(v);

  std::mt19937_64 rng(config.scene_seed ^ 0x5deece66dULL);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int k = 0; k < config.exp_dims; ++k) {
    std::array<double, 9> a{};
    double fro = 0.0;
    for (double& x : a) {
      x = normal(rng);
      fro += x * x;
    }
    for (double& x : a) x *= config.warp_linear / std::sqrt(fro);
    Vec3 b(normal(rng), normal(rng), normal(rng));
    b = (config.warp_offset / norm(b)) * b;
    a_.push_back(a);
    b_.push_back(b);
  }

  // Expression column k holds A_k p + b_k at every neutral vertex p.
  const std::size_t rows = basis_.rows();
  for (int k = 0; k < config.exp_dims; ++k) {
    const Mat3 a = to_mat(a_[static_cast<std::size_t>(k)]);
    for (std::size_t v = 0; v < basis_.vertex_count(); ++v) {
      const Vec3& p = basis_.mean_shape[v];
      const Eigen::Vector3d d = a * Eigen::Vector3d(p.x, p.y, p.z);
      for (int c = 0; c < 3; ++c) {
        basis_.exp_basis[static_cast<std::size_t>(k) * rows + 3 * v + static_cast<std::size_t>(c)] =
            d[c] + b_[static_cast<std::size_t>(k)][c];
      }
    }
  }
  basis_.validate();
}

AffineWarp SyntheticScene::warp(std::span<const double> gamma) const {
  if (gamma.size() != a_.size()) throw InvalidArgument("expression code has the wrong length");
  Mat3 m = Mat3::Identity();
  Eigen::Vector3d b = Eigen::Vector3d::Zero();
  for (std::size_t k = 0; k < a_.size(); ++k) {
    m += gamma[k] * to_mat(a_[k]);
    b += gamma[k] * Eigen::Vector3d(b_[k].x, b_[k].y, b_[k].z);
  }
  const Mat3 inv = m.inverse();
  if (!inv.allFinite()) throw NumericalError("expression warp is singular");
  const Mat3 lin = inv - Mat3::Identity();
  const Eigen::Vector3d off = -inv * b;
  AffineWarp w;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) w.matrix[static_cast<std::size_t>(3 * r + c)] = lin(r, c);
  }
  w.offset = {off[0], off[1], off[2]};
  return w;
}

SceneSpec SyntheticScene::scene(std::span<const double> gamma) const {
  SceneSpec s;
  s.spheres.push_back({{0.0, 0.0, 0.0}, 1.0, {Paint::Kind::Face, {}}});
  s.warp = warp(gamma);
  return s;
}

Mesh SyntheticScene::expressed_mesh(std::span<const double> gamma) const {
  Coefficients c;
  c.beta.assign(static_cast<std::size_t>(basis_.id_dims), 0.0);
  c.gamma.assign(gamma.begin(), gamma.end());
  return reconstruct_shape(basis_, c);
}

Vec3 SyntheticScene::true_displacement(const Vec3& x, std::span<const double> gamma) const {
  return warp(gamma).displacement(x);
}

// ---------------------------------------------------------------------------
// Training

namespace {

Camera make_camera(const FitConfig& config, const Vec3& pose) {
  Camera cam;
  cam.pose = pose;
  cam.width = config.resolution;
  cam.height = config.resolution;
  return cam;
}

RenderOptions render_options(const FitConfig& config) {
  RenderOptions o;
  o.samples = config.samples;
  o.threads = config.threads;
  return o;
}

struct Batch {
  LatentCodes latents;
  std::vector<Ray> rays;
  std::vector<Vec3> target_colors;
  std::vector<Vec3> surface_vertices;  // visible vertices the vertex rays pass through
  std::vector<Vec3> imitation_points;
  std::vector<Vec3> imitation_refs;
  std::vector<Vec3> perturbed;         // first smooth_points imitation points plus xi
  std::vector<Vec3> landmarks;         // expressed
};

Batch draw_batch(const FitConfig& config, const SyntheticScene& scene, const std::vector<Vec3>& neutral_landmarks,
                 std::mt19937_64& rng) {
  (void)neutral_landmarks;
  Batch b;
  b.latents = sample_latents(rng, config.fields.dims, config.prior);
  const std::vector<double>& gamma = b.latents.z_exp;
  const SceneSpec spec = scene.scene(gamma);
  const Mesh mesh = scene.expressed_mesh(gamma);
  const Camera cam = make_camera(config, b.latents.pose);
  const std::vector<Ray> all = camera_rays(cam);

  std::uniform_int_distribution<std::size_t> pick_pixel(0, all.size() - 1);
  for (int i = 0; i < config.pixel_rays; ++i) b.rays.push_back(all[pick_pixel(rng)]);

  const Vec3 eye = cam.position();
  std::uniform_int_distribution<std::size_t> pick_vertex(0, mesh.vertices.size() - 1);
  for (int tries = 0; tries < 8 * config.vertex_rays && static_cast<int>(b.surface_vertices.size()) < config.vertex_rays;
       ++tries) {
    const Vec3& v = mesh.vertices[pick_vertex(rng)];
    Ray r;
    r.origin = eye;
    r.direction = normalized(v - eye);
    r.near = cam.near();
    r.far = cam.far();
    const oracle::Hit hit = oracle::analytic_render(spec, r);
    const double dist = norm(v - eye);
    if (!hit.depth || std::abs(*hit.depth - dist) > 1e-6 * dist) continue;  // occluded
    b.rays.push_back(r);
    b.surface_vertices.push_back(v);
  }
  for (const Ray& r : b.rays) b.target_colors.push_back(oracle::analytic_render(spec, r).color);

  Vec3 lo = mesh.vertices.front(), hi = lo;
  for (const Vec3& v : mesh.vertices) {
    for (int c = 0; c < 3; ++c) {
      lo[c] = std::min(lo[c], v[c]);
      hi[c] = std::max(hi[c], v[c]);
    }
  }
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const PointIndex index(mesh.vertices);
  for (int i = 0; i < config.imitation_points; ++i) {
    Vec3 x;
    for (int c = 0; c < 3; ++c) x[c] = lo[c] - config.band + unit(rng) * (hi[c] - lo[c] + 2.0 * config.band);
    b.imitation_points.push_back(x);
    b.imitation_refs.push_back(reference_deformation(scene.basis(), gamma, index.nearest(x).index));
  }
  for (int i = 0; i < config.smooth_points; ++i) {
    b.perturbed.push_back(b.imitation_points[static_cast<std::size_t>(i)] + sample_ball(rng, config.xi_radius));
  }
  b.landmarks = extract_landmarks(mesh, scene.basis());
  return b;
}

std::vector<Vec3T<Var>> as_constants(const std::vector<Vec3>& v) {
  std::vector<Vec3T<Var>> out;
  out.reserve(v.size());
  for (const Vec3& p : v) out.emplace_back(p);
  return out;
}

std::vector<Var> as_constants(const std::vector<double>& v) { return {v.begin(), v.end()}; }

struct StepResult {
  LossReport report;
  bool finite = true;
};

// Evaluates every enabled loss on `batch`; with `grads` set, also
// back-propagates the weighted total into it.
StepResult step_losses(const FitConfig& config, const FieldModel& model, const FieldParams& params,
                       FieldParams* grads, const Batch& batch, const std::vector<Vec3>& neutral_landmarks) {
  const LossWeights& w = config.weights;
  ad::Tape tape;
  ad::Tape::Scope scope(tape);
  const FieldSet fs = model.bind(params, grads);
  const std::vector<Var> z_id = as_constants(batch.latents.z_id);
  const std::vector<Var> z_exp = as_constants(batch.latents.z_exp);
  const std::vector<Var> eps = as_constants(batch.latents.eps);
  const std::span<const Var> zi(z_id), ze(z_exp), ee(eps);

  LossTerms<Var> terms;
  if (w.use_photo || w.use_chamfer) {
    const auto pixels = render_rays<Var>(fs, zi, ze, ee, batch.rays, render_options(config));
    Var photo(0.0);
    std::vector<Vec3T<Var>> cloud;
    for (std::size_t r = 0; r < pixels.size(); ++r) {
      photo = photo + squared_norm(pixels[r].color - Vec3T<Var>(batch.target_colors[r]));
      if (pixels[r].has_depth) {
        cloud.push_back(Vec3T<Var>(batch.rays[r].origin) + pixels[r].depth * Vec3T<Var>(batch.rays[r].direction));
      }
    }
    terms.photo = photo / Var(3.0 * static_cast<double>(pixels.size()));
    if (!cloud.empty() && !batch.surface_vertices.empty()) {
      const auto s = as_constants(batch.surface_vertices);
      terms.chamfer = chamfer_directed<Var>(s, cloud);
    } else {
      terms.chamfer = Var(0.0);
    }
  }
  if (w.use_imitation || w.use_reg || w.use_smooth) {
    const auto pts = as_constants(batch.imitation_points);
    const auto dx = fs.displacement<Var>(std::span<const Vec3T<Var>>(pts), zi, ze);
    const auto refs = as_constants(batch.imitation_refs);
    terms.imitation = deformation_imitation<Var>(dx, refs);
    terms.reg = deformation_reg<Var>(dx);
    if (w.use_smooth) {
      const auto moved = as_constants(batch.perturbed);
      const auto dx2 = fs.displacement<Var>(std::span<const Vec3T<Var>>(moved), zi, ze);
      terms.smooth = smoothness_loss<Var>(std::span<const Vec3T<Var>>(dx.data(), dx2.size()), dx2);
    }
  }
  if (w.use_landmark) {
    const auto q = as_constants(batch.landmarks);
    const auto dq = fs.displacement<Var>(std::span<const Vec3T<Var>>(q), zi, ze);
    std::vector<Vec3T<Var>> warped(q.size());
    for (std::size_t k = 0; k < q.size(); ++k) warped[k] = q[k] + dq[k];
    const auto target = as_constants(neutral_landmarks);
    terms.landmark = landmark_loss<Var>(warped, target);
  }

  const Var total = weighted_total(terms, w);
  LossTerms<double> values;
  auto val = [](const std::optional<Var>& v) -> std::optional<double> {
    return v ? std::optional<double>(v->value()) : std::nullopt;
  };
  values.photo = val(terms.photo);
  values.chamfer = val(terms.chamfer);
  values.landmark = val(terms.landmark);
  values.imitation = val(terms.imitation);
  values.reg = val(terms.reg);
  values.smooth = val(terms.smooth);
  StepResult out;
  out.report = total_loss(values, w);
  out.finite = std::isfinite(total.value());
  for (const auto& [name, v] : out.report.terms) out.finite = out.finite && std::isfinite(v);
  if (grads != nullptr && out.finite) tape.backward(total);
  return out;
}

double norm_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

[[noreturn]] void dump_state(const FitHooks& hooks, int step, const LossReport& report, const FieldConfig& config,
                             const FieldParams& params, const std::string& cause = "") {
  std::ostringstream msg;
  msg << "non-finite loss at step " << step << ":";
  if (!cause.empty()) msg << ' ' << cause << ';';
  for (const auto& [name, v] : report.terms) msg << ' ' << name << '=' << fmt(v);
  msg << " total=" << fmt(report.total) << " |template|=" << fmt(norm_of(params.template_params))
      << " |deform|=" << fmt(norm_of(params.deform_params)) << " |manifold|=" << fmt(norm_of(params.manifold_params));
  if (!hooks.dump_dir.empty()) {
    std::filesystem::create_directories(hooks.dump_dir);
    std::ofstream(hooks.dump_dir / "nonfinite.txt") << msg.str() << '\n';
    save_checkpoint(hooks.dump_dir / "nonfinite.fp01", config, params);
  }
  throw NumericalError(msg.str());
}

}  // namespace

FitResult fit_synthetic(const FitConfig& config, const FitHooks& hooks) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  const SyntheticScene scene(config);
  const std::vector<double> zero_gamma(static_cast<std::size_t>(config.exp_dims), 0.0);
  const std::vector<Vec3> neutral_landmarks = extract_landmarks(scene.expressed_mesh(zero_gamma), scene.basis());

  const FieldModel model(config.fields);
  FitResult result;
  result.config = config.fields;
  InitOptions init;
  init.occupancy_bias = config.occupancy_bias;
  result.params = model.init(config.seed, init);
  FieldParams& params = result.params;
  FieldParams grads = params.zeros_like();

  Adam opt(config.adam);
  const std::size_t g_template = opt.add_group("template", params.template_params.size(), config.lr_template);
  const std::size_t g_deform = opt.add_group("deform", params.deform_params.size(), config.lr_deform);
  const std::size_t g_manifold = opt.add_group("manifold", params.manifold_params.size(), config.lr_manifold);

  // Fixed probe batch for the reported initial and final losses.
  std::mt19937_64 probe_rng(config.seed ^ 0x70726f6265ULL);
  const Batch probe = draw_batch(config, scene, neutral_landmarks, probe_rng);
  // Non-finite values inside the pipeline (e.g. a NaN occupancy) surface
  // as NumericalError; they get the same dump as a non-finite loss.
  auto guarded = [&](int step, FieldParams* g, const Batch& batch) {
    StepResult r;
    try {
      r = step_losses(config, model, params, g, batch, neutral_landmarks);
    } catch (const NumericalError& e) {
      dump_state(hooks, step, LossReport{}, config.fields, params, e.what());
    }
    if (!r.finite) dump_state(hooks, step, r.report, config.fields, params);
    return r;
  };

  result.report.initial = guarded(0, nullptr, probe).report;

  std::mt19937_64 rng(config.seed ^ 0x747261696eULL);
  for (int step = 0; step < config.steps; ++step) {
    const Batch batch = draw_batch(config, scene, neutral_landmarks, rng);
    const StepResult r = guarded(step, &grads, batch);
    if (hooks.loss_log != nullptr && step % config.log_every == 0) write_loss_log(*hooks.loss_log, step, r.report);
    opt.advance();
    opt.step(g_template, params.template_params, grads.template_params);
    opt.step(g_deform, params.deform_params, grads.deform_params);
    opt.step(g_manifold, params.manifold_params, grads.manifold_params);
    std::fill(grads.template_params.begin(), grads.template_params.end(), 0.0);
    std::fill(grads.deform_params.begin(), grads.deform_params.end(), 0.0);
    std::fill(grads.manifold_params.begin(), grads.manifold_params.end(), 0.0);
    if (hooks.progress != nullptr && (step + 1) % 500 == 0) {
      *hooks.progress << "step " << step + 1 << " total " << fmt(r.report.total) << std::endl;
    }
  }

  result.report.final = guarded(config.steps, nullptr, probe).report;
  const EvalResult eval = evaluate_fit(config, params);
  FitReport& rep = result.report;
  rep.steps = config.steps;
  rep.heldout_psnr = eval.psnr;
  rep.deformation_error = eval.deformation_error;
  rep.deformation_abs_error = eval.deformation_abs_error;
  rep.true_deformation_mean = eval.true_deformation_mean;
  rep.neutral_residual = eval.neutral_residual;
  rep.finite = true;
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

// ---------------------------------------------------------------------------
// Evaluation

std::vector<LatentCodes> heldout_latents(const FitConfig& config) {
  std::mt19937_64 rng(config.heldout_seed);
  std::vector<std::vector<double>> gammas;
  for (int e = 0; e < config.eval_expressions; ++e) gammas.push_back(sample_latents(rng, config.fields.dims, config.prior).z_exp);
  std::vector<Vec3> poses;
  for (int p = 0; p < config.eval_poses; ++p) poses.push_back(sample_latents(rng, config.fields.dims, config.prior).pose);
  std::vector<LatentCodes> out;
  for (const auto& g : gammas) {
    for (const Vec3& pose : poses) {
      LatentCodes c;
      c.z_id.assign(static_cast<std::size_t>(config.fields.dims.id), 0.0);
      c.eps.assign(static_cast<std::size_t>(config.fields.dims.eps), 0.0);
      c.z_exp = g;
      c.pose = pose;
      out.push_back(c);
    }
  }
  return out;
}

EvalResult evaluate_fit(const FitConfig& config, const FieldParams& params) {
  config.validate();
  const SyntheticScene scene(config);
  const FieldModel model(config.fields);
  const FieldSet fs = model.bind(params);
  EvalResult out;

  double sse = 0.0;
  std::size_t count = 0;
  const std::vector<LatentCodes> views = heldout_latents(config);
  for (const LatentCodes& lat : views) {
    const Camera cam = make_camera(config, lat.pose);
    const ImageBuffer img = render_image(fs, lat, cam, render_options(config));
    const SceneSpec spec = scene.scene(lat.z_exp);
    const std::vector<Ray> rays = camera_rays(cam);
    for (std::size_t i = 0; i < rays.size(); ++i) {
      sse += squared_distance(img.rgb[i], oracle::analytic_render(spec, rays[i]).color);
    }
    count += 3 * rays.size();
  }
  const double mse = sse / static_cast<double>(count);
  out.psnr = mse > 0 ? -10.0 * std::log10(mse) : std::numeric_limits<double>::infinity();

  std::mt19937_64 rng(config.heldout_seed ^ 0x62616e64ULL);
  auto band_points = [&](const Mesh& mesh) {
    std::vector<Vec3> pts;
    for (const Vec3& v : mesh.vertices) {
      pts.push_back(v);
      pts.push_back(v + sample_ball(rng, config.eval_band));
      pts.push_back(v + sample_ball(rng, config.eval_band));
    }
    return pts;
  };
  const std::vector<double> zid(static_cast<std::size_t>(config.fields.dims.id), 0.0);
  double err = 0.0, mag = 0.0;
  std::size_t n = 0;
  for (int e = 0; e < config.eval_expressions; ++e) {
    const std::vector<double>& gamma = views[static_cast<std::size_t>(e * config.eval_poses)].z_exp;
    const std::vector<Vec3> pts = band_points(scene.expressed_mesh(gamma));
    const auto dx = fs.displacement<double>(pts, zid, gamma);
    const AffineWarp warp = scene.warp(gamma);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const Vec3 truth = warp.displacement(pts[i]);
      err += norm(dx[i] - truth);
      mag += norm(truth);
    }
    n += pts.size();
  }
  out.deformation_abs_error = err / static_cast<double>(n);
  out.true_deformation_mean = mag / static_cast<double>(n);
  out.deformation_error = mag > 0 ? err / mag : 0.0;

  const std::vector<double> zero(static_cast<std::size_t>(config.exp_dims), 0.0);
  const std::vector<Vec3> neutral = band_points(scene.expressed_mesh(zero));
  const auto dx0 = fs.displacement<double>(neutral, zid, zero);
  double res = 0.0;
  for (const Vec3& d : dx0) res += norm(d);
  out.neutral_residual = res / static_cast<double>(dx0.size());
  return out;
}

std::vector<std::vector<Vec3>> ring_depth_clouds(const FitConfig& config, const FieldParams& params,
                                                 std::span<const double> gamma, int cameras) {
  if (cameras < 1) throw InvalidArgument("need at least one camera");
  const FieldModel model(config.fields);
  const FieldSet fs = model.bind(params);
  LatentCodes lat;
  lat.z_id.assign(static_cast<std::size_t>(config.fields.dims.id), 0.0);
  lat.eps.assign(static_cast<std::size_t>(config.fields.dims.eps), 0.0);
  lat.z_exp.assign(gamma.begin(), gamma.end());
  std::vector<std::vector<Vec3>> clouds;
  for (int k = 0; k < cameras; ++k) {
    const double u = cameras == 1 ? 0.5 : static_cast<double>(k) / (cameras - 1);
    const double yaw = config.prior.yaw_range * (2.0 * u - 1.0);
    const double pitch = 0.5 * config.prior.pitch_range * std::sin(2.0 * std::numbers::pi * u);
    lat.pose = {pitch, yaw, config.prior.radius};
    const Camera cam = make_camera(config, lat.pose);
    const ImageBuffer img = render_image(fs, lat, cam, render_options(config));
    clouds.push_back(depth_pointcloud(img, cam));
  }
  return clouds;
}

void FitReport::write(std::ostream& out) const {
  out << "steps " << steps << '\n';
  for (const auto& [name, v] : initial.terms) out << "initial." << name << ' ' << fmt(v) << '\n';
  out << "initial.total " << fmt(initial.total) << '\n';
  for (const auto& [name, v] : final.terms) out << "final." << name << ' ' << fmt(v) << '\n';
  out << "final.total " << fmt(final.total) << '\n';
  out << "heldout_psnr " << fmt(heldout_psnr) << '\n';
  out << "deformation_error " << fmt(deformation_error) << '\n';
  out << "deformation_abs_error " << fmt(deformation_abs_error) << '\n';
  out << "true_deformation_mean " << fmt(true_deformation_mean) << '\n';
  out << "neutral_residual " << fmt(neutral_residual) << '\n';
  out << "finite " << (finite ? "true" : "false") << '\n';
  out << "seconds " << fmt(seconds) << '\n';
}

SurfaceResidual depth_cloud_residual(const FieldModel& model, const FieldParams& params, const LatentCodes& latents,
                                     std::span<const std::vector<Vec3>> clouds) {
  std::vector<Vec3> pts;
  for (const auto& c : clouds) pts.insert(pts.end(), c.begin(), c.end());
  SurfaceResidual out;
  out.points = pts.size();
  if (pts.empty()) return out;
  const FieldSet fs = model.bind(params);
  const auto dx = fs.displacement<double>(std::span<const Vec3>(pts), std::span<const double>(latents.z_id),
                                          std::span<const double>(latents.z_exp));
  for (std::size_t i = 0; i < pts.size(); ++i) pts[i] = pts[i] + dx[i];
  const std::vector<double> s = fs.manifold->evaluate<double>(fs.manifold_params, std::span<const Vec3>(pts));
  std::vector<double> sorted = s;
  const auto mid = sorted.begin() + static_cast<std::ptrdiff_t>(sorted.size() / 2);
  std::nth_element(sorted.begin(), mid, sorted.end());
  out.level = *mid;
  double sum = 0.0;
  for (double v : s) {
    const double r = std::abs(v - out.level);
    sum += r;
    out.max = std::max(out.max, r);
  }
  out.mean = sum / static_cast<double>(s.size());
  return out;
}

}  // namespace deforma
