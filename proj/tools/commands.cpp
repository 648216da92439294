#include "commands.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "deforma/checkpoint.hpp"
#include "deforma/facemodel.hpp"
#include "deforma/fitkit.hpp"
#include "deforma/gradcheck.hpp"
#include "deforma/imageio.hpp"
#include "deforma/renderer.hpp"

namespace deforma::cli {

namespace fs = std::filesystem;

namespace {

std::uint64_t parse_seed(const std::string& text, const char* what) {
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(text, &used);
    if (used != text.size() || text.starts_with('-')) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw UsageError(std::string("invalid ") + what + ": '" + text + "'");
  }
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void ensure_parent(const fs::path& file) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
}

struct LoadedModel {
  FieldModel model;
  FieldParams params;
};

LoadedModel load_model(const fs::path& ckpt) {
  if (ckpt.empty()) throw UsageError("--ckpt is required");
  FieldConfig config;
  FieldParams params;
  load_checkpoint(ckpt, config, params);
  LoadedModel out{FieldModel(config), std::move(params)};
  out.model.check(out.params);
  return out;
}

LatentCodes base_latents(const ViewFlags& v, const LatentDims& dims) {
  LatentCodes z;
  z.z_id.assign(static_cast<std::size_t>(dims.id), 0.0);
  z.z_exp.assign(static_cast<std::size_t>(dims.exp), 0.0);
  z.eps.assign(static_cast<std::size_t>(dims.eps), 0.0);
  if (const auto seed = seed_or_env(v.z_id_seed)) {
    std::mt19937_64 rng(*seed);
    std::normal_distribution<double> g(0.0, 1.0);
    for (double& x : z.z_id) x = g(rng) * v.z_id_sigma;
  }
  if (!v.z_exp.empty()) {
    z.z_exp = parse_vector(v.z_exp);
    if (z.z_exp.size() != static_cast<std::size_t>(dims.exp)) {
      throw UsageError("--z-exp has " + std::to_string(z.z_exp.size()) + " values, the checkpoint expects " +
                       std::to_string(dims.exp));
    }
  }
  return z;
}

Camera make_camera(const ViewFlags& v, const Vec3& pose) {
  Camera cam;
  const auto [w, h] = parse_size(v.size);
  cam.width = w;
  cam.height = h;
  cam.pose = pose;
  cam.fov_y = v.fov;
  try {
    cam.validate();
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
  return cam;
}

RenderOptions render_options(const ViewFlags& v) {
  if (v.samples < 2) throw UsageError("--samples must be at least 2");
  if (v.threads < 1) throw UsageError("--threads must be positive");
  RenderOptions o;
  o.samples = v.samples;
  o.threads = v.threads;
  return o;
}

void write_frame(const fs::path& prefix, const ImageBuffer& image, bool depth) {
  ensure_parent(prefix);
  write_ppm(fs::path(prefix.string() + ".ppm"), image);
  if (depth) write_depth(fs::path(prefix.string() + ".depth"), image);
}

std::vector<LatentCodes> read_track(const fs::path& path, const LatentCodes& base) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read track file " + path.string());
  std::vector<LatentCodes> frames;
  std::string line;
  int lineno = 0;
  const std::size_t want = 3 + base.z_exp.size();
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::vector<double> row;
    try {
      row = parse_vector(line);
    } catch (const UsageError& e) {
      throw UsageError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    if (row.size() != want) {
      throw UsageError(path.string() + ":" + std::to_string(lineno) + ": expected pitch yaw radius and " +
                       std::to_string(base.z_exp.size()) + " expression values, got " + std::to_string(row.size()) +
                       " numbers");
    }
    LatentCodes z = base;
    z.pose = {row[0], row[1], row[2]};
    z.z_exp.assign(row.begin() + 3, row.end());
    frames.push_back(std::move(z));
  }
  if (frames.empty()) throw UsageError("track file " + path.string() + " has no frames");
  return frames;
}

}  // namespace

std::optional<std::uint64_t> seed_or_env(const std::optional<std::uint64_t>& flag) {
  if (flag) return flag;
  if (const char* env = std::getenv("DEFORMA_SEED"); env != nullptr && *env != '\0') {
    return parse_seed(env, "DEFORMA_SEED");
  }
  return std::nullopt;
}

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag, std::uint64_t fallback) {
  return seed_or_env(flag).value_or(fallback);
}

std::pair<int, int> parse_size(const std::string& text) {
  int w = 0, h = 0;
  char x = 0, extra = 0;
  if (std::sscanf(text.c_str(), "%d%c%d%c", &w, &x, &h, &extra) != 3 || (x != 'x' && x != 'X') || w < 1 ||
      h < 1 || w > 8192 || h > 8192) {
    throw UsageError("--size must look like 64x64, got '" + text + "'");
  }
  return {w, h};
}

std::vector<double> parse_vector(const std::string& text) {
  std::string body = text;
  std::error_code ec;
  if (text.find_first_of(",") == std::string::npos && fs::is_regular_file(text, ec)) body = slurp(text);
  for (char& c : body) {
    if (c == ',') c = ' ';
  }
  std::istringstream in(body);
  std::vector<double> out;
  std::string token;
  while (in >> token) {
    char* end = nullptr;
    const double v = std::strtod(token.c_str(), &end);
    if (end != token.c_str() + token.size() || !std::isfinite(v)) throw UsageError("not a number: '" + token + "'");
    out.push_back(v);
  }
  return out;
}

int run_render(const RenderFlags& flags) {
  if (flags.out.empty()) throw UsageError("--out is required");
  if (flags.view.pose.size() != 3) throw UsageError("--pose takes pitch yaw radius");
  const LoadedModel m = load_model(flags.view.ckpt);
  const LatentCodes z = base_latents(flags.view, m.model.config().dims);
  const Camera cam = make_camera(flags.view, {flags.view.pose[0], flags.view.pose[1], flags.view.pose[2]});
  const ImageBuffer image = render_image(m.model.bind(m.params), z, cam, render_options(flags.view));
  write_frame(flags.out, image, flags.view.depth);
  return kOk;
}

int run_animate(const AnimateFlags& flags) {
  if (flags.out.empty()) throw UsageError("--out is required");
  const LoadedModel m = load_model(flags.view.ckpt);
  const std::vector<LatentCodes> frames = read_track(flags.track, base_latents(flags.view, m.model.config().dims));
  const FieldSet fields = m.model.bind(m.params);
  const RenderOptions opts = render_options(flags.view);
  fs::create_directories(flags.out);
  std::ofstream log(flags.out / "animate.log");

  std::vector<std::vector<Vec3>> clouds;
  for (std::size_t f = 0; f < frames.size(); ++f) {
    const LatentCodes& z = frames[f];
    const Camera cam = make_camera(flags.view, z.pose);
    const ImageBuffer image = render_image(fields, z, cam, opts);
    char name[32];
    std::snprintf(name, sizeof name, "frame_%04zu", f);
    write_frame(flags.out / name, image, flags.view.depth);

    // Mean displacement magnitude over the frame's visible surface.
    const std::vector<Vec3> cloud = depth_pointcloud(image, cam);
    const std::vector<Vec3> dx =
        fields.displacement<double>(std::span<const Vec3>(cloud), std::span<const double>(z.z_id),
                                    std::span<const double>(z.z_exp));
    double sum = 0.0;
    for (const Vec3& d : dx) sum += norm(d);
    char line[200];
    std::snprintf(line, sizeof line, "%s pitch %.6g yaw %.6g radius %.6g depth_points %zu deformation_mean %.9g\n",
                  name, z.pose.x, z.pose.y, z.pose.z, cloud.size(), cloud.empty() ? 0.0 : sum / double(cloud.size()));
    std::cout << line;
    log << line;
    clouds.push_back(cloud);
  }

  bool constant_expression = frames.size() > 1;
  for (const LatentCodes& z : frames) constant_expression = constant_expression && z.z_exp == frames[0].z_exp;
  if (constant_expression) {
    const SurfaceResidual r = depth_cloud_residual(m.model, m.params, frames[0], clouds);
    char line[160];
    std::snprintf(line, sizeof line, "surface_residual mean %.9g max %.9g points %zu\n", r.mean, r.max, r.points);
    std::cout << line;
    log << line;
  }
  return kOk;
}

int run_gradcheck(const GradcheckFlags& flags) {
  GradCheckOptions o;
  o.seed = resolve_seed(flags.seed, 3);
  o.params = flags.params;
  o.step = flags.step;
  o.tolerance = flags.tolerance;
  if (o.params < 1 || !(o.step > 0) || !(o.tolerance > 0)) {
    throw UsageError("--params, --step and --tolerance must be positive");
  }
  bool ok = true;
  for (const GradCheckCase& c : deforma::run_gradcheck(o, &std::cout)) ok = ok && c.passed();
  std::cout << (ok ? "all gradient checks passed\n" : "gradient check FAILED\n");
  return ok ? kOk : kNumerical;
}

int run_fit(const FitFlags& flags) {
  if (flags.out.empty()) throw UsageError("--out is required");
  FitConfig config;
  try {
    if (const auto seed = seed_or_env(std::nullopt)) config.seed = *seed;
    if (!flags.config.empty()) config = read_fit_config(flags.config, config);
    for (const std::string& kv : flags.set) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
      set_fit_option(config, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (flags.steps) config.steps = *flags.steps;
    config.threads = flags.threads;
    config.validate();
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }

  fs::create_directories(flags.out);
  std::ofstream(flags.out / "config.txt") << describe_fit_config(config);
  std::ofstream loss_log(flags.out / "loss_log.txt");
  FitHooks hooks;
  hooks.loss_log = &loss_log;
  hooks.progress = &std::cerr;
  hooks.dump_dir = flags.out;
  const FitResult result = fit_synthetic(config, hooks);
  std::ofstream report(flags.out / "report.txt");
  result.report.write(report);
  result.report.write(std::cout);
  save_checkpoint(flags.out / "checkpoint.fp01", result.config, result.params);
  return kOk;
}

int run_make_basis(const BasisFlags& flags) {
  if (flags.out.empty()) throw UsageError("--out is required");
  FaceBasis basis;
  try {
    basis = synth_basis(resolve_seed(flags.seed, 0), flags.vertices, flags.id_dims, flags.exp_dims, flags.landmarks);
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
  ensure_parent(flags.out);
  save_basis(basis, flags.out);
  return kOk;
}

int run_init(const InitFlags& flags) {
  if (flags.out.empty()) throw UsageError("--out is required");
  FieldConfig config = FitConfig::default_fields();
  if (flags.manifold == "analytic") {
    config.manifold.mode = ManifoldMode::AnalyticRadial;
  } else if (flags.manifold != "learned") {
    throw UsageError("--manifold must be learned or analytic");
  }
  const FieldModel model(config);
  InitOptions init;
  init.zero_template_output = flags.zero_output;
  const FieldParams params = model.init(resolve_seed(flags.seed, 1), init);
  ensure_parent(flags.out);
  save_checkpoint(flags.out, config, params);
  return kOk;
}

}  // namespace deforma::cli
