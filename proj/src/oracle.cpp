#include "deforma/oracle.hpp"

#include <cmath>
#include <limits>

namespace deforma::oracle {

std::optional<std::pair<double, double>> ray_sphere(const Vec3& origin, const Vec3& direction, const Vec3& center,
                                                    double radius) {
  const double ox = origin.x - center.x, oy = origin.y - center.y, oz = origin.z - center.z;
  const double a = direction.x * direction.x + direction.y * direction.y + direction.z * direction.z;
  const double b = 2.0 * (ox * direction.x + oy * direction.y + oz * direction.z);
  const double c = ox * ox + oy * oy + oz * oz - radius * radius;
  const double disc = b * b - 4.0 * a * c;
  if (disc < 0) return std::nullopt;
  const double s = std::sqrt(disc);
  return std::make_pair((-b - s) / (2.0 * a), (-b + s) / (2.0 * a));
}

Hit analytic_render(const SceneSpec& scene, const Ray& ray) {
  // Template point of o + t d is M (o + t d) + b with M = I + A.
  const auto& A = scene.warp.matrix;
  auto apply_m = [&](const Vec3& v) {
    return Vec3{v.x + A[0] * v.x + A[1] * v.y + A[2] * v.z, v.y + A[3] * v.x + A[4] * v.y + A[5] * v.z,
                v.z + A[6] * v.x + A[7] * v.y + A[8] * v.z};
  };
  const Vec3 mo = apply_m(ray.origin);
  const Vec3 o_t{mo.x + scene.warp.offset.x, mo.y + scene.warp.offset.y, mo.z + scene.warp.offset.z};
  const Vec3 d_t = apply_m(ray.direction);

  double best = std::numeric_limits<double>::infinity();
  const AnalyticSphere* hit = nullptr;
  for (const AnalyticSphere& s : scene.spheres) {
    const auto roots = ray_sphere(o_t, d_t, s.center, s.radius);
    if (!roots) continue;
    for (double t : {roots->first, roots->second}) {
      if (t >= ray.near && t <= ray.far && t < best) {
        best = t;
        hit = &s;
        break;
      }
    }
  }
  if (hit == nullptr) return {scene.background, std::nullopt};
  const Vec3 p{o_t.x + best * d_t.x, o_t.y + best * d_t.y, o_t.z + best * d_t.z};
  return {paint_color<double>(hit->paint, p), best};
}

std::vector<double> fd_gradient(const std::function<double(std::span<const double>)>& f,
                                std::span<const double> point, double step) {
  if (!(step > 0)) throw InvalidArgument("finite-difference step must be positive");
  std::vector<double> x(point.begin(), point.end());
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double x0 = x[i];
    x[i] = x0 + step;
    const double fp = f(x);
    x[i] = x0 - step;
    const double fm = f(x);
    x[i] = x0;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw NumericalError("non-finite function value at coordinate " + std::to_string(i));
    }
    g[i] = (fp - fm) / (2.0 * step);
  }
  return g;
}

double NnResult::distance() const { return std::sqrt(squared_distance); }

NnResult exhaustive_nn(const Vec3& query, std::span<const Vec3> points) {
  if (points.empty()) throw InvalidArgument("nearest neighbour of an empty set");
  NnResult best{0, std::numeric_limits<double>::infinity()};
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double dx = query.x - points[i].x;
    const double dy = query.y - points[i].y;
    const double dz = query.z - points[i].z;
    const double d2 = dx * dx + dy * dy + dz * dz;
    if (d2 < best.squared_distance) best = {i, d2};
  }
  return best;
}

double chamfer_exhaustive(std::span<const Vec3> source, std::span<const Vec3> target) {
  if (source.empty() || target.empty()) throw InvalidArgument("chamfer distance needs non-empty point sets");
  double sum = 0.0;
  for (const Vec3& x : source) sum += exhaustive_nn(x, target).squared_distance;
  return sum / static_cast<double>(source.size());
}

std::vector<Vec3> naive_reconstruct(const FaceBasis& basis, std::span<const double> beta,
                                    std::span<const double> gamma) {
  const std::size_t n = basis.mean_shape.size();
  const std::size_t rows = 3 * n;
  std::vector<Vec3> out(n);
  for (std::size_t r = 0; r < rows; ++r) {
    double id = 0.0;
    for (std::size_t c = 0; c < beta.size(); ++c) id += basis.id_basis[c * rows + r] * beta[c];
    double ex = 0.0;
    for (std::size_t c = 0; c < gamma.size(); ++c) ex += basis.exp_basis[c * rows + r] * gamma[c];
    out[r / 3][static_cast<int>(r % 3)] = basis.mean_shape[r / 3][static_cast<int>(r % 3)] + id + ex;
  }
  return out;
}

namespace {

double act(double v) { return v / (1.0 + std::exp(-v)); }
double squash(double v) { return 1.0 / (1.0 + std::exp(-v)); }

// Dense layer reading W (rows x cols, row-major) then b from params[pos...].
std::vector<double> dense(std::span<const double> params, std::size_t& pos, const std::vector<double>& in,
                          int outputs, bool activate) {
  const std::size_t cols = in.size();
  std::vector<double> out(static_cast<std::size_t>(outputs));
  const std::size_t bias = pos + static_cast<std::size_t>(outputs) * cols;
  for (std::size_t o = 0; o < out.size(); ++o) {
    double s = 0.0;
    for (std::size_t i = 0; i < cols; ++i) s += params[pos + o * cols + i] * in[i];
    s += params[bias + o];
    out[o] = activate ? act(s) : s;
  }
  pos = bias + out.size();
  return out;
}

void encode(const Vec3& x, int frequencies, std::vector<double>& out) {
  out.push_back(x.x);
  out.push_back(x.y);
  out.push_back(x.z);
  for (int k = 0; k < frequencies; ++k) {
    const double f = std::ldexp(3.14159265358979323846, k);
    out.push_back(std::sin(f * x.x));
    out.push_back(std::sin(f * x.y));
    out.push_back(std::sin(f * x.z));
    out.push_back(std::cos(f * x.x));
    out.push_back(std::cos(f * x.y));
    out.push_back(std::cos(f * x.z));
  }
}

void check_consumed(std::size_t pos, std::span<const double> params) {
  if (pos != params.size()) throw InvalidArgument("parameter vector does not match the architecture");
}

}  // namespace

RadianceSample naive_template(const TemplateConfig& config, const LatentDims& dims, std::span<const double> params,
                              const Vec3& x, std::span<const double> z_id, std::span<const double> eps,
                              const Vec3& d) {
  (void)dims;
  std::vector<double> h;
  encode(x, config.pos_frequencies, h);
  h.insert(h.end(), z_id.begin(), z_id.end());
  h.insert(h.end(), eps.begin(), eps.end());
  std::size_t pos = 0;
  for (int l = 0; l < config.layers; ++l) h = dense(params, pos, h, config.hidden, true);
  const double occ = dense(params, pos, h, 1, false)[0];
  std::vector<double> c = h;
  encode(d, config.dir_frequencies, c);
  c = dense(params, pos, c, config.color_hidden, true);
  c = dense(params, pos, c, 3, false);
  check_consumed(pos, params);
  return {{squash(c[0]), squash(c[1]), squash(c[2])}, squash(occ)};
}

Vec3 naive_deform(const DeformConfig& config, const LatentDims& dims, std::span<const double> params, const Vec3& x,
                  std::span<const double> z_id, std::span<const double> z_exp) {
  (void)dims;
  std::vector<double> h;
  encode(x, config.pos_frequencies, h);
  h.insert(h.end(), z_id.begin(), z_id.end());
  h.insert(h.end(), z_exp.begin(), z_exp.end());
  std::size_t pos = 0;
  for (int l = 0; l < config.layers; ++l) h = dense(params, pos, h, config.hidden, true);
  h = dense(params, pos, h, 3, false);
  check_consumed(pos, params);
  return {config.max_deform * std::tanh(h[0]), config.max_deform * std::tanh(h[1]),
          config.max_deform * std::tanh(h[2])};
}

double naive_manifold(const ManifoldConfig& config, std::span<const double> params, const Vec3& x) {
  const double dx = x.x - config.center.x, dy = x.y - config.center.y, dz = x.z - config.center.z;
  double s = std::sqrt(dx * dx + dy * dy + dz * dz);
  if (config.mode == ManifoldMode::Learned) {
    std::vector<double> h;
    encode(x, config.pos_frequencies, h);
    std::size_t pos = 0;
    for (int l = 0; l < config.layers; ++l) h = dense(params, pos, h, config.hidden, true);
    s += dense(params, pos, h, 1, false)[0];
    check_consumed(pos, params);
  }
  return s;
}

}  // namespace deforma::oracle
