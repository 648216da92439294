#include "deforma/renderer.hpp"

#include <algorithm>
#include <atomic>
#include <numbers>
#include <thread>

namespace deforma {

void Camera::validate() const {
  if (!is_finite(pose)) throw InvalidArgument("camera pose is not finite");
  if (!(fov_y > 0 && fov_y < std::numbers::pi)) throw InvalidArgument("camera fov_y must lie in (0, pi)");
  if (width < 1 || height < 1) throw InvalidArgument("camera needs a positive image size");
  if (!(pose.z > 0)) throw InvalidArgument("camera radius must be positive");
  if (!(scene_bound > 0)) throw InvalidArgument("camera scene bound must be positive");
}

Vec3 Camera::position() const {
  const double pitch = pose.x;
  const double yaw = pose.y;
  const double r = pose.z;
  return {r * std::cos(pitch) * std::sin(yaw), r * std::sin(pitch), r * std::cos(pitch) * std::cos(yaw)};
}

double Camera::near() const { return std::max(1e-3, pose.z - scene_bound); }
double Camera::far() const { return pose.z + scene_bound; }

std::vector<Ray> camera_rays(const Camera& camera) {
  camera.validate();
  const Vec3 eye = camera.position();
  const Vec3 forward = normalized(-eye);
  Vec3 side = cross(forward, Vec3{0.0, 1.0, 0.0});
  if (norm(side) < 1e-9) side = cross(forward, Vec3{0.0, 0.0, 1.0});
  const Vec3 right = normalized(side);
  const Vec3 up = cross(right, forward);
  const double half = std::tan(camera.fov_y / 2.0);
  const double aspect = static_cast<double>(camera.width) / camera.height;

  std::vector<Ray> rays;
  rays.reserve(static_cast<std::size_t>(camera.width) * static_cast<std::size_t>(camera.height));
  for (int j = 0; j < camera.height; ++j) {
    const double v = (1.0 - 2.0 * (j + 0.5) / camera.height) * half;
    for (int i = 0; i < camera.width; ++i) {
      const double u = (2.0 * (i + 0.5) / camera.width - 1.0) * half * aspect;
      Ray ray;
      ray.origin = eye;
      ray.direction = normalized(forward + u * right + v * up);
      ray.near = camera.near();
      ray.far = camera.far();
      rays.push_back(ray);
    }
  }
  return rays;
}

Composite composite(std::span<const RadianceSample> samples, const Vec3& background) {
  return composite<double>(samples, background);
}

Pixel render_pixel(const FieldSet& fields, const LatentCodes& latents, const Ray& ray, const RenderOptions& options) {
  auto px = render_rays<double>(fields, latents.z_id, latents.z_exp, latents.eps, std::span<const Ray>(&ray, 1),
                                options);
  return std::move(px.front());
}

ImageBuffer render_image(const FieldSet& fields, const LatentCodes& latents, const Camera& camera,
                         const RenderOptions& options) {
  const std::vector<Ray> rays = camera_rays(camera);
  ImageBuffer image;
  image.width = camera.width;
  image.height = camera.height;
  image.rgb.resize(rays.size());
  image.depth.assign(rays.size(), std::numeric_limits<double>::quiet_NaN());
  const auto width = static_cast<std::size_t>(camera.width);

  auto render_row = [&](int row) {
    const std::span<const Ray> batch(rays.data() + static_cast<std::size_t>(row) * width, width);
    const auto pixels = render_rays<double>(fields, latents.z_id, latents.z_exp, latents.eps, batch, options);
    for (std::size_t i = 0; i < width; ++i) {
      const std::size_t k = static_cast<std::size_t>(row) * width + i;
      image.rgb[k] = pixels[i].color;
      if (pixels[i].has_depth) image.depth[k] = pixels[i].depth;
    }
  };

  const int threads = std::max(1, std::min(options.threads, camera.height));
  if (threads == 1) {
    for (int row = 0; row < camera.height; ++row) render_row(row);
    return image;
  }
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (int row = next++; row < camera.height && !failed; row = next++) {
        try {
          render_row(row);
        } catch (...) {
          if (!failed.exchange(true)) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
  return image;
}

std::vector<Vec3> depth_pointcloud(const ImageBuffer& image, const Camera& camera) {
  if (image.width != camera.width || image.height != camera.height) {
    throw InvalidArgument("image size does not match the camera");
  }
  const std::vector<Ray> rays = camera_rays(camera);
  std::vector<Vec3> cloud;
  for (std::size_t k = 0; k < rays.size(); ++k) {
    if (ImageBuffer::present(image.depth[k])) cloud.push_back(rays[k].at(image.depth[k]));
  }
  return cloud;
}

}  // namespace deforma
