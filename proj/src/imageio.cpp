#include "deforma/imageio.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace deforma {

namespace {

void write_bytes(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::string read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void check_same_size(const ImageBuffer& a, const ImageBuffer& b) {
  if (a.width != b.width || a.height != b.height || a.rgb.size() != b.rgb.size()) {
    throw InvalidArgument("images differ in size");
  }
  if (a.rgb.empty()) throw InvalidArgument("empty image");
}

}  // namespace

std::string encode_ppm(const ImageBuffer& image) {
  std::string out = "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  out.reserve(out.size() + image.rgb.size() * 3);
  for (const Vec3& c : image.rgb) {
    for (int k = 0; k < 3; ++k) {
      const double v = std::clamp(c[k], 0.0, 1.0);
      out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
    }
  }
  return out;
}

void write_ppm(const std::filesystem::path& path, const ImageBuffer& image) { write_bytes(path, encode_ppm(image)); }

ImageBuffer read_ppm(const std::filesystem::path& path) {
  const std::string bytes = read_bytes(path);
  std::istringstream in(bytes);
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  if (!(in >> magic >> w >> h >> maxval) || magic != "P6" || maxval != 255 || w < 1 || h < 1) {
    throw std::runtime_error(path.string() + ": not an 8-bit binary PPM");
  }
  in.get();
  const auto offset = static_cast<std::size_t>(in.tellg());
  const std::size_t n = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
  if (bytes.size() < offset + 3 * n) throw std::runtime_error(path.string() + ": truncated PPM");
  ImageBuffer img;
  img.width = w;
  img.height = h;
  img.rgb.resize(n);
  img.depth.assign(n, std::nan(""));
  for (std::size_t i = 0; i < n; ++i) {
    for (int k = 0; k < 3; ++k) {
      img.rgb[i][k] = static_cast<unsigned char>(bytes[offset + 3 * i + static_cast<std::size_t>(k)]) / 255.0;
    }
  }
  return img;
}

std::string encode_depth(const ImageBuffer& image) {
  std::string out = "DP01 " + std::to_string(image.width) + " " + std::to_string(image.height) + "\n";
  for (double d : image.depth) {
    const float f = static_cast<float>(d);
    unsigned char b[4];
    std::memcpy(b, &f, 4);
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + 4);
    out.append(reinterpret_cast<const char*>(b), 4);
  }
  return out;
}

void write_depth(const std::filesystem::path& path, const ImageBuffer& image) {
  write_bytes(path, encode_depth(image));
}

std::vector<float> read_depth(const std::filesystem::path& path, int& width, int& height) {
  const std::string bytes = read_bytes(path);
  const std::size_t eol = bytes.find('\n');
  std::istringstream header(bytes.substr(0, eol == std::string::npos ? 0 : eol));
  std::string magic;
  if (!(header >> magic >> width >> height) || magic != "DP01" || width < 1 || height < 1) {
    throw std::runtime_error(path.string() + ": missing DP01 header");
  }
  const std::size_t n = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  if (bytes.size() != eol + 1 + 4 * n) throw std::runtime_error(path.string() + ": depth payload size mismatch");
  std::vector<float> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    unsigned char b[4];
    std::memcpy(b, bytes.data() + eol + 1 + 4 * i, 4);
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + 4);
    std::memcpy(&out[i], b, 4);
  }
  return out;
}

double psnr(const ImageBuffer& a, const ImageBuffer& b) {
  check_same_size(a, b);
  double sse = 0.0;
  for (std::size_t i = 0; i < a.rgb.size(); ++i) sse += squared_distance(a.rgb[i], b.rgb[i]);
  const double mse = sse / (3.0 * static_cast<double>(a.rgb.size()));
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return -10.0 * std::log10(mse);
}

double mean_absolute_error(const ImageBuffer& a, const ImageBuffer& b) {
  check_same_size(a, b);
  double sum = 0.0;
  for (std::size_t i = 0; i < a.rgb.size(); ++i) {
    for (int k = 0; k < 3; ++k) sum += std::abs(a.rgb[i][k] - b.rgb[i][k]);
  }
  return sum / (3.0 * static_cast<double>(a.rgb.size()));
}

}  // namespace deforma
