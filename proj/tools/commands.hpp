#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "deforma/common.hpp"

namespace deforma::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kNumerical = 2 };

/// Bad flag values or unreadable inputs; reported with exit code 1.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ViewFlags {
  std::filesystem::path ckpt;
  std::vector<double> pose{0.0, 0.0, 3.0};
  std::string size = "64x64";
  std::optional<std::uint64_t> z_id_seed;
  double z_id_sigma = 1.0;
  std::string z_exp;  // inline "a,b,c" or a file of numbers
  int samples = 64;
  double fov = 0.8;
  bool depth = false;
  int threads = 1;
};

struct RenderFlags {
  ViewFlags view;
  std::filesystem::path out;  // prefix; writes <out>.ppm and <out>.depth
};

struct AnimateFlags {
  ViewFlags view;
  std::filesystem::path track;
  std::filesystem::path out;  // directory of frame_NNNN files
};

struct GradcheckFlags {
  std::optional<std::uint64_t> seed;
  int params = 100;
  double step = 1e-5;
  double tolerance = 1e-4;
};

struct FitFlags {
  std::filesystem::path config;
  std::vector<std::string> set;  // key=value overrides
  std::optional<int> steps;
  std::filesystem::path out;
  int threads = 1;
};

struct BasisFlags {
  std::optional<std::uint64_t> seed;
  int vertices = 512;
  int id_dims = 8;
  int exp_dims = 4;
  int landmarks = 16;
  std::filesystem::path out;
};

struct InitFlags {
  std::optional<std::uint64_t> seed;
  bool zero_output = false;
  std::string manifold = "learned";
  std::filesystem::path out;
};

/// The flag when given, else DEFORMA_SEED when set, else nothing.
std::optional<std::uint64_t> seed_or_env(const std::optional<std::uint64_t>& flag);
std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag, std::uint64_t fallback);

/// "WxH" to (width, height).
std::pair<int, int> parse_size(const std::string& text);

/// Numbers separated by commas or whitespace, read from `text` itself or,
/// when `text` names an existing file, from that file.
std::vector<double> parse_vector(const std::string& text);

int run_render(const RenderFlags& flags);
int run_animate(const AnimateFlags& flags);
int run_gradcheck(const GradcheckFlags& flags);
int run_fit(const FitFlags& flags);
int run_make_basis(const BasisFlags& flags);
int run_init(const InitFlags& flags);

}  // namespace deforma::cli
