#pragma once

// Reverse-mode gradients of every loss and of the pixel pipeline checked
// against central finite differences.

#include <cstdint>
#include <functional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace deforma {

struct GradCheckOptions {
  std::uint64_t seed = 3;
  int params = 100;         // coordinates checked per case
  double step = 1e-5;
  double tolerance = 1e-4;  // on |ad - fd| / max(|ad|, |fd|, abs_floor)
  double abs_floor = 1e-6;
};

struct GradCheckCase {
  std::string name;
  int checked = 0;
  int skipped = 0;  // coordinates whose perturbation changed a discrete choice
  double max_error = 0.0;
  std::vector<std::string> failures;

  bool passed() const { return failures.empty() && checked > 0; }
};

/// A scalar function of a flat vector with its recorded gradient and an
/// optional signature of the discrete choices (crossing sets, nearest
/// neighbours) made at a point. Finite differences are only meaningful
/// where the signature does not change.
struct GradCheckProblem {
  std::string name;
  std::vector<double> point;
  std::function<double(std::span<const double>)> value;
  std::function<std::vector<double>(std::span<const double>)> gradient;
  std::function<std::vector<long>(std::span<const double>)> signature;
};

GradCheckCase check_gradient(const GradCheckProblem& problem, const GradCheckOptions& options);

/// The full suite: pixel colour and depth through the field networks
/// (both depth weightings, with and without bracket refinement), crossing parameters, chamfer, landmark,
/// imitation, minimal-deformation, smoothness and adversarial losses.
std::vector<GradCheckProblem> gradcheck_problems(std::uint64_t seed);
std::vector<GradCheckCase> run_gradcheck(const GradCheckOptions& options, std::ostream* progress = nullptr);

}  // namespace deforma
