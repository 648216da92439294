#include "deforma/losses.hpp"

#include <cmath>
#include <cstdio>

namespace deforma {

double deformation_imitation(const Vec3& dx, const Vec3& dx_ref) { return squared_distance(dx, dx_ref); }

double deformation_reg(const Vec3& dx) { return squared_norm(dx); }

Vec3 sample_ball(std::mt19937_64& rng, double radius) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (;;) {
    const Vec3 p(u(rng), u(rng), u(rng));
    if (squared_norm(p) <= 1.0) return radius * p;
  }
}

double smoothness_loss(const std::function<Vec3(const Vec3&)>& deform, const Vec3& x, double xi_scale,
                       std::mt19937_64& rng) {
  if (!(xi_scale > 0)) throw InvalidArgument("smoothness perturbation radius must be positive");
  const Vec3 xi = sample_ball(rng, xi_scale);
  return squared_distance(deform(x), deform(x + xi));
}

void LossWeights::validate() const {
  for (double w : {photo, chamfer, landmark, imitation, reg, smooth, adversarial}) {
    if (!(w >= 0) || !std::isfinite(w)) throw InvalidArgument("loss weights must be finite and non-negative");
  }
  if (!(use_photo || use_chamfer || use_landmark || use_imitation || use_reg || use_smooth || use_adversarial)) {
    throw InvalidArgument("at least one loss must be enabled");
  }
}

std::optional<double> LossReport::get(const std::string& name) const {
  for (const auto& [n, v] : terms) {
    if (n == name) return v;
  }
  return std::nullopt;
}

LossReport total_loss(const LossTerms<double>& terms, const LossWeights& weights) {
  LossReport report;
  report.total = weighted_total(terms, weights);
  detail::for_each_term(terms, weights, [&](const char* name, const std::optional<double>& v, bool on, double) {
    if (on) report.terms.emplace_back(name, *v);
  });
  return report;
}

void write_loss_log(std::ostream& out, long step, const LossReport& report) {
  char buf[64];
  for (const auto& [name, value] : report.terms) {
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    out << step << ", " << name << ", " << buf << '\n';
  }
  std::snprintf(buf, sizeof(buf), "%.17g", report.total);
  out << step << ", total, " << buf << '\n';
}

}  // namespace deforma
