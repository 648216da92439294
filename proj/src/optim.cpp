#include "deforma/optim.hpp"

#include <cmath>

#include "deforma/common.hpp"

namespace deforma {

std::size_t Adam::add_group(std::string name, std::size_t size, double lr) {
  if (!(lr > 0) || !std::isfinite(lr)) throw InvalidArgument("learning rate of group '" + name + "' must be positive");
  Group g;
  g.name = std::move(name);
  g.lr = lr;
  g.m.assign(size, 0.0);
  g.v.assign(size, 0.0);
  groups_.push_back(std::move(g));
  return groups_.size() - 1;
}

Adam::Group& Adam::group(std::size_t g) {
  if (g >= groups_.size()) throw InvalidArgument("no optimizer group " + std::to_string(g));
  return groups_[g];
}

void Adam::step(std::size_t g, std::span<double> params, std::span<const double> grads) {
  Group& grp = group(g);
  if (params.size() != grp.m.size() || grads.size() != grp.m.size()) {
    throw InvalidArgument("group '" + grp.name + "' expects " + std::to_string(grp.m.size()) + " parameters, got " +
                          std::to_string(params.size()) + " params and " + std::to_string(grads.size()) + " grads");
  }
  if (t_ < 1) throw InvalidArgument("call advance() before the first step");
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double c1 = config_.bias_correction ? 1.0 - std::pow(b1, static_cast<double>(t_)) : 1.0;
  const double c2 = config_.bias_correction ? 1.0 - std::pow(b2, static_cast<double>(t_)) : 1.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double gi = grads[i];
    grp.m[i] = b1 * grp.m[i] + (1.0 - b1) * gi;
    grp.v[i] = b2 * grp.v[i] + (1.0 - b2) * gi * gi;
    const double m_hat = grp.m[i] / c1;
    const double v_hat = grp.v[i] / c2;
    params[i] -= grp.lr * m_hat / (std::sqrt(v_hat) + config_.eps);
  }
}

void adam_step(Adam& opt, std::span<double> params, std::span<const double> grads) {
  if (opt.groups().size() != 1) throw InvalidArgument("adam_step needs a single-group optimizer");
  opt.advance();
  opt.step(0, params, grads);
}

}  // namespace deforma
