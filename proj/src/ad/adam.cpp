#include "mfeit/ad/adam.hpp"

#include <cmath>

#include "mfeit/error.hpp"

namespace mfeit::ad {

Adam::Adam(AdamConfig config) : config_(config) {
  if (!(config_.lr > 0.0) || !(config_.eps > 0.0) || config_.beta1 < 0.0 || config_.beta1 >= 1.0 ||
      config_.beta2 < 0.0 || config_.beta2 >= 1.0) {
    throw ConfigError("invalid Adam hyperparameters");
  }
}

void Adam::step(ParameterSet& params) {
  ++t_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (const auto& p : params.params()) {
    if (!p->grad.same_shape(p->value)) p->zero_grad();
    auto [it, inserted] = moments_.try_emplace(p->name);
    Moments& mo = it->second;
    if (inserted) {
      mo.m = Tensor::like(p->value);
      mo.v = Tensor::like(p->value);
    }
    auto g = p->grad.array();
    mo.m.array() = config_.beta1 * mo.m.array() + (1.0 - config_.beta1) * g;
    mo.v.array() = config_.beta2 * mo.v.array() + (1.0 - config_.beta2) * g.square();
    p->value.array() -= config_.lr * (mo.m.array() / c1) / ((mo.v.array() / c2).sqrt() + config_.eps);
    p->zero_grad();
  }
}

}  // namespace mfeit::ad
