#pragma once

#include <unordered_map>

#include "mfeit/ad/tape.hpp"

namespace mfeit::ad {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction. Moments are keyed by parameter name.
class Adam {
 public:
  explicit Adam(AdamConfig config = {});

  /// One update of every parameter in the set, then zeroes the gradients.
  void step(ParameterSet& params);
  long steps() const { return t_; }
  const AdamConfig& config() const { return config_; }
  void set_lr(double lr) { config_.lr = lr; }

 private:
  struct Moments {
    Tensor m;
    Tensor v;
  };
  AdamConfig config_;
  long t_ = 0;
  std::unordered_map<std::string, Moments> moments_;
};

}  // namespace mfeit::ad
