#pragma once

#include <cstdint>
#include <vector>

#include "lyricrl/numcore/param_set.hpp"

namespace lyricrl {

struct AdamConfig {
  double lr = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  double weight_decay = 1e-5;  // decoupled
  double grad_clip = 1.0;      // global L2 norm; <= 0 disables
};

/// Adam with decoupled weight decay. Moment buffers are created lazily to
/// match the ParamSet layout on the first step.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  /// Applies one update from params' grad buffers; returns the pre-clip grad norm.
  /// Throws NumericalError if any gradient is non-finite.
  double step(ParamSet& params);

  const AdamConfig& config() const { return cfg_; }
  AdamConfig& config() { return cfg_; }
  std::int64_t steps_taken() const { return t_; }

 private:
  AdamConfig cfg_;
  std::int64_t t_ = 0;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
};

}  // namespace lyricrl
