#pragma once

#include "surgtrack/tensor.hpp"

#include <map>
#include <string>

namespace surgtrack {

/// Adam with bias correction and no weight decay. State is keyed by
/// parameter name, so the caller may pass any subset on each step.
class Adam {
 public:
  explicit Adam(double learning_rate, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  /// Applies one update to value given its gradient. Call begin_step() once
  /// per optimizer step before updating the individual parameters.
  void begin_step() { ++t_; }
  void update(const std::string& name, Matrix& value, const Matrix& grad);

  long step_count() const { return t_; }

 private:
  struct Moments {
    Matrix m, v;
  };
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::map<std::string, Moments> state_;
};

}  // namespace surgtrack
