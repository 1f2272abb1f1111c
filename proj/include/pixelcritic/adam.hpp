#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "pixelcritic/tensor.hpp"

namespace pixelcritic {

// Bias-corrected Adam. Moment buffers are keyed by parameter name and
// created on first update.
class AdamState {
 public:
  explicit AdamState(double lr = 2e-4, double beta1 = 0.9, double beta2 = 0.999,
                     double eps = 1e-8);

  // params -= lr * m_hat / (sqrt(v_hat) + eps); rejects non-finite gradients
  void step(std::map<std::string, Tensor*>& params, const std::map<std::string, Tensor>& grads);

  std::int64_t step_count() const { return step_count_; }
  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::int64_t step_count_ = 0;
  std::map<std::string, Tensor> m_, v_;
};

}  // namespace pixelcritic
