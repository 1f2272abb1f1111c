#include "pixelcritic/adam.hpp"

#include <cmath>

#include "pixelcritic/errors.hpp"

namespace pixelcritic {

AdamState::AdamState(double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  if (lr <= 0.0 || beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0 || eps <= 0.0)
    throw ConfigError("invalid Adam hyper-parameters");
}

void AdamState::step(std::map<std::string, Tensor*>& params,
                     const std::map<std::string, Tensor>& grads) {
  for (auto& [name, grad] : grads) {
    if (!grad.all_finite())
      throw NumericError("non-finite gradient for parameter '" + name + "', update refused");
    if (!params.count(name)) throw ConfigError("gradient for unknown parameter '" + name + "'");
    if (!params.at(name)->same_shape(grad))
      throw ConfigError("gradient shape " + shape_str(grad.shape()) +
                        " does not match parameter '" + name + "' " +
                        shape_str(params.at(name)->shape()));
  }
  ++step_count_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_count_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_count_));
  for (auto& [name, param] : params) {
    auto it = grads.find(name);
    if (it == grads.end()) continue;  // untouched parameter this step
    const Tensor& g = it->second;
    Tensor& m = m_.try_emplace(name, Tensor(param->shape())).first->second;
    Tensor& v = v_.try_emplace(name, Tensor(param->shape())).first->second;
    for (std::size_t i = 0; i < g.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      (*param)[i] -= lr_ * m_hat / (std::sqrt(v_hat) + eps_);
    }
  }
}

}  // namespace pixelcritic
