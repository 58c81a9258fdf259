#include "logsparse/autodiff/optimizer.hpp"

#include <cmath>

#include "logsparse/common/error.hpp"

namespace logsparse::ad {

void adam_step(ParameterStore& params, const AdamConfig& config, std::size_t step) {
  if (step < 1) throw ArgumentError("adam_step: step index starts at 1");
  const double t = static_cast<double>(step);
  const double correction1 = 1.0 - std::pow(config.beta1, t);
  const double correction2 = 1.0 - std::pow(config.beta2, t);
  for (auto& p : params) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double g = p->grad[i];
      double& m = p->first_moment[i];
      double& v = p->second_moment[i];
      m = config.beta1 * m + (1.0 - config.beta1) * g;
      v = config.beta2 * v + (1.0 - config.beta2) * g * g;
      const double m_hat = m / correction1;
      const double v_hat = v / correction2;
      p->value[i] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon);
    }
    p->zero_grad();
  }
}

}  // namespace logsparse::ad
