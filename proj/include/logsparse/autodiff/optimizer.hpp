#pragma once

#include <cstddef>

#include "logsparse/autodiff/parameter.hpp"

namespace logsparse::ad {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// One bias-corrected Adam update using the gradients currently stored in
/// each parameter, then zeroes those gradients. `step` counts from 1.
void adam_step(ParameterStore& params, const AdamConfig& config, std::size_t step);

}  // namespace logsparse::ad
