#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "logsparse/autodiff/parameter.hpp"
#include "logsparse/autodiff/tape.hpp"

namespace logsparse::ad {

/// Builds a scalar loss on a fresh tape from the current parameter values.
using LossBuilder = std::function<Var(Tape&)>;

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t coordinates_checked = 0;
};

enum class DifferenceScheme {
  Central,     // D(h) = (f(x+h) - f(x-h)) / 2h, error O(h^2)
  Richardson,  // (4 D(h/2) - D(h)) / 3, error O(h^4)
};

/// Compares reverse-mode gradients against central differences on every
/// coordinate of every listed parameter. Relative error uses
/// max(|analytic|, |numeric|, 1e-8) as denominator. Parameter values are
/// restored and gradients left zeroed.
GradCheckResult grad_check(const LossBuilder& build, const std::vector<Parameter*>& params,
                           double h = 1e-3, DifferenceScheme scheme = DifferenceScheme::Richardson);

GradCheckResult grad_check(const LossBuilder& build, ParameterStore& params, double h = 1e-3,
                           DifferenceScheme scheme = DifferenceScheme::Richardson);

}  // namespace logsparse::ad
