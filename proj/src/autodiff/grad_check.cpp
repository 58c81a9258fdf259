#include "logsparse/autodiff/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace logsparse::ad {

namespace {

double evaluate(const LossBuilder& build) {
  Tape tape;
  return build(tape).value().item();
}

}  // namespace

GradCheckResult grad_check(const LossBuilder& build, const std::vector<Parameter*>& params,
                           double h, DifferenceScheme scheme) {
  for (Parameter* p : params) p->zero_grad();
  {
    Tape tape;
    backward(tape, build(tape));
  }
  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (Parameter* p : params) {
    analytic.push_back(p->grad);
    p->zero_grad();
  }

  GradCheckResult result;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Parameter& p = *params[pi];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double saved = p.value[i];
      const auto central = [&](double step) {
        p.value[i] = saved + step;
        const double up = evaluate(build);
        p.value[i] = saved - step;
        const double down = evaluate(build);
        p.value[i] = saved;
        return (up - down) / (2.0 * step);
      };
      const double coarse = central(h);
      const double numeric = scheme == DifferenceScheme::Central
                                 ? coarse
                                 : (4.0 * central(0.5 * h) - coarse) / 3.0;
      const double a = analytic[pi][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double err = std::abs(a - numeric) / denom;
      ++result.coordinates_checked;
      if (err > result.max_relative_error || result.coordinates_checked == 1) {
        result.max_relative_error = err;
        result.worst_parameter = p.name;
        result.worst_index = i;
        result.worst_analytic = a;
        result.worst_numeric = numeric;
      }
    }
  }
  return result;
}

GradCheckResult grad_check(const LossBuilder& build, ParameterStore& params, double h,
                           DifferenceScheme scheme) {
  std::vector<Parameter*> all;
  for (auto& p : params) all.push_back(p.get());
  return grad_check(build, all, h, scheme);
}

}  // namespace logsparse::ad
