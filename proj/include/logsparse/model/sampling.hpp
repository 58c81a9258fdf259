#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <utility>

#include "logsparse/attention/incremental.hpp"
#include "logsparse/autodiff/tensor.hpp"
#include "logsparse/data/windows.hpp"
#include "logsparse/model/forecaster.hpp"

namespace logsparse::model {

/// One-step-ahead predictive distributions for a batch of sample paths.
class StepModel {
 public:
  virtual ~StepModel() = default;

  /// Consumes the conditioning range and returns (mu, sigma) of the first
  /// forecast step, which every path shares.
  virtual std::pair<double, double> begin(std::size_t paths) = 0;

  /// Appends one value per path and writes the next step's parameters.
  virtual void advance(std::span<const double> values, std::span<double> mu, std::span<double> sigma) = 0;
};

/// Runs the network over a window with cached decoding.
class NetworkStepModel final : public StepModel {
 public:
  NetworkStepModel(const Forecaster& model, const data::Window& window);

  std::pair<double, double> begin(std::size_t paths) override;
  void advance(std::span<const double> values, std::span<double> mu, std::span<double> sigma) override;

  double scale() const noexcept { return nu_; }

 private:
  const Forecaster& model_;
  const data::Window& window_;
  double nu_;
  ad::RowMatrix static_part_;  // [L x d_model]: embedding/covariate part of the input projection
  Eigen::RowVectorXd z_weight_;  // input-projection row applied to z / nu
  attention::IncrementalStack stack_;

  ad::RowMatrix project(std::size_t position, const Eigen::VectorXd& z) const;
  void head(const ad::RowMatrix& out, std::span<double> mu, std::span<double> sigma) const;
};

/// [paths x tau] draws z_t ~ N(mu_t, sigma_t^2), feeding each draw back.
/// Deterministic per seed.
ad::Tensor ancestral_sample(StepModel& model, std::size_t tau, std::size_t paths, std::uint64_t seed);

/// ancestral_sample with the network over the window's forecast range.
ad::Tensor ancestral_forecast(const Forecaster& model, const data::Window& window, std::size_t paths,
                              std::uint64_t seed);

}  // namespace logsparse::model
