#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "logsparse/autodiff/tensor.hpp"
#include "logsparse/data/covariates.hpp"
#include "logsparse/data/series.hpp"
#include "logsparse/data/windows.hpp"
#include "logsparse/model/forecaster.hpp"

namespace logsparse::train {

/// R_rho = 2 sum D_rho(x, xhat) / sum |x| with
/// D_rho(x, xhat) = (rho - 1{x <= xhat}) (x - xhat).
/// Throws ArgumentError for rho outside (0, 1) or mismatched sizes and
/// DataError when sum |x| = 0.
double rho_quantile_loss(std::span<const double> actuals, std::span<const double> predictions, double rho);

/// Per column of [S x tau] paths, the ceil(rho S)-th smallest value.
std::vector<double> empirical_quantile(const ad::Tensor& paths, double rho);

/// z at n + i - period for i in [0, tau), continuing periodically past the
/// history's end. Throws ArgumentError if history is shorter than period.
std::vector<double> seasonal_naive(std::span<const double> history, std::size_t period, std::size_t tau);

enum class EvalMode { Rolling, Direct };

std::string to_string(EvalMode mode);
EvalMode parse_eval_mode(const std::string& text);

struct EvalOptions {
  EvalMode mode = EvalMode::Rolling;
  std::size_t t0 = 0;          // conditioning length of each forecast
  std::size_t horizon = 24;    // points per day
  std::size_t days = 7;
  std::size_t test_start = 0;  // series index of the first forecast point
  std::size_t samples = 100;
  std::uint64_t seed = 0;
  std::size_t threads = 0;
  bool shared_id = false;
};

/// One forecast segment of one series.
struct SegmentForecast {
  std::string series_id;
  std::size_t segment = 0;  // day index (always 0 in direct mode)
  std::size_t start = 0;    // series index of the first forecast point
  std::vector<double> actual;
  std::vector<double> mean;
  std::vector<double> stddev;
  std::vector<double> q10;
  std::vector<double> q50;
  std::vector<double> q90;
};

struct SegmentLoss {
  std::size_t segment = 0;
  std::size_t start = 0;  // forecast start offset from test_start
  double r50 = 0.0;
  double r90 = 0.0;
};

struct EvalReport {
  EvalMode mode = EvalMode::Rolling;
  std::size_t horizon = 0;
  std::size_t days = 0;
  std::size_t samples = 0;
  std::size_t points = 0;
  double r50 = 0.0;
  double r90 = 0.0;
  std::vector<SegmentLoss> per_segment;  // per rolling day; one entry in direct mode
  std::vector<SegmentForecast> forecasts;
  double seconds = 0.0;  // runtime metadata
};

/// Window with its forecast range blanked; -> sample paths [S x tau].
using PathForecaster = std::function<ad::Tensor(const data::Window&, std::uint64_t seed)>;

/// Forecast start of segment d is test_start + d * horizon (rolling, tau =
/// horizon) or test_start once with tau = days * horizon (direct). Every
/// window holds only data strictly before its forecast start. Throws
/// ConfigError when the test range is shorter than days * horizon or the
/// conditioning range starts before the series.
EvalReport evaluate_segments(const data::TimeSeriesSet& set, const data::CovariateSpec& covariates,
                             const EvalOptions& options, const PathForecaster& forecaster);

/// evaluate_segments with ancestral sampling from the network.
EvalReport evaluate_rolling(const model::Forecaster& model, const data::TimeSeriesSet& set,
                            const data::CovariateSpec& covariates, const EvalOptions& options);

/// evaluate_segments with seasonal-naive point forecasts (every quantile
/// equals the point forecast).
EvalReport evaluate_seasonal_naive(const data::TimeSeriesSet& set, const data::CovariateSpec& covariates,
                                   const EvalOptions& options, std::size_t period);

/// Report without forecasts; runtime fields under "runtime" only when asked.
nlohmann::json to_json(const EvalReport& report, bool include_runtime = true);

/// series_id,step,mu,sigma,q0.1,q0.5,q0.9 where step is the series index
/// and mu/sigma are the sample mean and standard deviation.
void write_forecast_csv(const EvalReport& report, std::ostream& out);

}  // namespace logsparse::train
