#include "logsparse/train/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "logsparse/common/error.hpp"
#include "logsparse/common/parallel.hpp"
#include "logsparse/model/sampling.hpp"

namespace logsparse::train {

using ad::Tensor;

double rho_quantile_loss(std::span<const double> actuals, std::span<const double> predictions, double rho) {
  if (!(rho > 0.0 && rho < 1.0)) throw ArgumentError("rho must lie in (0, 1)");
  if (actuals.size() != predictions.size()) throw ArgumentError("actuals and predictions differ in length");
  double deviation = 0.0;
  double norm = 0.0;
  for (std::size_t i = 0; i < actuals.size(); ++i) {
    const double x = actuals[i];
    const double xhat = predictions[i];
    deviation += (rho - (x <= xhat ? 1.0 : 0.0)) * (x - xhat);
    norm += std::abs(x);
  }
  if (norm == 0.0) throw DataError("quantile loss undefined: sum of |actuals| is 0");
  return 2.0 * deviation / norm;
}

std::vector<double> empirical_quantile(const Tensor& paths, double rho) {
  if (paths.rank() != 2 || paths.rows() == 0) throw ShapeError("empirical_quantile expects [S x tau] with S >= 1");
  if (!(rho > 0.0 && rho < 1.0)) throw ArgumentError("rho must lie in (0, 1)");
  const std::size_t S = paths.rows();
  const std::size_t tau = paths.cols();
  // ceil(rho S) with a guard against rho S landing just above an integer.
  const double exact = rho * static_cast<double>(S);
  std::size_t rank = static_cast<std::size_t>(std::ceil(exact - 1e-9 * std::max(1.0, exact)));
  rank = std::clamp<std::size_t>(rank, 1, S);
  std::vector<double> out(tau);
  std::vector<double> column(S);
  for (std::size_t c = 0; c < tau; ++c) {
    for (std::size_t s = 0; s < S; ++s) column[s] = paths(s, c);
    std::nth_element(column.begin(), column.begin() + static_cast<std::ptrdiff_t>(rank - 1), column.end());
    out[c] = column[rank - 1];
  }
  return out;
}

std::vector<double> seasonal_naive(std::span<const double> history, std::size_t period, std::size_t tau) {
  if (period == 0) throw ArgumentError("period must be at least 1");
  if (history.size() < period) throw ArgumentError("history is shorter than the period");
  std::vector<double> extended(history.begin(), history.end());
  const std::size_t n = history.size();
  for (std::size_t i = 0; i < tau; ++i) extended.push_back(extended[n + i - period]);
  return {extended.begin() + static_cast<std::ptrdiff_t>(n), extended.end()};
}

std::string to_string(EvalMode mode) { return mode == EvalMode::Rolling ? "rolling" : "direct"; }

EvalMode parse_eval_mode(const std::string& text) {
  if (text == "rolling") return EvalMode::Rolling;
  if (text == "direct") return EvalMode::Direct;
  throw ConfigError("unknown evaluation mode: " + text);
}

namespace {

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

struct Task {
  std::size_t series = 0;
  std::size_t segment = 0;
  std::size_t start = 0;
};

}  // namespace

EvalReport evaluate_segments(const data::TimeSeriesSet& set, const data::CovariateSpec& covariates,
                             const EvalOptions& options, const PathForecaster& forecaster) {
  const auto started = std::chrono::steady_clock::now();
  if (options.horizon == 0 || options.days == 0) throw ConfigError("horizon and days must be at least 1");
  if (options.t0 == 0) throw ConfigError("conditioning length must be at least 1");
  if (options.samples == 0) throw ConfigError("samples must be at least 1");
  if (options.test_start < options.t0) {
    throw ConfigError("conditioning range starts before the series (test start " +
                      std::to_string(options.test_start) + " < t0 " + std::to_string(options.t0) + ")");
  }
  const std::size_t span = options.days * options.horizon;
  const bool rolling = options.mode == EvalMode::Rolling;
  const std::size_t segments = rolling ? options.days : 1;
  const std::size_t tau = rolling ? options.horizon : span;

  std::vector<Task> tasks;
  for (std::size_t i = 0; i < set.series.size(); ++i) {
    if (set.series[i].values.size() < options.test_start + span) {
      throw ConfigError("series " + set.series[i].id + " has " + std::to_string(set.series[i].values.size()) +
                        " points; the test range needs " + std::to_string(options.test_start + span));
    }
    for (std::size_t d = 0; d < segments; ++d) tasks.push_back({i, d, options.test_start + d * options.horizon});
  }

  EvalReport report;
  report.mode = options.mode;
  report.horizon = options.horizon;
  report.days = options.days;
  report.samples = options.samples;
  report.forecasts.resize(tasks.size());
  parallel_for(tasks.size(), options.threads, [&](std::size_t k) {
    const Task& task = tasks[k];
    data::WindowOptions wo;
    wo.t0 = options.t0;
    wo.tau = tau;
    wo.boundary = task.start;  // nothing at or after the forecast start is read
    wo.shared_id = options.shared_id;
    const auto window = data::make_window(set, covariates, task.series, task.start - options.t0, wo);
    const Tensor paths = forecaster(window, mix(options.seed ^ mix(k)));
    if (paths.rank() != 2 || paths.cols() != tau || paths.rows() == 0) {
      throw ShapeError("forecaster returned paths of the wrong shape");
    }
    SegmentForecast& f = report.forecasts[k];
    f.series_id = set.series[task.series].id;
    f.segment = task.segment;
    f.start = task.start;
    const auto& values = set.series[task.series].values;
    f.actual.assign(values.begin() + static_cast<std::ptrdiff_t>(task.start),
                    values.begin() + static_cast<std::ptrdiff_t>(task.start + tau));
    f.q10 = empirical_quantile(paths, 0.1);
    f.q50 = empirical_quantile(paths, 0.5);
    f.q90 = empirical_quantile(paths, 0.9);
    const std::size_t S = paths.rows();
    f.mean.assign(tau, 0.0);
    f.stddev.assign(tau, 0.0);
    for (std::size_t c = 0; c < tau; ++c) {
      double mean = 0.0;
      for (std::size_t s = 0; s < S; ++s) mean += paths(s, c);
      mean /= static_cast<double>(S);
      double var = 0.0;
      for (std::size_t s = 0; s < S; ++s) var += (paths(s, c) - mean) * (paths(s, c) - mean);
      f.mean[c] = mean;
      f.stddev[c] = S > 1 ? std::sqrt(var / static_cast<double>(S - 1)) : 0.0;
    }
  });

  std::vector<double> actual, p50, p90;
  for (std::size_t d = 0; d < segments; ++d) {
    std::vector<double> a, m, n;
    for (const auto& f : report.forecasts) {
      if (f.segment != d) continue;
      a.insert(a.end(), f.actual.begin(), f.actual.end());
      m.insert(m.end(), f.q50.begin(), f.q50.end());
      n.insert(n.end(), f.q90.begin(), f.q90.end());
    }
    SegmentLoss loss;
    loss.segment = d;
    loss.start = d * options.horizon;
    const bool defined = std::any_of(a.begin(), a.end(), [](double x) { return x != 0.0; });
    loss.r50 = defined ? rho_quantile_loss(a, m, 0.5) : std::numeric_limits<double>::quiet_NaN();
    loss.r90 = defined ? rho_quantile_loss(a, n, 0.9) : std::numeric_limits<double>::quiet_NaN();
    report.per_segment.push_back(loss);
    actual.insert(actual.end(), a.begin(), a.end());
    p50.insert(p50.end(), m.begin(), m.end());
    p90.insert(p90.end(), n.begin(), n.end());
  }
  report.points = actual.size();
  report.r50 = rho_quantile_loss(actual, p50, 0.5);
  report.r90 = rho_quantile_loss(actual, p90, 0.9);
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

EvalReport evaluate_rolling(const model::Forecaster& model, const data::TimeSeriesSet& set,
                            const data::CovariateSpec& covariates, const EvalOptions& options) {
  const std::size_t samples = options.samples;
  return evaluate_segments(set, covariates, options, [&](const data::Window& w, std::uint64_t seed) {
    return model::ancestral_forecast(model, w, samples, seed);
  });
}

EvalReport evaluate_seasonal_naive(const data::TimeSeriesSet& set, const data::CovariateSpec& covariates,
                                   const EvalOptions& options, std::size_t period) {
  auto naive = options;
  naive.samples = 1;
  return evaluate_segments(set, covariates, naive, [&](const data::Window& w, std::uint64_t) {
    const auto point = seasonal_naive(std::span<const double>(w.z.data(), w.t0), period, w.tau);
    return Tensor(ad::Shape{1, w.tau}, point);
  });
}

namespace {

nlohmann::json number_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); }

}  // namespace

nlohmann::json to_json(const EvalReport& report, bool include_runtime) {
  nlohmann::json segments = nlohmann::json::array();
  for (const auto& s : report.per_segment) {
    segments.push_back({{"segment", s.segment}, {"start", s.start}, {"r50", number_or_null(s.r50)},
                        {"r90", number_or_null(s.r90)}});
  }
  nlohmann::json j = {{"mode", to_string(report.mode)}, {"horizon", report.horizon}, {"days", report.days},
                      {"samples", report.samples},      {"points", report.points},   {"r50", report.r50},
                      {"r90", report.r90},              {"per_segment", segments}};
  if (include_runtime) j["runtime"] = {{"seconds", report.seconds}};
  return j;
}

void write_forecast_csv(const EvalReport& report, std::ostream& out) {
  out.precision(std::numeric_limits<double>::max_digits10);
  out << "series_id,step,mu,sigma,q0.1,q0.5,q0.9\n";
  for (const auto& f : report.forecasts) {
    for (std::size_t i = 0; i < f.actual.size(); ++i) {
      out << f.series_id << ',' << f.start + i << ',' << f.mean[i] << ',' << f.stddev[i] << ',' << f.q10[i] << ','
          << f.q50[i] << ',' << f.q90[i] << '\n';
    }
  }
}

}  // namespace logsparse::train
