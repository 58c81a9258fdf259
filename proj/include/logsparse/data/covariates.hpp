#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "logsparse/autodiff/tensor.hpp"
#include "logsparse/data/series.hpp"

namespace logsparse::data {

enum class TimeFeature { Year, Month, DayOfWeek, HourOfDay, MinuteOfHour, Age };

std::string to_string(TimeFeature feature);
/// Throws ConfigError on an unknown name.
TimeFeature parse_time_feature(std::string_view name);

/// Pre-normalization value: calendar fields of the UTC timestamp (month
/// 1..12, Monday = 0) or, for Age, the index distance from the series start.
double raw_feature(TimeFeature feature, std::int64_t timestamp, std::size_t index);

struct FeatureStats {
  double mean = 0.0;
  double stddev = 1.0;
};

struct CovariateSpec {
  std::vector<TimeFeature> features;
  std::vector<FeatureStats> stats;  // parallel to features

  std::size_t width() const noexcept { return features.size(); }
};

/// Estimates per-feature mean and population standard deviation over the
/// first `train_end` points of every series. Calendar features need
/// TimeKind::Seconds and a sampling period finer than the feature's unit,
/// and every feature must vary over the training range; otherwise
/// ConfigError.
CovariateSpec fit_covariates(const std::vector<TimeFeature>& features, const TimeSeriesSet& set,
                             std::size_t train_end);

/// Normalized covariate rows [count x width] for points begin..begin+count-1
/// of `series`. Rows may extend past the observed values; the timestamps
/// are extrapolated from the sampling period.
ad::Tensor featurize(const Series& series, const CovariateSpec& spec, std::size_t begin,
                     std::size_t count);

}  // namespace logsparse::data
