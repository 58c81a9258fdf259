#include "logsparse/data/covariates.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>

#include "logsparse/common/error.hpp"

namespace logsparse::data {

std::string to_string(TimeFeature feature) {
  switch (feature) {
    case TimeFeature::Year: return "year";
    case TimeFeature::Month: return "month";
    case TimeFeature::DayOfWeek: return "day_of_week";
    case TimeFeature::HourOfDay: return "hour_of_day";
    case TimeFeature::MinuteOfHour: return "minute_of_hour";
    case TimeFeature::Age: return "age";
  }
  return "unknown";
}

TimeFeature parse_time_feature(std::string_view name) {
  std::string key;
  for (const char c : name) key += c == '-' ? '_' : static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  for (auto f : {TimeFeature::Year, TimeFeature::Month, TimeFeature::DayOfWeek, TimeFeature::HourOfDay,
                 TimeFeature::MinuteOfHour, TimeFeature::Age}) {
    if (key == to_string(f)) return f;
  }
  throw ConfigError("unknown time feature '" + std::string(name) + "'");
}

double raw_feature(TimeFeature feature, std::int64_t timestamp, std::size_t index) {
  if (feature == TimeFeature::Age) return static_cast<double>(index);
  using namespace std::chrono;
  std::int64_t days = timestamp / 86400;
  std::int64_t rem = timestamp % 86400;
  if (rem < 0) {
    rem += 86400;
    --days;
  }
  const sys_days day_point{std::chrono::days{days}};
  const year_month_day date{day_point};
  switch (feature) {
    case TimeFeature::Year: return static_cast<int>(date.year());
    case TimeFeature::Month: return static_cast<unsigned>(date.month());
    case TimeFeature::DayOfWeek: return weekday{day_point}.iso_encoding() - 1;
    case TimeFeature::HourOfDay: return static_cast<double>(rem / 3600);
    case TimeFeature::MinuteOfHour: return static_cast<double>(rem % 3600 / 60);
    case TimeFeature::Age: break;
  }
  return 0.0;
}

namespace {

// A calendar feature is only informative when samples are finer than its unit.
std::int64_t feature_unit_seconds(TimeFeature feature) {
  switch (feature) {
    case TimeFeature::Year: return 365 * 86400LL;
    case TimeFeature::Month: return 28 * 86400LL;
    case TimeFeature::DayOfWeek: return 7 * 86400LL;
    case TimeFeature::HourOfDay: return 86400;
    case TimeFeature::MinuteOfHour: return 3600;
    case TimeFeature::Age: return 0;
  }
  return 0;
}

}  // namespace

CovariateSpec fit_covariates(const std::vector<TimeFeature>& features, const TimeSeriesSet& set,
                             std::size_t train_end) {
  CovariateSpec spec;
  spec.features = features;
  for (const auto feature : features) {
    if (feature != TimeFeature::Age) {
      if (set.kind != TimeKind::Seconds) {
        throw ConfigError("feature " + to_string(feature) + " needs calendar timestamps, data uses ticks");
      }
      for (const auto& s : set.series) {
        if (s.period >= feature_unit_seconds(feature)) {
          throw ConfigError("feature " + to_string(feature) + " is constant at sampling period " +
                            std::to_string(s.period) + "s");
        }
      }
    }
    // Two-pass mean and population variance over the training range.
    double total = 0.0;
    std::size_t n = 0;
    for (const auto& s : set.series) {
      const std::size_t end = std::min(train_end, s.values.size());
      for (std::size_t i = 0; i < end; ++i, ++n) total += raw_feature(feature, s.timestamp(i), i);
    }
    FeatureStats stats;
    if (n > 0) {
      stats.mean = total / static_cast<double>(n);
      double sq = 0.0;
      for (const auto& s : set.series) {
        const std::size_t end = std::min(train_end, s.values.size());
        for (std::size_t i = 0; i < end; ++i) {
          const double dv = raw_feature(feature, s.timestamp(i), i) - stats.mean;
          sq += dv * dv;
        }
      }
      stats.stddev = std::sqrt(sq / static_cast<double>(n));
    }
    // A feature that never varies in training normalizes to 0.
    if (!(stats.stddev > 0.0)) stats.stddev = 1.0;
    spec.stats.push_back(stats);
  }
  return spec;
}

ad::Tensor featurize(const Series& series, const CovariateSpec& spec, std::size_t begin,
                     std::size_t count) {
  if (spec.stats.size() != spec.features.size()) {
    throw ConfigError("covariate spec has no statistics; fit it first");
  }
  ad::Tensor rows(ad::Shape{count, spec.width()});
  for (std::size_t r = 0; r < count; ++r) {
    const std::size_t i = begin + r;
    for (std::size_t f = 0; f < spec.width(); ++f) {
      const double raw = raw_feature(spec.features[f], series.timestamp(i), i);
      rows(r, f) = (raw - spec.stats[f].mean) / spec.stats[f].stddev;
    }
  }
  return rows;
}

}  // namespace logsparse::data
