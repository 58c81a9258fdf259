#include "logsparse/data/windows.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <spdlog/spdlog.h>

#include "logsparse/common/error.hpp"

namespace logsparse::data {

namespace {

std::size_t available(const Series& s, const WindowOptions& options) {
  return options.boundary == 0 ? s.values.size() : std::min(options.boundary, s.values.size());
}

}  // namespace

Window make_window(const TimeSeriesSet& set, const CovariateSpec& covariates, std::size_t series_index,
                   std::size_t start, const WindowOptions& options) {
  if (series_index >= set.count()) throw ArgumentError("make_window: series index out of range");
  if (options.t0 < 1) throw ArgumentError("make_window: t0 must be >= 1");
  const Series& s = set.series[series_index];
  const std::size_t limit = available(s, options);
  if (start + options.t0 > limit) {
    throw ArgumentError("make_window: conditioning range of series " + s.id + " is not observed");
  }
  Window w;
  w.series_id = s.id;
  w.series_index = series_index;
  w.embedding_id = options.shared_id ? 0 : series_index;
  w.start = start;
  w.t0 = options.t0;
  w.tau = options.tau;
  w.z.assign(w.length(), 0.0);
  for (std::size_t i = 0; i < w.length() && start + i < limit; ++i) w.z[i] = s.values[start + i];
  w.covariates = featurize(s, covariates, start, w.length());
  return w;
}

std::vector<std::pair<std::size_t, std::size_t>> admissible_starts(const TimeSeriesSet& set,
                                                                   const WindowOptions& options) {
  std::vector<std::pair<std::size_t, std::size_t>> starts;
  const std::size_t L = options.t0 + options.tau;
  for (std::size_t i = 0; i < set.count(); ++i) {
    const std::size_t limit = available(set.series[i], options);
    if (limit < L) {
      spdlog::warn("series {} has {} usable points, fewer than the window length {}; skipped",
                   set.series[i].id, limit, L);
      continue;
    }
    for (std::size_t start = 0; start + L <= limit; ++start) starts.emplace_back(i, start);
  }
  return starts;
}

double window_weight(const TimeSeriesSet& set, std::size_t series_index, std::size_t start, std::size_t t0) {
  const auto& v = set.series.at(series_index).values;
  double total = 0.0;
  for (std::size_t i = start; i < start + t0; ++i) total += std::abs(v.at(i));
  return 1.0 + total / static_cast<double>(t0);
}

std::vector<Window> sample_windows(const TimeSeriesSet& set, const CovariateSpec& covariates,
                                   const WindowOptions& options, std::size_t count, std::uint64_t seed) {
  std::vector<Window> windows;
  if (count == 0) return windows;
  const auto starts = admissible_starts(set, options);
  if (starts.empty()) throw ConfigError("no series is long enough for the requested window");
  std::vector<double> weights;
  weights.reserve(starts.size());
  for (const auto& [series, start] : starts) weights.push_back(window_weight(set, series, start, options.t0));
  std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
  std::mt19937_64 rng(seed);
  windows.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto& [series, start] = starts[pick(rng)];
    windows.push_back(make_window(set, covariates, series, start, options));
  }
  return windows;
}

std::pair<std::vector<Window>, std::vector<Window>> split_train_val(std::vector<Window> windows,
                                                                    std::uint64_t seed) {
  if (windows.size() < 10) {
    throw ConfigError("need at least 10 windows to split, got " + std::to_string(windows.size()));
  }
  std::vector<std::size_t> order(windows.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t n_train = windows.size() * 9 / 10;
  std::pair<std::vector<Window>, std::vector<Window>> out;
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i < n_train ? out.first : out.second).push_back(std::move(windows[order[i]]));
  }
  return out;
}

}  // namespace logsparse::data
