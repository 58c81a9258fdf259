#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "logsparse/autodiff/tensor.hpp"
#include "logsparse/data/covariates.hpp"
#include "logsparse/data/series.hpp"

namespace logsparse::data {

struct Window {
  std::string series_id;
  std::size_t series_index = 0;
  std::size_t embedding_id = 0;  // row of the ID embedding
  std::size_t start = 0;         // series index of z_1
  std::size_t t0 = 0;
  std::size_t tau = 0;
  std::vector<double> z;   // t0 + tau values; the last tau may be unknown
  ad::Tensor covariates;   // [t0 + tau x width], aligned with z

  std::size_t length() const noexcept { return t0 + tau; }
};

struct WindowOptions {
  std::size_t t0 = 0;
  std::size_t tau = 0;
  /// Points at or after this series index are never read (test range).
  /// 0 means the whole series is available.
  std::size_t boundary = 0;
  /// All windows share ID embedding 0 instead of their series index.
  bool shared_id = false;
};

/// Window of `series_index` whose z_1 is point `start`. Values beyond the
/// series end (or `boundary`) are filled with 0 and only valid as unknown
/// future targets. Throws ArgumentError if the conditioning range is not
/// fully observed.
Window make_window(const TimeSeriesSet& set, const CovariateSpec& covariates,
                   std::size_t series_index, std::size_t start, const WindowOptions& options);

/// Admissible (series, start) pairs: the whole window lies before the
/// boundary. Series that are too short are skipped.
std::vector<std::pair<std::size_t, std::size_t>> admissible_starts(const TimeSeriesSet& set,
                                                                   const WindowOptions& options);

/// Sampling weight of a window: 1 + mean |z| over its conditioning range.
double window_weight(const TimeSeriesSet& set, std::size_t series_index, std::size_t start,
                     std::size_t t0);

/// Draws `count` windows with replacement, each admissible start chosen with
/// probability proportional to window_weight. Deterministic per seed.
std::vector<Window> sample_windows(const TimeSeriesSet& set, const CovariateSpec& covariates,
                                   const WindowOptions& options, std::size_t count,
                                   std::uint64_t seed);

/// Seeded shuffle, then floor(0.9 n) training windows and the rest for
/// validation. Throws ConfigError for fewer than 10 windows.
std::pair<std::vector<Window>, std::vector<Window>> split_train_val(std::vector<Window> windows,
                                                                    std::uint64_t seed);

}  // namespace logsparse::data
