#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "logsparse/data/series.hpp"

namespace logsparse::data {

struct SyntheticConfig {
  std::size_t t0 = 48;
  std::size_t tau = 24;
  std::size_t train_count = 4500;
  std::size_t val_count = 500;
  std::size_t test_count = 1000;
  double noise_std = 1.0;
  double amplitude_max = 60.0;
  std::uint64_t seed = 0;

  /// Throws ConfigError unless t0 >= 24, t0 % 12 == 0, tau >= 1 and the
  /// noise and amplitude bounds are non-negative.
  void validate() const;
};

struct Amplitudes {
  double a1 = 0, a2 = 0, a3 = 0, a4 = 0;
};

/// Noise-free value at integer position x of a series with forecast start t0:
/// A1 sin(pi x / 6) on [0,12), A2 on [12,24), A3 on [24,t0), then
/// A4 sin(pi x / 12) from t0 on, all offset by 72.
double synthetic_mean(std::size_t x, std::size_t t0, const Amplitudes& amplitudes);

struct SyntheticDataset {
  TimeSeriesSet train, val, test;
  /// Parallel to the series of each split.
  std::vector<Amplitudes> train_amplitudes, val_amplitudes, test_amplitudes;
};

/// Series of length t0 + tau with ids "train-0", "val-3", ... Amplitudes
/// A1..A3 ~ U[0, amplitude_max], A4 = max(A1, A2), noise i.i.d.
/// N(0, noise_std^2) on every point. Timestamps are ticks 0..t0+tau-1.
SyntheticDataset generate_synthetic(const SyntheticConfig& config);

}  // namespace logsparse::data
