#include "logsparse/data/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "logsparse/common/error.hpp"

namespace logsparse::data {

void SyntheticConfig::validate() const {
  if (t0 < 24 || t0 % 12 != 0) {
    throw ConfigError("synthetic t0 must be >= 24 and divisible by 12, got " + std::to_string(t0));
  }
  if (tau < 1) throw ConfigError("synthetic tau must be >= 1");
  if (!(noise_std >= 0.0)) throw ConfigError("synthetic noise_std must be >= 0");
  if (!(amplitude_max >= 0.0)) throw ConfigError("synthetic amplitude_max must be >= 0");
}

double synthetic_mean(std::size_t x, std::size_t t0, const Amplitudes& a) {
  const double pos = static_cast<double>(x);
  if (x >= t0) return a.a4 * std::sin(std::numbers::pi * pos / 12.0) + 72.0;
  const double amplitude = x < 12 ? a.a1 : x < 24 ? a.a2 : a.a3;
  return amplitude * std::sin(std::numbers::pi * pos / 6.0) + 72.0;
}

namespace {

void fill_split(const SyntheticConfig& config, const char* prefix, std::size_t count,
                std::mt19937_64& rng, TimeSeriesSet& set, std::vector<Amplitudes>& amplitudes) {
  std::uniform_real_distribution<double> amplitude(0.0, config.amplitude_max);
  std::normal_distribution<double> noise(0.0, 1.0);
  set.kind = TimeKind::Ticks;
  const std::size_t n = config.t0 + config.tau;
  for (std::size_t i = 0; i < count; ++i) {
    Amplitudes a;
    a.a1 = amplitude(rng);
    a.a2 = amplitude(rng);
    a.a3 = amplitude(rng);
    a.a4 = std::max(a.a1, a.a2);
    Series s;
    s.id = std::string(prefix) + "-" + std::to_string(i);
    s.values.resize(n);
    for (std::size_t x = 0; x < n; ++x) {
      s.values[x] = synthetic_mean(x, config.t0, a) + config.noise_std * noise(rng);
    }
    set.series.push_back(std::move(s));
    amplitudes.push_back(a);
  }
}

}  // namespace

SyntheticDataset generate_synthetic(const SyntheticConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  SyntheticDataset out;
  fill_split(config, "train", config.train_count, rng, out.train, out.train_amplitudes);
  fill_split(config, "val", config.val_count, rng, out.val, out.val_amplitudes);
  fill_split(config, "test", config.test_count, rng, out.test, out.test_amplitudes);
  return out;
}

}  // namespace logsparse::data
