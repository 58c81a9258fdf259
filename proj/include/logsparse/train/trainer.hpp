#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <ostream>
#include <vector>

#include "json.hpp"

#include "logsparse/data/windows.hpp"
#include "logsparse/model/forecaster.hpp"

namespace logsparse::train {

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 64;
  std::size_t max_epochs = 50;
  std::size_t patience = 5;
  std::size_t warmup_steps = 0;  // linear ramp of the learning rate
  std::uint64_t seed = 0;
  std::size_t threads = 0;       // 0 = default_thread_count()
  /// Count the likelihood of the conditioning range as well as the
  /// forecast range.
  bool include_conditioning = false;

  /// Throws ConfigError.
  void validate() const;
};

nlohmann::json to_json(const TrainConfig& config);
/// Missing keys keep their defaults; unknown keys are a ConfigError.
TrainConfig train_config_from_json(const nlohmann::json& j);

struct CurvePoint {
  std::size_t step = 0;   // 1-based optimizer step
  std::size_t epoch = 0;  // 1-based
  double train_nll = 0.0;  // batch mean per target point
  double val_nll = 0.0;    // NaN except on the last step of an epoch
};

struct TrainResult {
  std::vector<CurvePoint> curve;
  std::vector<double> epoch_val_nll;
  std::size_t best_epoch = 0;  // 1-based
  double best_val_nll = 0.0;
  std::size_t steps = 0;
};

/// Mean per-point NLL of `model` over windows, over the same positions the
/// trainer optimizes.
double mean_nll(const model::Forecaster& model, const std::vector<data::Window>& windows,
                bool include_conditioning, std::size_t threads = 0);

/// Replaces the validation metric (epoch, model) -> value; for tests.
using ValidationMetric = std::function<double(std::size_t, const model::Forecaster&)>;

/// Adam on the mean NLL per batch. After every epoch the validation NLL is
/// computed; training stops after `patience` epochs without improvement and
/// the parameters of the best epoch are restored. Throws ConfigError on
/// empty partitions and DivergenceError on a non-finite loss or gradient.
TrainResult train(model::Forecaster& model, const std::vector<data::Window>& train_windows,
                  const std::vector<data::Window>& val_windows, const TrainConfig& config,
                  const ValidationMetric& metric = {});

/// step,train_nll,val_nll with val_nll empty where not evaluated.
void write_curve_csv(const std::vector<CurvePoint>& curve, std::ostream& out);
void save_curve_csv(const std::vector<CurvePoint>& curve, const std::filesystem::path& path);

}  // namespace logsparse::train
