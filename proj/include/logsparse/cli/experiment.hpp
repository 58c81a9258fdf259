#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "logsparse/data/covariates.hpp"
#include "logsparse/data/csv.hpp"
#include "logsparse/data/synthetic.hpp"
#include "logsparse/data/windows.hpp"
#include "logsparse/model/forecaster.hpp"
#include "logsparse/train/evaluation.hpp"
#include "logsparse/train/trainer.hpp"

namespace logsparse::cli {

enum class DataSource { Synthetic, Csv };

struct DataConfig {
  DataSource source = DataSource::Synthetic;
  data::SyntheticConfig synthetic;  // seed comes from the experiment seed
  std::filesystem::path csv_path;
  data::CsvSchema schema;
  std::size_t t0 = 168;               // CSV conditioning length
  std::size_t train_windows = 1000;   // CSV windows sampled before the 90/10 split
  std::vector<data::TimeFeature> covariates;
  bool shared_id = false;             // CSV only; synthetic always shares ID 0
};

struct EvalConfig {
  train::EvalMode mode = train::EvalMode::Rolling;
  std::size_t horizon = 24;
  std::size_t days = 7;
  std::size_t samples = 100;
  std::size_t seasonal_period = 24;
  std::size_t threads = 0;
};

struct ExperimentConfig {
  DataConfig data;
  model::ModelConfig model;
  train::TrainConfig train;
  EvalConfig eval;
  std::filesystem::path out = "run";
  std::optional<std::uint64_t> seed;

  /// Conditioning length, forecast length per window, horizon and days,
  /// after applying the data source's rules.
  std::size_t t0() const;
  std::size_t tau() const;
  std::size_t horizon() const;
  std::size_t days() const;
};

/// `base` resolves a relative CSV path. Throws ConfigError.
ExperimentConfig experiment_from_json(const nlohmann::json& j, const std::filesystem::path& base = {});
ExperimentConfig load_experiment(const std::filesystem::path& path);
nlohmann::json to_json(const ExperimentConfig& config);

/// Fills the model's derived sizes (max_length, vocabulary, covariate
/// width) and validates everything that can be checked without data.
/// `series_count` is needed for per-series IDs. Throws ConfigError.
void resolve(ExperimentConfig& config, std::size_t series_count);

/// 16 hex digits of FNV-1a over the canonical JSON of the config,
/// excluding the output directory.
std::string config_hash(const ExperimentConfig& config);

struct PreparedData {
  data::TimeSeriesSet train_set;  // windows are cut from this set
  data::TimeSeriesSet eval_set;   // forecast segments are cut from this set
  data::CovariateSpec covariates;
  std::vector<data::Window> train;
  std::vector<data::Window> val;
  train::EvalOptions eval;
};

/// Loads or generates the data, resolves `config` and cuts the windows.
PreparedData prepare_data(ExperimentConfig& config);

}  // namespace logsparse::cli
