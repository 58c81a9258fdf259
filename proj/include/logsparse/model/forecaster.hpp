#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <vector>

#include "json.hpp"

#include "logsparse/attention/layer.hpp"
#include "logsparse/autodiff/parameter.hpp"
#include "logsparse/autodiff/tape.hpp"
#include "logsparse/data/windows.hpp"
#include "logsparse/sparsity/pattern.hpp"

namespace logsparse::model {

struct ModelConfig {
  std::size_t layers = 3;
  attention::AttentionConfig attention;
  std::size_t embedding_dim = 20;  // position and ID embeddings (summed)
  std::size_t max_length = 72;     // t0 + tau
  std::size_t vocabulary = 1;      // number of ID embeddings
  std::size_t covariate_width = 0;

  /// z, embedding, covariates.
  std::size_t input_width() const noexcept { return 1 + embedding_dim + covariate_width; }

  /// Throws ConfigError; also validates the pattern against max_length.
  void validate() const;
};

nlohmann::json to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);

/// Parameters and handles of the full forecasting network:
/// input projection -> decoder stack -> (mu, sigma) head.
class Forecaster {
 public:
  Forecaster(ModelConfig config, std::uint64_t seed);

  Forecaster(Forecaster&&) noexcept = default;
  Forecaster& operator=(Forecaster&&) noexcept = default;

  const ModelConfig& config() const noexcept { return config_; }
  ad::ParameterStore& parameters() noexcept { return params_; }
  const ad::ParameterStore& parameters() const noexcept { return params_; }
  const std::vector<attention::DecoderLayerParams>& layers() const noexcept { return layers_; }

  /// The attention mask of a full-length window, shared by every layer.
  const std::shared_ptr<const sparsity::MaskMatrix>& mask() const noexcept { return mask_; }

  ad::Parameter& position_embedding() const noexcept { return *position_; }  // [max_length x E]
  ad::Parameter& id_embedding() const noexcept { return *id_; }              // [vocabulary x E]
  ad::Parameter& input_weight() const noexcept { return *input_weight_; }    // [input_width x d_model]
  ad::Parameter& input_bias() const noexcept { return *input_bias_; }
  ad::Parameter& head_weight() const noexcept { return *head_weight_; }      // [d_model x 2]
  ad::Parameter& head_bias() const noexcept { return *head_bias_; }          // [2]

  /// Writes a checkpoint whose metadata carries the config.
  void save(const std::filesystem::path& dir, const nlohmann::json& extra = nlohmann::json::object()) const;
  static Forecaster load(const std::filesystem::path& dir);

 private:
  ModelConfig config_;
  ad::ParameterStore params_;
  std::vector<attention::DecoderLayerParams> layers_;
  std::shared_ptr<const sparsity::MaskMatrix> mask_;
  ad::Parameter* position_ = nullptr;
  ad::Parameter* id_ = nullptr;
  ad::Parameter* input_weight_ = nullptr;
  ad::Parameter* input_bias_ = nullptr;
  ad::Parameter* head_weight_ = nullptr;
  ad::Parameter* head_bias_ = nullptr;

  void bind();
};

/// Throws ShapeError/DataError unless the window fits the model: length at
/// most max_length, covariate width and ID within range.
void check_window(const Forecaster& model, const data::Window& window);

/// The model mask restricted to the first `length` positions, so shorter
/// windows see the same pattern as full-length ones.
std::shared_ptr<const sparsity::MaskMatrix> mask_for_length(const Forecaster& model, std::size_t length);

/// nu = 1 + mean |z_1..z_t0|. The absolute value keeps nu >= 1 for series
/// with negative values; for non-negative data it is 1 + mean.
double compute_scale(std::span<const double> z, std::size_t t0);

/// Unscaled input rows [L x input_width]: row t is
/// [z_{t-1} / nu, position_t + id, covariates_t] with z_0 = 0.
ad::Var assemble_inputs(ad::Tape& tape, const Forecaster& model, const data::Window& window, double nu);

struct DistributionVars {
  ad::Var mu;     // [L]
  ad::Var sigma;  // [L]
  double nu = 1.0;
};

/// mu_t = raw_t * nu and sigma_t = softplus(raw'_t) * nu for every position of
/// the window; position t only sees inputs at positions <= t.
/// `weights`, when given, receives per-layer, per-head attention.
DistributionVars forward_distribution(ad::Tape& tape, const Forecaster& model, const data::Window& window,
                                      std::vector<std::vector<ad::HeadWeights>>* weights = nullptr);

/// forward_distribution with a caller-supplied scale instead of the one
/// computed from the window.
DistributionVars forward_distribution_scaled(ad::Tape& tape, const Forecaster& model, const data::Window& window,
                                             double nu,
                                             std::vector<std::vector<ad::HeadWeights>>* weights = nullptr);

/// The scaling stage alone: mu = raw_mu * nu, sigma = softplus(raw_sigma) * nu.
DistributionVars unscale(ad::Var raw_mu, ad::Var raw_sigma, double nu);

struct ForecastDistribution {
  std::vector<double> mu;
  std::vector<double> sigma;
};

ForecastDistribution evaluate_distribution(const Forecaster& model, const data::Window& window);

/// Sum of Gaussian negative log-likelihoods over window positions
/// [begin, end) (0-based).
ad::Var negative_log_likelihood(const DistributionVars& dist, const data::Window& window, std::size_t begin,
                                std::size_t end);

/// Writes layer<l>_head<h>.csv (dense, zeros outside the mask) for every
/// layer and head and returns the paths.
std::vector<std::filesystem::path> export_attention(const Forecaster& model, const data::Window& window,
                                                    const std::filesystem::path& dir);

}  // namespace logsparse::model
