#include "logsparse/model/forecaster.hpp"

#include <cmath>
#include <fstream>

#include "logsparse/attention/layer.hpp"
#include "logsparse/autodiff/checkpoint.hpp"
#include "logsparse/autodiff/ops.hpp"
#include "logsparse/common/error.hpp"
#include "logsparse/sparsity/export.hpp"

namespace logsparse::model {

using ad::Shape;
using ad::Tensor;
using ad::Var;

void ModelConfig::validate() const {
  if (layers < 1) throw ConfigError("model: need at least one layer");
  if (embedding_dim < 1) throw ConfigError("model: embedding dimension must be >= 1");
  if (max_length < 1) throw ConfigError("model: max_length must be >= 1");
  if (vocabulary < 1) throw ConfigError("model: vocabulary must be >= 1");
  attention.validate();
  try {
    sparsity::validate(attention.pattern, max_length);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("model pattern: ") + e.what());
  }
}

nlohmann::json to_json(const ModelConfig& c) {
  return {{"layers", c.layers},
          {"heads", c.attention.heads},
          {"d_model", c.attention.d_model},
          {"d_k", c.attention.key_width()},
          {"d_v", c.attention.value_width()},
          {"d_ff", c.attention.ff_width()},
          {"kernel_size", c.attention.kernel_size},
          {"pattern", sparsity::to_json(c.attention.pattern)},
          {"embedding_dim", c.embedding_dim},
          {"max_length", c.max_length},
          {"vocabulary", c.vocabulary},
          {"covariate_width", c.covariate_width}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    c.layers = j.value("layers", c.layers);
    c.attention.heads = j.value("heads", c.attention.heads);
    c.attention.d_model = j.value("d_model", c.attention.d_model);
    c.attention.d_k = j.value("d_k", std::size_t{0});
    c.attention.d_v = j.value("d_v", std::size_t{0});
    c.attention.d_ff = j.value("d_ff", std::size_t{0});
    c.attention.kernel_size = j.value("kernel_size", c.attention.kernel_size);
    if (j.contains("pattern")) c.attention.pattern = sparsity::pattern_from_json(j.at("pattern"));
    c.embedding_dim = j.value("embedding_dim", c.embedding_dim);
    c.max_length = j.value("max_length", c.max_length);
    c.vocabulary = j.value("vocabulary", c.vocabulary);
    c.covariate_width = j.value("covariate_width", c.covariate_width);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  return c;
}

Forecaster::Forecaster(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  std::mt19937_64 rng(seed);
  const std::size_t d = config_.attention.d_model;
  const std::size_t e = config_.embedding_dim;
  const auto fan_in = [](std::size_t n) { return 1.0 / std::sqrt(static_cast<double>(n)); };
  params_.add("position_embedding", ad::uniform_tensor({config_.max_length, e}, fan_in(e), rng));
  params_.add("id_embedding", ad::uniform_tensor({config_.vocabulary, e}, fan_in(e), rng));
  params_.add("input_weight", ad::uniform_tensor({config_.input_width(), d}, fan_in(config_.input_width()), rng));
  params_.add("input_bias", Tensor(Shape{d}));
  for (std::size_t i = 0; i < config_.layers; ++i) {
    attention::make_layer_params(params_, "layer" + std::to_string(i), config_.attention, rng);
  }
  params_.add("head_weight", ad::uniform_tensor({d, 2}, fan_in(d), rng));
  params_.add("head_bias", Tensor(Shape{2}));
  bind();
}

void Forecaster::bind() {
  const auto get = [&](const char* name) {
    ad::Parameter* p = params_.find(name);
    if (p == nullptr) throw ArgumentError(std::string("missing parameter ") + name);
    return p;
  };
  position_ = get("position_embedding");
  id_ = get("id_embedding");
  input_weight_ = get("input_weight");
  input_bias_ = get("input_bias");
  head_weight_ = get("head_weight");
  head_bias_ = get("head_bias");
  layers_.clear();
  for (std::size_t i = 0; i < config_.layers; ++i) {
    layers_.push_back(attention::find_layer_params(params_, "layer" + std::to_string(i)));
  }
  mask_ = std::make_shared<const sparsity::MaskMatrix>(
      sparsity::build_mask(config_.attention.pattern, config_.max_length));
}

void Forecaster::save(const std::filesystem::path& dir, const nlohmann::json& extra) const {
  nlohmann::json meta = extra;
  meta["model"] = to_json(config_);
  ad::save_checkpoint(params_, dir, meta);
}

Forecaster Forecaster::load(const std::filesystem::path& dir) {
  const auto meta = ad::read_checkpoint_metadata(dir);
  if (!meta.contains("model")) throw DataError("checkpoint " + dir.string() + " has no model config");
  Forecaster model(model_config_from_json(meta.at("model")), 0);
  ad::load_checkpoint(model.params_, dir);
  return model;
}

double compute_scale(std::span<const double> z, std::size_t t0) {
  if (t0 < 1 || t0 > z.size()) throw ArgumentError("compute_scale: need 1 <= t0 <= len(z)");
  double total = 0.0;
  for (std::size_t i = 0; i < t0; ++i) total += std::abs(z[i]);
  return 1.0 + total / static_cast<double>(t0);
}

void check_window(const Forecaster& model, const data::Window& window) {
  const auto& c = model.config();
  const std::size_t L = window.length();
  if (L < 1 || L > c.max_length) {
    throw ShapeError("window length " + std::to_string(L) + " exceeds the model's max length " +
                     std::to_string(c.max_length));
  }
  if (window.z.size() != L) throw ShapeError("window z has the wrong length");
  if (window.covariates.rows() != L || window.covariates.cols() != c.covariate_width ||
      (c.covariate_width > 0 && window.covariates.rank() != 2)) {
    throw DataError("window covariates " + ad::shape_string(window.covariates.shape()) + ", model expects " +
                    std::to_string(L) + " rows of " + std::to_string(c.covariate_width));
  }
  if (window.embedding_id >= c.vocabulary) {
    throw DataError("window ID " + std::to_string(window.embedding_id) + " outside vocabulary " +
                    std::to_string(c.vocabulary));
  }
}

namespace {

const sparsity::MaskMatrix& mask_for(const Forecaster& model, std::size_t length,
                                     std::shared_ptr<const sparsity::MaskMatrix>& holder) {
  holder = mask_for_length(model, length);
  return *holder;
}

}  // namespace

std::shared_ptr<const sparsity::MaskMatrix> mask_for_length(const Forecaster& model, std::size_t length) {
  if (length == model.mask()->length()) return model.mask();
  return std::make_shared<const sparsity::MaskMatrix>(model.mask()->prefix(length));
}

Var assemble_inputs(ad::Tape& tape, const Forecaster& model, const data::Window& window, double nu) {
  check_window(model, window);
  const std::size_t L = window.length();
  Tensor lagged(Shape{L, 1});
  for (std::size_t t = 1; t < L; ++t) lagged[t] = window.z[t - 1] / nu;
  const Var position = ad::slice_rows(tape.parameter(model.position_embedding()), 0, L);
  const Var id = ad::slice_rows(tape.parameter(model.id_embedding()), window.embedding_id, 1);
  std::vector<Var> parts{tape.constant(std::move(lagged)), ad::add_row(position, id)};
  if (model.config().covariate_width > 0) parts.push_back(tape.constant(window.covariates));
  return ad::concat_columns(parts);
}

DistributionVars unscale(Var raw_mu, Var raw_sigma, double nu) {
  return {ad::scale(raw_mu, nu), ad::scale(ad::softplus(raw_sigma), nu), nu};
}

DistributionVars forward_distribution(ad::Tape& tape, const Forecaster& model, const data::Window& window,
                                      std::vector<std::vector<ad::HeadWeights>>* weights) {
  return forward_distribution_scaled(tape, model, window, compute_scale(window.z, window.t0), weights);
}

DistributionVars forward_distribution_scaled(ad::Tape& tape, const Forecaster& model, const data::Window& window,
                                             double nu, std::vector<std::vector<ad::HeadWeights>>* weights) {
  const Var inputs = assemble_inputs(tape, model, window, nu);
  const Var projected =
      ad::affine(inputs, tape.parameter(model.input_weight()), tape.parameter(model.input_bias()));
  std::shared_ptr<const sparsity::MaskMatrix> holder;
  const auto& mask = mask_for(model, window.length(), holder);
  const Var hidden = attention::stack_forward(projected, model.layers(), model.config().attention, mask, weights);
  const Var raw = ad::affine(hidden, tape.parameter(model.head_weight()), tape.parameter(model.head_bias()));
  return unscale(ad::column(raw, 0), ad::column(raw, 1), nu);
}

ForecastDistribution evaluate_distribution(const Forecaster& model, const data::Window& window) {
  ad::Tape tape;
  const auto dist = forward_distribution(tape, model, window);
  const auto mu = dist.mu.value().values();
  const auto sigma = dist.sigma.value().values();
  return {{mu.begin(), mu.end()}, {sigma.begin(), sigma.end()}};
}

Var negative_log_likelihood(const DistributionVars& dist, const data::Window& window, std::size_t begin,
                            std::size_t end) {
  return ad::gaussian_nll(dist.mu, dist.sigma, window.z, begin, end);
}

std::vector<std::filesystem::path> export_attention(const Forecaster& model, const data::Window& window,
                                                    const std::filesystem::path& dir) {
  ad::Tape tape;
  std::vector<std::vector<ad::HeadWeights>> weights;
  forward_distribution(tape, model, window, &weights);
  std::shared_ptr<const sparsity::MaskMatrix> holder;
  const auto& mask = mask_for(model, window.length(), holder);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  std::vector<std::filesystem::path> files;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    for (std::size_t h = 0; h < weights[l].size(); ++h) {
      const auto path = dir / ("layer" + std::to_string(l) + "_head" + std::to_string(h) + ".csv");
      std::ofstream out(path);
      if (!out) throw IoError("cannot write " + path.string());
      attention::write_attention_csv(mask, weights[l][h], out);
      if (!out) throw IoError("write failed for " + path.string());
      files.push_back(path);
    }
  }
  return files;
}

}  // namespace logsparse::model
