#include "logsparse/attention/layer.hpp"

#include <cmath>
#include <ostream>

#include "logsparse/common/error.hpp"

namespace logsparse::attention {

using ad::Parameter;
using ad::Shape;
using ad::Tensor;
using ad::Var;

void AttentionConfig::validate() const {
  if (heads < 1) throw ConfigError("attention: heads must be >= 1");
  if (d_model < 2) throw ConfigError("attention: d_model must be >= 2");
  if (kernel_size < 1) throw ConfigError("attention: kernel size must be >= 1");
  if (key_width() < 1 || value_width() < 1) {
    throw ConfigError("attention: per-head widths must be >= 1 (d_model " + std::to_string(d_model) +
                      ", heads " + std::to_string(heads) + ")");
  }
  if (ff_width() < 1) throw ConfigError("attention: feedforward width must be >= 1");
}

namespace {

Parameter& add_uniform(ad::ParameterStore& store, const std::string& name, Shape shape,
                       std::size_t fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  return store.add(name, ad::uniform_tensor(std::move(shape), bound, rng));
}

Parameter& add_constant(ad::ParameterStore& store, const std::string& name, std::size_t n,
                        double value) {
  return store.add(name, Tensor(Shape{n}, value));
}

Parameter* require(ad::ParameterStore& store, const std::string& name) {
  Parameter* p = store.find(name);
  if (p == nullptr) throw ArgumentError("missing parameter " + name);
  return p;
}

}  // namespace

DecoderLayerParams make_layer_params(ad::ParameterStore& store, const std::string& prefix,
                                     const AttentionConfig& config, std::mt19937_64& rng) {
  config.validate();
  const std::size_t d = config.d_model;
  const std::size_t k = config.kernel_size;
  const std::size_t qk = config.heads * config.key_width();
  const std::size_t vw = config.heads * config.value_width();
  const std::size_t ff = config.ff_width();
  const auto name = [&](const char* part) { return prefix + "." + part; };

  DecoderLayerParams p;
  p.q_kernels = &add_uniform(store, name("q_kernels"), {k, d, qk}, k * d, rng);
  p.k_kernels = &add_uniform(store, name("k_kernels"), {k, d, qk}, k * d, rng);
  p.v_weight = &add_uniform(store, name("v_weight"), {d, vw}, d, rng);
  p.out_weight = &add_uniform(store, name("out_weight"), {vw, d}, vw, rng);
  p.out_bias = &add_constant(store, name("out_bias"), d, 0.0);
  p.ff_in_weight = &add_uniform(store, name("ff_in_weight"), {d, ff}, d, rng);
  p.ff_in_bias = &add_constant(store, name("ff_in_bias"), ff, 0.0);
  p.ff_out_weight = &add_uniform(store, name("ff_out_weight"), {ff, d}, ff, rng);
  p.ff_out_bias = &add_constant(store, name("ff_out_bias"), d, 0.0);
  p.norm1_gain = &add_constant(store, name("norm1_gain"), d, 1.0);
  p.norm1_shift = &add_constant(store, name("norm1_shift"), d, 0.0);
  p.norm2_gain = &add_constant(store, name("norm2_gain"), d, 1.0);
  p.norm2_shift = &add_constant(store, name("norm2_shift"), d, 0.0);
  return p;
}

DecoderLayerParams find_layer_params(ad::ParameterStore& store, const std::string& prefix) {
  const auto get = [&](const char* part) { return require(store, prefix + "." + part); };
  DecoderLayerParams p;
  p.q_kernels = get("q_kernels");
  p.k_kernels = get("k_kernels");
  p.v_weight = get("v_weight");
  p.out_weight = get("out_weight");
  p.out_bias = get("out_bias");
  p.ff_in_weight = get("ff_in_weight");
  p.ff_in_bias = get("ff_in_bias");
  p.ff_out_weight = get("ff_out_weight");
  p.ff_out_bias = get("ff_out_bias");
  p.norm1_gain = get("norm1_gain");
  p.norm1_shift = get("norm1_shift");
  p.norm2_gain = get("norm2_gain");
  p.norm2_shift = get("norm2_shift");
  return p;
}

Projections project_qkv(Var y, const DecoderLayerParams& params, const AttentionConfig& config) {
  if (y.value().rank() != 2 || y.value().cols() != config.d_model) {
    throw ShapeError("project_qkv: input " + ad::shape_string(y.shape()) + " vs d_model " +
                     std::to_string(config.d_model));
  }
  ad::Tape& tape = y.tape();
  const Var no_qk_bias = tape.constant(Tensor(Shape{params.q_kernels->value.cols()}));
  Projections out;
  out.q = ad::causal_conv1d(y, tape.parameter(*params.q_kernels), no_qk_bias);
  out.k = ad::causal_conv1d(y, tape.parameter(*params.k_kernels), no_qk_bias);
  out.v = ad::matmul(y, tape.parameter(*params.v_weight));
  return out;
}

Var decoder_layer(Var y, const DecoderLayerParams& params, const AttentionConfig& config,
                  const sparsity::MaskMatrix& mask, std::vector<ad::HeadWeights>* weights) {
  ad::Tape& tape = y.tape();
  const auto qkv = project_qkv(y, params, config);
  const Var heads = ad::multi_head_attention(qkv.q, qkv.k, qkv.v, mask, config.heads, weights);
  const Var mixed =
      ad::affine(heads, tape.parameter(*params.out_weight), tape.parameter(*params.out_bias));
  const Var a = ad::layer_norm(ad::add(y, mixed), tape.parameter(*params.norm1_gain),
                               tape.parameter(*params.norm1_shift));
  const Var hidden = ad::relu(
      ad::affine(a, tape.parameter(*params.ff_in_weight), tape.parameter(*params.ff_in_bias)));
  const Var ff =
      ad::affine(hidden, tape.parameter(*params.ff_out_weight), tape.parameter(*params.ff_out_bias));
  return ad::layer_norm(ad::add(a, ff), tape.parameter(*params.norm2_gain),
                        tape.parameter(*params.norm2_shift));
}

Var stack_forward(Var y, const std::vector<DecoderLayerParams>& layers, const AttentionConfig& config,
                  const sparsity::MaskMatrix& mask,
                  std::vector<std::vector<ad::HeadWeights>>* weights) {
  if (layers.empty()) throw ArgumentError("stack_forward: need at least one layer");
  if (weights != nullptr) weights->assign(layers.size(), {});
  for (std::size_t i = 0; i < layers.size(); ++i) {
    y = decoder_layer(y, layers[i], config, mask, weights != nullptr ? &(*weights)[i] : nullptr);
  }
  return y;
}

Tensor dense_attention(const sparsity::MaskMatrix& mask, const ad::HeadWeights& weights) {
  if (weights.values.size() != mask.nnz()) {
    throw ShapeError("attention weights have " + std::to_string(weights.values.size()) +
                     " entries, mask has " + std::to_string(mask.nnz()));
  }
  const std::size_t L = mask.length();
  Tensor dense(Shape{L, L});
  std::size_t e = 0;
  for (std::size_t l = 1; l <= L; ++l) {
    for (const std::size_t j : mask.row(l)) dense(l - 1, j - 1) = weights.values[e++];
  }
  return dense;
}

void write_attention_csv(const sparsity::MaskMatrix& mask, const ad::HeadWeights& weights,
                         std::ostream& out) {
  const Tensor dense = dense_attention(mask, weights);
  const auto old_precision = out.precision(17);
  for (std::size_t r = 0; r < dense.rows(); ++r) {
    for (std::size_t c = 0; c < dense.cols(); ++c) {
      if (c != 0) out << ',';
      out << dense(r, c);
    }
    out << '\n';
  }
  out.precision(old_precision);
}

}  // namespace logsparse::attention
