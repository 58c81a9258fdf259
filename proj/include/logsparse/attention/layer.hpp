#pragma once

#include <cstddef>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include "logsparse/autodiff/ops.hpp"
#include "logsparse/autodiff/parameter.hpp"
#include "logsparse/autodiff/tape.hpp"
#include "logsparse/sparsity/pattern.hpp"

namespace logsparse::attention {

struct AttentionConfig {
  std::size_t heads = 4;
  std::size_t d_model = 32;
  std::size_t d_k = 0;   // 0: d_model / heads
  std::size_t d_v = 0;   // 0: d_model / heads
  std::size_t kernel_size = 1;
  std::size_t d_ff = 0;  // 0: 4 * d_model
  sparsity::PatternSpec pattern = sparsity::PatternSpec::full_causal();

  std::size_t key_width() const { return d_k != 0 ? d_k : d_model / heads; }
  std::size_t value_width() const { return d_v != 0 ? d_v : d_model / heads; }
  std::size_t ff_width() const { return d_ff != 0 ? d_ff : 4 * d_model; }

  /// Throws ConfigError on an inconsistent configuration.
  void validate() const;
};

/// Handles into a ParameterStore. Heads are packed along columns: head h
/// owns columns [h*d_k, (h+1)*d_k) of the query/key kernels and
/// [h*d_v, (h+1)*d_v) of the value projection.
struct DecoderLayerParams {
  ad::Parameter* q_kernels = nullptr;  // [k x d_model x H*d_k]
  ad::Parameter* k_kernels = nullptr;
  ad::Parameter* v_weight = nullptr;   // [d_model x H*d_v]
  ad::Parameter* out_weight = nullptr;  // [H*d_v x d_model]
  ad::Parameter* out_bias = nullptr;
  ad::Parameter* ff_in_weight = nullptr;   // [d_model x d_ff]
  ad::Parameter* ff_in_bias = nullptr;
  ad::Parameter* ff_out_weight = nullptr;  // [d_ff x d_model]
  ad::Parameter* ff_out_bias = nullptr;
  ad::Parameter* norm1_gain = nullptr;
  ad::Parameter* norm1_shift = nullptr;
  ad::Parameter* norm2_gain = nullptr;
  ad::Parameter* norm2_shift = nullptr;
};

/// Registers one layer's parameters as "<prefix>.<name>". Weights are
/// U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases and shifts 0, gains 1.
/// Query, key and value projections carry no bias.
DecoderLayerParams make_layer_params(ad::ParameterStore& store, const std::string& prefix,
                                     const AttentionConfig& config, std::mt19937_64& rng);

/// Re-binds handles by name, e.g. after loading a store from a checkpoint.
DecoderLayerParams find_layer_params(ad::ParameterStore& store, const std::string& prefix);

struct Projections {
  ad::Var q;  // [L x H*d_k]
  ad::Var k;  // [L x H*d_k]
  ad::Var v;  // [L x H*d_v]
};

Projections project_qkv(ad::Var y, const DecoderLayerParams& params, const AttentionConfig& config);

/// Post-norm layer: LN(y + attn(y)), then LN(a + FF(a)).
/// `weights`, when given, receives one entry per head.
ad::Var decoder_layer(ad::Var y, const DecoderLayerParams& params, const AttentionConfig& config,
                      const sparsity::MaskMatrix& mask,
                      std::vector<ad::HeadWeights>* weights = nullptr);

/// Applies every layer in order with the same mask. `weights`, when given,
/// receives one vector of heads per layer.
ad::Var stack_forward(ad::Var y, const std::vector<DecoderLayerParams>& layers,
                      const AttentionConfig& config, const sparsity::MaskMatrix& mask,
                      std::vector<std::vector<ad::HeadWeights>>* weights = nullptr);

/// Expands one head's compressed weights to a dense [L x L] matrix with
/// zeros outside the mask.
ad::Tensor dense_attention(const sparsity::MaskMatrix& mask, const ad::HeadWeights& weights);

/// Dense matrix as CSV, one row per query position, full precision.
void write_attention_csv(const sparsity::MaskMatrix& mask, const ad::HeadWeights& weights,
                         std::ostream& out);

}  // namespace logsparse::attention
