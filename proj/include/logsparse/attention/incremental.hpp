#pragma once

#include <cstddef>
#include <memory>
#include <vector>

#include "logsparse/attention/layer.hpp"
#include "logsparse/autodiff/tensor.hpp"
#include "logsparse/sparsity/pattern.hpp"

namespace logsparse::attention {

/// Tape-free evaluation of a decoder stack one position at a time for a
/// batch of independent sequences that share the parameters and the mask.
/// Keys, values and layer inputs of earlier positions are cached, so each
/// step costs one row per layer. Row t of the result equals row t of
/// stack_forward on the same inputs.
class IncrementalStack {
 public:
  IncrementalStack(std::vector<DecoderLayerParams> layers, AttentionConfig config,
                   std::shared_ptr<const sparsity::MaskMatrix> mask, std::size_t batch = 1);

  std::size_t batch() const noexcept { return batch_; }
  /// Positions consumed so far.
  std::size_t position() const noexcept { return position_; }
  std::size_t capacity() const noexcept { return mask_->length(); }

  /// Feeds the next position for every sequence. `inputs` is
  /// [batch x d_model]; returns the top layer's rows [batch x d_model].
  ad::RowMatrix step(const ad::RowMatrix& inputs);

  /// Copies the cached state of sequence 0 into `batch` sequences.
  void broadcast(std::size_t batch);

  void reset(std::size_t batch);

 private:
  struct LayerCache {
    ad::RowMatrix inputs;  // (batch * L) x d_model
    ad::RowMatrix keys;    // (batch * L) x H*d_k
    ad::RowMatrix values;  // (batch * L) x H*d_v
  };

  std::vector<DecoderLayerParams> layers_;
  AttentionConfig config_;
  std::shared_ptr<const sparsity::MaskMatrix> mask_;
  std::size_t batch_ = 0;
  std::size_t position_ = 0;
  std::vector<LayerCache> caches_;
};

}  // namespace logsparse::attention
