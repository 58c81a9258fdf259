#include "logsparse/attention/incremental.hpp"

#include <cmath>
#include <limits>

#include "logsparse/common/error.hpp"

namespace logsparse::attention {

using ad::RowMatrix;

namespace {

ad::ConstMatrixView view(const ad::Parameter* p) { return ad::as_matrix(p->value); }

auto row_vector(const ad::Parameter* p) {
  return Eigen::Map<const Eigen::RowVectorXd>(p->value.data(),
                                              static_cast<Eigen::Index>(p->value.size()));
}

void layer_norm_rows(RowMatrix& x, const ad::Parameter* gain, const ad::Parameter* shift) {
  constexpr double eps = 1e-5;
  const auto g = row_vector(gain);
  const auto s = row_vector(shift);
  const double n = static_cast<double>(x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    auto row = x.row(r);
    const double mean = row.sum() / n;
    row.array() -= mean;
    const double var = row.squaredNorm() / n;
    row *= 1.0 / std::sqrt(var + eps);
    row = row.cwiseProduct(g) + s;
  }
}

}  // namespace

IncrementalStack::IncrementalStack(std::vector<DecoderLayerParams> layers, AttentionConfig config,
                                   std::shared_ptr<const sparsity::MaskMatrix> mask,
                                   std::size_t batch)
    : layers_(std::move(layers)), config_(std::move(config)), mask_(std::move(mask)) {
  if (layers_.empty()) throw ArgumentError("IncrementalStack: need at least one layer");
  if (!mask_) throw ArgumentError("IncrementalStack: null mask");
  config_.validate();
  reset(batch);
}

void IncrementalStack::reset(std::size_t batch) {
  if (batch < 1) throw ArgumentError("IncrementalStack: batch must be >= 1");
  batch_ = batch;
  position_ = 0;
  const auto rows = static_cast<Eigen::Index>(batch * capacity());
  const auto d = static_cast<Eigen::Index>(config_.d_model);
  const auto qk = static_cast<Eigen::Index>(config_.heads * config_.key_width());
  const auto vw = static_cast<Eigen::Index>(config_.heads * config_.value_width());
  caches_.assign(layers_.size(), {});
  for (auto& c : caches_) {
    c.inputs = RowMatrix::Zero(rows, d);
    c.keys = RowMatrix::Zero(rows, qk);
    c.values = RowMatrix::Zero(rows, vw);
  }
}

void IncrementalStack::broadcast(std::size_t batch) {
  if (batch < 1) throw ArgumentError("IncrementalStack: batch must be >= 1");
  const auto L = static_cast<Eigen::Index>(capacity());
  for (auto& c : caches_) {
    const auto replicate = [&](RowMatrix& m) {
      RowMatrix out(static_cast<Eigen::Index>(batch) * L, m.cols());
      for (std::size_t b = 0; b < batch; ++b) {
        out.middleRows(static_cast<Eigen::Index>(b) * L, L) = m.topRows(L);
      }
      m.swap(out);
    };
    replicate(c.inputs);
    replicate(c.keys);
    replicate(c.values);
  }
  batch_ = batch;
}

RowMatrix IncrementalStack::step(const RowMatrix& inputs) {
  const std::size_t L = capacity();
  if (position_ >= L) throw ArgumentError("IncrementalStack: sequence is already full");
  if (static_cast<std::size_t>(inputs.rows()) != batch_ ||
      static_cast<std::size_t>(inputs.cols()) != config_.d_model) {
    throw ShapeError("IncrementalStack: expected inputs [" + std::to_string(batch_) + " x " +
                     std::to_string(config_.d_model) + "]");
  }
  const std::size_t t = position_;
  const std::size_t H = config_.heads;
  const std::size_t dk = config_.key_width();
  const std::size_t dv = config_.value_width();
  const std::size_t k = config_.kernel_size;
  const auto d = static_cast<Eigen::Index>(config_.d_model);
  const auto B = static_cast<Eigen::Index>(batch_);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dk));
  const auto cells = mask_->row(t + 1);

  RowMatrix x = inputs;
  std::vector<double> logits(cells.size());
  for (std::size_t li = 0; li < layers_.size(); ++li) {
    const auto& p = layers_[li];
    auto& cache = caches_[li];
    for (Eigen::Index b = 0; b < B; ++b) {
      cache.inputs.row(b * static_cast<Eigen::Index>(L) + static_cast<Eigen::Index>(t)) = x.row(b);
    }

    // Kernel slice i multiplies the input k-1-i rows back.
    RowMatrix window = RowMatrix::Zero(B, static_cast<Eigen::Index>(k) * d);
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t back = k - 1 - i;
      if (back > t) continue;
      for (Eigen::Index b = 0; b < B; ++b) {
        window.block(b, static_cast<Eigen::Index>(i) * d, 1, d) =
            cache.inputs.row(b * static_cast<Eigen::Index>(L) + static_cast<Eigen::Index>(t - back));
      }
    }
    RowMatrix q = window * view(p.q_kernels);
    RowMatrix key = window * view(p.k_kernels);
    RowMatrix value = x * view(p.v_weight);

    RowMatrix heads = RowMatrix::Zero(B, static_cast<Eigen::Index>(H * dv));
    for (Eigen::Index b = 0; b < B; ++b) {
      const Eigen::Index base = b * static_cast<Eigen::Index>(L);
      cache.keys.row(base + static_cast<Eigen::Index>(t)) = key.row(b);
      cache.values.row(base + static_cast<Eigen::Index>(t)) = value.row(b);
      for (std::size_t h = 0; h < H; ++h) {
        const auto qh = q.row(b).segment(static_cast<Eigen::Index>(h * dk), static_cast<Eigen::Index>(dk));
        double peak = -std::numeric_limits<double>::infinity();
        for (std::size_t r = 0; r < cells.size(); ++r) {
          const auto kj = cache.keys.row(base + static_cast<Eigen::Index>(cells[r] - 1))
                              .segment(static_cast<Eigen::Index>(h * dk), static_cast<Eigen::Index>(dk));
          logits[r] = qh.dot(kj) * inv_sqrt;
          peak = std::max(peak, logits[r]);
        }
        double total = 0.0;
        for (auto& s : logits) {
          s = std::exp(s - peak);
          total += s;
        }
        auto oh = heads.row(b).segment(static_cast<Eigen::Index>(h * dv), static_cast<Eigen::Index>(dv));
        for (std::size_t r = 0; r < cells.size(); ++r) {
          oh += (logits[r] / total) *
                cache.values.row(base + static_cast<Eigen::Index>(cells[r] - 1))
                    .segment(static_cast<Eigen::Index>(h * dv), static_cast<Eigen::Index>(dv));
        }
      }
    }

    RowMatrix a = heads * view(p.out_weight);
    a.rowwise() += row_vector(p.out_bias);
    a += x;
    layer_norm_rows(a, p.norm1_gain, p.norm1_shift);
    RowMatrix hidden = a * view(p.ff_in_weight);
    hidden.rowwise() += row_vector(p.ff_in_bias);
    hidden = hidden.cwiseMax(0.0);
    RowMatrix out = hidden * view(p.ff_out_weight);
    out.rowwise() += row_vector(p.ff_out_bias);
    out += a;
    layer_norm_rows(out, p.norm2_gain, p.norm2_shift);
    x.swap(out);
  }
  ++position_;
  return x;
}

}  // namespace logsparse::attention
