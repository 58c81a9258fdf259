#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "logsparse/autodiff/tape.hpp"
#include "logsparse/sparsity/pattern.hpp"

namespace logsparse::ad {

// Elementwise ops require identical shapes and throw ShapeError otherwise.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var x, double factor);
Var relu(Var x);  // subgradient 0 at 0
Var softplus(Var x);
Var sum(Var x);   // -> scalar
Var mean(Var x);  // -> scalar

/// [n x a] * [a x b] (or [n x a] * [b x a]^T when transpose_rhs).
Var matmul(Var lhs, Var rhs, bool transpose_rhs = false);

/// x [n x d] plus bias [d] added to every row.
Var add_row(Var x, Var bias);

/// x [n x a] * weight [a x b] + bias [b].
Var affine(Var x, Var weight, Var bias);

/// Causal 1-D convolution along rows. x is [T x c_in], kernels
/// [k x c_in x c_out], bias [c_out]. Output row t sees input rows
/// t-k+1..t; rows before the start are zero padding. Kernel slice i
/// multiplies input row t - (k - 1 - i), so slice k-1 is the current row.
Var causal_conv1d(Var x, Var kernels, Var bias);

/// Row-wise softmax of logits [L x L] restricted to the mask's allowed set;
/// disallowed entries are exactly 0. Stabilized by the allowed-entry max.
Var masked_softmax(Var logits, const sparsity::MaskMatrix& mask);

/// Post-softmax attention weights of one head, row-compressed in the
/// mask's layout: weights[mask.row offset + position].
struct HeadWeights {
  std::vector<double> values;
};

/// Scaled dot-product attention for `heads` heads packed along columns:
/// q, k are [L x heads*d_k], v is [L x heads*d_v]; head h uses column
/// block h. Only allowed pairs are scored. Returns [L x heads*d_v] with the
/// heads concatenated. When `weights` is non-null it receives one entry per
/// head.
Var multi_head_attention(Var q, Var k, Var v, const sparsity::MaskMatrix& mask,
                         std::size_t heads, std::vector<HeadWeights>* weights = nullptr);

/// Single-head form: softmax(Q K^T / sqrt(d_k), mask) V.
Var attend(Var q, Var k, Var v, const sparsity::MaskMatrix& mask);

/// Per-row normalization (population variance, eps inside the root) then
/// gain * x_hat + shift.
Var layer_norm(Var x, Var gain, Var shift, double eps = 1e-5);

/// Concatenates matrices with equal row counts along columns.
Var concat_columns(const std::vector<Var>& parts);

/// Rows [begin, begin + count) of a matrix.
Var slice_rows(Var x, std::size_t begin, std::size_t count);

/// Column `c` of a matrix as a rank-1 tensor.
Var column(Var x, std::size_t c);

/// Sum over t in [begin, end) of 0.5*ln(2*pi*sigma_t^2) + (z_t - mu_t)^2 / (2*sigma_t^2).
/// mu and sigma are rank-1 of the same length as targets.
Var gaussian_nll(Var mu, Var sigma, std::span<const double> targets,
                 std::size_t begin, std::size_t end);

}  // namespace logsparse::ad
