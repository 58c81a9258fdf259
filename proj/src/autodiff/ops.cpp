#include "logsparse/autodiff/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <string>

#include "logsparse/common/error.hpp"

namespace logsparse::ad {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(op) + ": shape " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw ShapeError(std::string(op) + ": expected a matrix, got " + shape_string(t.shape()));
  }
}

double stable_softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Var add(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  as_matrix(out) += as_matrix(b.value());
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape& tape, std::size_t self) {
    const Tensor& g = tape.grad(self);
    if (Tensor* ga = tape.grad_if_needed(a.id())) as_matrix(*ga) += as_matrix(g);
    if (Tensor* gb = tape.grad_if_needed(b.id())) as_matrix(*gb) += as_matrix(g);
  });
}

Var sub(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  as_matrix(out) -= as_matrix(b.value());
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape& tape, std::size_t self) {
    const Tensor& g = tape.grad(self);
    if (Tensor* ga = tape.grad_if_needed(a.id())) as_matrix(*ga) += as_matrix(g);
    if (Tensor* gb = tape.grad_if_needed(b.id())) as_matrix(*gb) -= as_matrix(g);
  });
}

Var mul(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  as_matrix(out).array() *= as_matrix(b.value()).array();
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape& tape, std::size_t self) {
    const Tensor& g = tape.grad(self);
    if (Tensor* ga = tape.grad_if_needed(a.id())) {
      as_matrix(*ga).array() += as_matrix(g).array() * as_matrix(tape.value(b.id())).array();
    }
    if (Tensor* gb = tape.grad_if_needed(b.id())) {
      as_matrix(*gb).array() += as_matrix(g).array() * as_matrix(tape.value(a.id())).array();
    }
  });
}

Var scale(Var x, double factor) {
  Tensor out = x.value();
  as_matrix(out) *= factor;
  return x.tape().record(std::move(out), {x}, [x, factor](Tape& tape, std::size_t self) {
    as_matrix(tape.grad(x.id())) += factor * as_matrix(tape.grad(self));
  });
}

Var relu(Var x) {
  Tensor out = x.value();
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  return x.tape().record(std::move(out), {x}, [x](Tape& tape, std::size_t self) {
    const Tensor& g = tape.grad(self);
    const Tensor& in = tape.value(x.id());
    Tensor& gx = tape.grad(x.id());
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (in[i] > 0.0) gx[i] += g[i];
    }
  });
}

Var softplus(Var x) {
  Tensor out = x.value();
  for (double& v : out.values()) v = stable_softplus(v);
  return x.tape().record(std::move(out), {x}, [x](Tape& tape, std::size_t self) {
    const Tensor& g = tape.grad(self);
    const Tensor& in = tape.value(x.id());
    Tensor& gx = tape.grad(x.id());
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * sigmoid(in[i]);
  });
}

Var sum(Var x) {
  const Tensor out = Tensor::scalar(as_matrix(x.value()).sum());
  return x.tape().record(out, {x}, [x](Tape& tape, std::size_t self) {
    const double g = tape.grad(self)[0];
    as_matrix(tape.grad(x.id())).array() += g;
  });
}

Var mean(Var x) {
  const std::size_t n = x.value().size();
  if (n == 0) throw ShapeError("mean of empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(n));
}

Var matmul(Var lhs, Var rhs, bool transpose_rhs) {
  const Tensor& a = lhs.value();
  const Tensor& b = rhs.value();
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t inner_b = transpose_rhs ? b.cols() : b.rows();
  if (a.cols() != inner_b) {
    throw ShapeError("matmul: " + shape_string(a.shape()) + " x " + shape_string(b.shape()) +
                     (transpose_rhs ? "^T" : ""));
  }
  const std::size_t out_cols = transpose_rhs ? b.rows() : b.cols();
  Tensor out(Shape{a.rows(), out_cols});
  if (transpose_rhs) {
    as_matrix(out).noalias() = as_matrix(a) * as_matrix(b).transpose();
  } else {
    as_matrix(out).noalias() = as_matrix(a) * as_matrix(b);
  }
  return lhs.tape().record(std::move(out), {lhs, rhs},
                           [lhs, rhs, transpose_rhs](Tape& tape, std::size_t self) {
    const auto g = as_matrix(tape.grad(self));
    const auto av = as_matrix(tape.value(lhs.id()));
    const auto bv = as_matrix(tape.value(rhs.id()));
    if (Tensor* ga = tape.grad_if_needed(lhs.id())) {
      if (transpose_rhs) {
        as_matrix(*ga).noalias() += g * bv;
      } else {
        as_matrix(*ga).noalias() += g * bv.transpose();
      }
    }
    if (Tensor* gb = tape.grad_if_needed(rhs.id())) {
      if (transpose_rhs) {
        as_matrix(*gb).noalias() += g.transpose() * av;
      } else {
        as_matrix(*gb).noalias() += av.transpose() * g;
      }
    }
  });
}

Var add_row(Var x, Var bias) {
  const Tensor& xv = x.value();
  const Tensor& bv = bias.value();
  require_matrix(xv, "add_row");
  if (bv.size() != xv.cols()) {
    throw ShapeError("add_row: bias " + shape_string(bv.shape()) + " for rows of width " +
                     std::to_string(xv.cols()));
  }
  Tensor out = xv;
  const auto brow = ConstMatrixView(bv.data(), 1, static_cast<Eigen::Index>(bv.size()));
  as_matrix(out).rowwise() += brow.row(0);
  return x.tape().record(std::move(out), {x, bias}, [x, bias](Tape& tape, std::size_t self) {
    const Tensor& g = tape.grad(self);
    if (Tensor* gx = tape.grad_if_needed(x.id())) as_matrix(*gx) += as_matrix(g);
    if (Tensor* gb = tape.grad_if_needed(bias.id())) {
      MatrixView(gb->data(), 1, static_cast<Eigen::Index>(gb->size())) +=
          as_matrix(g).colwise().sum();
    }
  });
}

Var affine(Var x, Var weight, Var bias) {
  const Tensor& xv = x.value();
  const Tensor& wv = weight.value();
  const Tensor& bv = bias.value();
  require_matrix(xv, "affine");
  require_matrix(wv, "affine");
  if (xv.cols() != wv.rows() || bv.size() != wv.cols()) {
    throw ShapeError("affine: x " + shape_string(xv.shape()) + ", W " + shape_string(wv.shape()) +
                     ", bias " + shape_string(bv.shape()));
  }
  Tensor out(Shape{xv.rows(), wv.cols()});
  auto o = as_matrix(out);
  o.noalias() = as_matrix(xv) * as_matrix(wv);
  o.rowwise() += ConstMatrixView(bv.data(), 1, static_cast<Eigen::Index>(bv.size())).row(0);
  return x.tape().record(std::move(out), {x, weight, bias},
                         [x, weight, bias](Tape& tape, std::size_t self) {
    const auto g = as_matrix(tape.grad(self));
    if (Tensor* gx = tape.grad_if_needed(x.id())) {
      as_matrix(*gx).noalias() += g * as_matrix(tape.value(weight.id())).transpose();
    }
    if (Tensor* gw = tape.grad_if_needed(weight.id())) {
      as_matrix(*gw).noalias() += as_matrix(tape.value(x.id())).transpose() * g;
    }
    if (Tensor* gb = tape.grad_if_needed(bias.id())) {
      MatrixView(gb->data(), 1, static_cast<Eigen::Index>(gb->size())) += g.colwise().sum();
    }
  });
}

Var causal_conv1d(Var x, Var kernels, Var bias) {
  const Tensor& xv = x.value();
  const Tensor& kv = kernels.value();
  const Tensor& bv = bias.value();
  require_matrix(xv, "causal_conv1d");
  if (kv.rank() != 3) {
    throw ShapeError("causal_conv1d: kernels must be [k x c_in x c_out], got " +
                     shape_string(kv.shape()));
  }
  const std::size_t k = kv.shape()[0];
  const std::size_t c_in = kv.shape()[1];
  const std::size_t c_out = kv.shape()[2];
  if (k < 1) throw ArgumentError("causal_conv1d: kernel size must be at least 1");
  if (xv.cols() != c_in || bv.size() != c_out) {
    throw ShapeError("causal_conv1d: x " + shape_string(xv.shape()) + ", kernels " +
                     shape_string(kv.shape()) + ", bias " + shape_string(bv.shape()));
  }
  const auto T = static_cast<Eigen::Index>(xv.rows());
  const auto ci = static_cast<Eigen::Index>(c_in);
  Tensor out(Shape{xv.rows(), c_out});
  auto o = as_matrix(out);
  const auto xm = as_matrix(xv);
  const auto km = as_matrix(kv);  // (k * c_in) x c_out
  o.rowwise() = ConstMatrixView(bv.data(), 1, static_cast<Eigen::Index>(c_out)).row(0);
  for (std::size_t i = 0; i < k; ++i) {
    const auto shift = static_cast<Eigen::Index>(k - 1 - i);
    if (shift >= T) continue;
    const auto n = T - shift;
    o.bottomRows(n).noalias() += xm.topRows(n) * km.middleRows(static_cast<Eigen::Index>(i) * ci, ci);
  }
  return x.tape().record(std::move(out), {x, kernels, bias},
                         [x, kernels, bias, k, ci](Tape& tape, std::size_t self) {
    const auto g = as_matrix(tape.grad(self));
    const auto T = g.rows();
    const auto xm = as_matrix(tape.value(x.id()));
    const auto km = as_matrix(tape.value(kernels.id()));
    Tensor* gx = tape.grad_if_needed(x.id());
    Tensor* gk = tape.grad_if_needed(kernels.id());
    for (std::size_t i = 0; i < k; ++i) {
      const auto shift = static_cast<Eigen::Index>(k - 1 - i);
      if (shift >= T) continue;
      const auto n = T - shift;
      const auto block = static_cast<Eigen::Index>(i) * ci;
      if (gx) {
        as_matrix(*gx).topRows(n).noalias() += g.bottomRows(n) * km.middleRows(block, ci).transpose();
      }
      if (gk) {
        as_matrix(*gk).middleRows(block, ci).noalias() += xm.topRows(n).transpose() * g.bottomRows(n);
      }
    }
    if (Tensor* gb = tape.grad_if_needed(bias.id())) {
      MatrixView(gb->data(), 1, static_cast<Eigen::Index>(gb->size())) += g.colwise().sum();
    }
  });
}

Var masked_softmax(Var logits, const sparsity::MaskMatrix& mask) {
  const Tensor& lv = logits.value();
  require_matrix(lv, "masked_softmax");
  const std::size_t L = mask.length();
  if (lv.rows() != L || lv.cols() != L) {
    throw ShapeError("masked_softmax: logits " + shape_string(lv.shape()) + " for mask of length " +
                     std::to_string(L));
  }
  Tensor out(Shape{L, L});
  for (std::size_t l = 1; l <= L; ++l) {
    const auto row = mask.row(l);
    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t j : row) peak = std::max(peak, lv(l - 1, j - 1));
    double total = 0.0;
    for (std::size_t j : row) {
      const double e = std::exp(lv(l - 1, j - 1) - peak);
      out(l - 1, j - 1) = e;
      total += e;
    }
    for (std::size_t j : row) out(l - 1, j - 1) /= total;
  }
  auto shared = std::make_shared<const sparsity::MaskMatrix>(mask);
  return logits.tape().record(std::move(out), {logits}, [logits, shared](Tape& tape, std::size_t self) {
    const Tensor& g = tape.grad(self);
    const Tensor& w = tape.value(self);
    Tensor& gl = tape.grad(logits.id());
    for (std::size_t l = 1; l <= shared->length(); ++l) {
      const auto row = shared->row(l);
      double dot = 0.0;
      for (std::size_t j : row) dot += w(l - 1, j - 1) * g(l - 1, j - 1);
      for (std::size_t j : row) gl(l - 1, j - 1) += w(l - 1, j - 1) * (g(l - 1, j - 1) - dot);
    }
  });
}

Var multi_head_attention(Var q, Var k, Var v, const sparsity::MaskMatrix& mask,
                         std::size_t heads, std::vector<HeadWeights>* weights) {
  const Tensor& qv = q.value();
  const Tensor& kv = k.value();
  const Tensor& vv = v.value();
  require_matrix(qv, "attention");
  require_matrix(kv, "attention");
  require_matrix(vv, "attention");
  const std::size_t L = mask.length();
  if (heads < 1) throw ArgumentError("attention: need at least one head");
  if (qv.rows() != L || kv.rows() != L || vv.rows() != L) {
    throw ShapeError("attention: sequence length does not match mask length " + std::to_string(L));
  }
  if (!qv.same_shape(kv) || qv.cols() % heads != 0 || vv.cols() % heads != 0) {
    throw ShapeError("attention: q " + shape_string(qv.shape()) + ", k " + shape_string(kv.shape()) +
                     ", v " + shape_string(vv.shape()) + " with " + std::to_string(heads) + " heads");
  }
  const std::size_t dk = qv.cols() / heads;
  const std::size_t dv = vv.cols() / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dk));
  const std::size_t nnz = mask.nnz();

  // probs[h * nnz + e] is the weight of the e-th allowed pair for head h.
  std::vector<double> probs(heads * nnz);
  Tensor out(Shape{L, heads * dv});
  for (std::size_t h = 0; h < heads; ++h) {
    std::size_t e = 0;
    for (std::size_t l = 1; l <= L; ++l) {
      const auto row = mask.row(l);
      const double* ql = qv.data() + (l - 1) * qv.cols() + h * dk;
      double* p = probs.data() + h * nnz + e;
      double peak = -std::numeric_limits<double>::infinity();
      for (std::size_t r = 0; r < row.size(); ++r) {
        const double* kj = kv.data() + (row[r] - 1) * kv.cols() + h * dk;
        double s = 0.0;
        for (std::size_t c = 0; c < dk; ++c) s += ql[c] * kj[c];
        p[r] = s * inv_sqrt;
        peak = std::max(peak, p[r]);
      }
      double total = 0.0;
      for (std::size_t r = 0; r < row.size(); ++r) {
        p[r] = std::exp(p[r] - peak);
        total += p[r];
      }
      double* ol = out.data() + (l - 1) * out.cols() + h * dv;
      for (std::size_t r = 0; r < row.size(); ++r) {
        p[r] /= total;
        const double* vj = vv.data() + (row[r] - 1) * vv.cols() + h * dv;
        for (std::size_t c = 0; c < dv; ++c) ol[c] += p[r] * vj[c];
      }
      e += row.size();
    }
  }
  if (weights != nullptr) {
    weights->assign(heads, HeadWeights{});
    for (std::size_t h = 0; h < heads; ++h) {
      (*weights)[h].values.assign(probs.begin() + static_cast<std::ptrdiff_t>(h * nnz),
                                  probs.begin() + static_cast<std::ptrdiff_t>((h + 1) * nnz));
    }
  }

  auto shared = std::make_shared<const sparsity::MaskMatrix>(mask);
  return q.tape().record(std::move(out), {q, k, v},
                         [q, k, v, shared, heads, dk, dv, inv_sqrt, nnz,
                          probs = std::move(probs)](Tape& tape, std::size_t self) {
    const Tensor& g = tape.grad(self);
    const Tensor& qv = tape.value(q.id());
    const Tensor& kv = tape.value(k.id());
    const Tensor& vv = tape.value(v.id());
    Tensor* gq = tape.grad_if_needed(q.id());
    Tensor* gk = tape.grad_if_needed(k.id());
    Tensor* gv = tape.grad_if_needed(v.id());
    std::vector<double> dlogit;
    for (std::size_t h = 0; h < heads; ++h) {
      std::size_t e = 0;
      for (std::size_t l = 1; l <= shared->length(); ++l) {
        const auto row = shared->row(l);
        const double* p = probs.data() + h * nnz + e;
        const double* gl = g.data() + (l - 1) * g.cols() + h * dv;
        dlogit.assign(row.size(), 0.0);
        double dot = 0.0;
        for (std::size_t r = 0; r < row.size(); ++r) {
          const std::size_t j = row[r] - 1;
          const double* vj = vv.data() + j * vv.cols() + h * dv;
          double dw = 0.0;
          for (std::size_t c = 0; c < dv; ++c) dw += gl[c] * vj[c];
          dlogit[r] = dw;
          dot += p[r] * dw;
          if (gv) {
            double* gvj = gv->data() + j * gv->cols() + h * dv;
            for (std::size_t c = 0; c < dv; ++c) gvj[c] += p[r] * gl[c];
          }
        }
        const double* ql = qv.data() + (l - 1) * qv.cols() + h * dk;
        double* gql = gq ? gq->data() + (l - 1) * gq->cols() + h * dk : nullptr;
        for (std::size_t r = 0; r < row.size(); ++r) {
          const double ds = p[r] * (dlogit[r] - dot) * inv_sqrt;
          const std::size_t j = row[r] - 1;
          if (gql) {
            const double* kj = kv.data() + j * kv.cols() + h * dk;
            for (std::size_t c = 0; c < dk; ++c) gql[c] += ds * kj[c];
          }
          if (gk) {
            double* gkj = gk->data() + j * gk->cols() + h * dk;
            for (std::size_t c = 0; c < dk; ++c) gkj[c] += ds * ql[c];
          }
        }
        e += row.size();
      }
    }
  });
}

Var attend(Var q, Var k, Var v, const sparsity::MaskMatrix& mask) {
  return multi_head_attention(q, k, v, mask, 1);
}

Var layer_norm(Var x, Var gain, Var shift, double eps) {
  const Tensor& xv = x.value();
  require_matrix(xv, "layer_norm");
  const std::size_t n = xv.rows();
  const std::size_t d = xv.cols();
  if (gain.value().size() != d || shift.value().size() != d) {
    throw ShapeError("layer_norm: gain/shift must have " + std::to_string(d) + " entries");
  }
  if (d < 2) throw ShapeError("layer_norm: need at least 2 features");
  Tensor normalized(Shape{n, d});
  std::vector<double> inv_std(n);
  Tensor out(Shape{n, d});
  const Tensor& gv = gain.value();
  const Tensor& sv = shift.value();
  for (std::size_t r = 0; r < n; ++r) {
    double mu = 0.0;
    for (std::size_t c = 0; c < d; ++c) mu += xv(r, c);
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t c = 0; c < d; ++c) var += (xv(r, c) - mu) * (xv(r, c) - mu);
    var /= static_cast<double>(d);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < d; ++c) {
      normalized(r, c) = (xv(r, c) - mu) * inv_std[r];
      out(r, c) = gv[c] * normalized(r, c) + sv[c];
    }
  }
  return x.tape().record(std::move(out), {x, gain, shift},
                         [x, gain, shift, normalized = std::move(normalized),
                          inv_std = std::move(inv_std)](Tape& tape, std::size_t self) {
    const Tensor& g = tape.grad(self);
    const Tensor& gv = tape.value(gain.id());
    const std::size_t n = g.rows();
    const std::size_t d = g.cols();
    Tensor* gx = tape.grad_if_needed(x.id());
    Tensor* gg = tape.grad_if_needed(gain.id());
    Tensor* gs = tape.grad_if_needed(shift.id());
    for (std::size_t r = 0; r < n; ++r) {
      double mean_dxhat = 0.0;
      double mean_dxhat_xhat = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        const double dxhat = g(r, c) * gv[c];
        mean_dxhat += dxhat;
        mean_dxhat_xhat += dxhat * normalized(r, c);
        if (gg) (*gg)[c] += g(r, c) * normalized(r, c);
        if (gs) (*gs)[c] += g(r, c);
      }
      if (!gx) continue;
      mean_dxhat /= static_cast<double>(d);
      mean_dxhat_xhat /= static_cast<double>(d);
      for (std::size_t c = 0; c < d; ++c) {
        const double dxhat = g(r, c) * gv[c];
        (*gx)(r, c) += inv_std[r] * (dxhat - mean_dxhat - normalized(r, c) * mean_dxhat_xhat);
      }
    }
  });
}

Var concat_columns(const std::vector<Var>& parts) {
  if (parts.empty()) throw ArgumentError("concat_columns: nothing to concatenate");
  const std::size_t n = parts.front().value().rows();
  std::size_t width = 0;
  for (const Var& p : parts) {
    require_matrix(p.value(), "concat_columns");
    if (p.value().rows() != n) throw ShapeError("concat_columns: row counts differ");
    width += p.value().cols();
  }
  Tensor out(Shape{n, width});
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const auto w = static_cast<Eigen::Index>(p.value().cols());
    as_matrix(out).middleCols(static_cast<Eigen::Index>(offset), w) = as_matrix(p.value());
    offsets.push_back(offset);
    offset += p.value().cols();
  }
  return parts.front().tape().record(std::move(out), parts,
                                     [parts, offsets](Tape& tape, std::size_t self) {
    const auto g = as_matrix(tape.grad(self));
    for (std::size_t i = 0; i < parts.size(); ++i) {
      if (Tensor* gp = tape.grad_if_needed(parts[i].id())) {
        as_matrix(*gp) += g.middleCols(static_cast<Eigen::Index>(offsets[i]),
                                       static_cast<Eigen::Index>(gp->cols()));
      }
    }
  });
}

Var slice_rows(Var x, std::size_t begin, std::size_t count) {
  const Tensor& xv = x.value();
  require_matrix(xv, "slice_rows");
  if (begin + count > xv.rows()) {
    throw ShapeError("slice_rows: rows [" + std::to_string(begin) + ", " +
                     std::to_string(begin + count) + ") of " + shape_string(xv.shape()));
  }
  Tensor out(Shape{count, xv.cols()});
  as_matrix(out) = as_matrix(xv).middleRows(static_cast<Eigen::Index>(begin),
                                            static_cast<Eigen::Index>(count));
  return x.tape().record(std::move(out), {x}, [x, begin, count](Tape& tape, std::size_t self) {
    as_matrix(tape.grad(x.id())).middleRows(static_cast<Eigen::Index>(begin),
                                            static_cast<Eigen::Index>(count)) +=
        as_matrix(tape.grad(self));
  });
}

Var column(Var x, std::size_t c) {
  const Tensor& xv = x.value();
  require_matrix(xv, "column");
  if (c >= xv.cols()) throw ShapeError("column index out of range");
  Tensor out(Shape{xv.rows()});
  for (std::size_t r = 0; r < xv.rows(); ++r) out[r] = xv(r, c);
  return x.tape().record(std::move(out), {x}, [x, c](Tape& tape, std::size_t self) {
    const Tensor& g = tape.grad(self);
    Tensor& gx = tape.grad(x.id());
    for (std::size_t r = 0; r < g.size(); ++r) gx(r, c) += g[r];
  });
}

Var gaussian_nll(Var mu, Var sigma, std::span<const double> targets, std::size_t begin,
                 std::size_t end) {
  const Tensor& m = mu.value();
  const Tensor& s = sigma.value();
  if (m.rank() != 1 || !m.same_shape(s) || m.size() != targets.size()) {
    throw ShapeError("gaussian_nll: mu " + shape_string(m.shape()) + ", sigma " +
                     shape_string(s.shape()) + ", " + std::to_string(targets.size()) + " targets");
  }
  if (begin > end || end > targets.size()) throw ArgumentError("gaussian_nll: range out of bounds");
  const double half_log_two_pi = 0.5 * std::log(2.0 * std::numbers::pi);
  double total = 0.0;
  for (std::size_t t = begin; t < end; ++t) {
    const double r = targets[t] - m[t];
    total += half_log_two_pi + std::log(s[t]) + r * r / (2.0 * s[t] * s[t]);
  }
  std::vector<double> z(targets.begin(), targets.end());
  return mu.tape().record(Tensor::scalar(total), {mu, sigma},
                          [mu, sigma, z = std::move(z), begin, end](Tape& tape, std::size_t self) {
    const double g = tape.grad(self)[0];
    const Tensor& m = tape.value(mu.id());
    const Tensor& s = tape.value(sigma.id());
    Tensor* gm = tape.grad_if_needed(mu.id());
    Tensor* gs = tape.grad_if_needed(sigma.id());
    for (std::size_t t = begin; t < end; ++t) {
      const double r = z[t] - m[t];
      const double inv_var = 1.0 / (s[t] * s[t]);
      if (gm) (*gm)[t] -= g * r * inv_var;
      if (gs) (*gs)[t] += g * (1.0 / s[t] - r * r * inv_var / s[t]);
    }
  });
}

}  // namespace logsparse::ad
