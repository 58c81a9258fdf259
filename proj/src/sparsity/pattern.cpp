#include "logsparse/sparsity/pattern.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <string>

#include "logsparse/common/error.hpp"

namespace logsparse::sparsity {

namespace {

// Cells attended inside one block of `block_len` cells by the cell at
// position `pos` (both 1-indexed within the block); results are shifted by
// `base`. A window of w cells ending at pos is attended densely, then
// exponentially spaced cells continue from the window's left edge:
// pos - (w - 1) - 2^m for m = 0, 1, ...
// With w = 1 this is the plain LogSparse set {pos - 2^m} u {pos}.
void append_block_pattern(std::size_t pos, std::size_t window, std::size_t base,
                          std::vector<std::size_t>& out) {
  const std::size_t dense_from = pos > window ? pos - window + 1 : 1;
  if (pos > window) {
    const std::size_t edge = pos - (window - 1);
    std::vector<std::size_t> sparse;
    for (std::size_t step = 1; step < edge; step <<= 1) {
      sparse.push_back(edge - step);
    }
    std::reverse(sparse.begin(), sparse.end());
    for (std::size_t cell : sparse) out.push_back(base + cell);
  }
  for (std::size_t cell = dense_from; cell <= pos; ++cell) {
    out.push_back(base + cell);
  }
}

std::string normalize(std::string_view name) {
  std::string out;
  out.reserve(name.size());
  for (char c : name) {
    out.push_back(c == '_' ? '-' : static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

}  // namespace

PatternSpec PatternSpec::full_causal() { return {}; }

PatternSpec PatternSpec::log_sparse() {
  PatternSpec spec;
  spec.kind = PatternKind::LogSparse;
  return spec;
}

PatternSpec PatternSpec::log_sparse_local(std::size_t window) {
  PatternSpec spec;
  spec.kind = PatternKind::LogSparseLocal;
  spec.local_window = window;
  return spec;
}

PatternSpec PatternSpec::log_sparse_restart(std::size_t subseq_len) {
  PatternSpec spec;
  spec.kind = PatternKind::LogSparseRestart;
  spec.subseq_len = subseq_len;
  return spec;
}

PatternSpec PatternSpec::log_sparse_restart_local(std::size_t subseq_len,
                                                  std::size_t window) {
  PatternSpec spec;
  spec.kind = PatternKind::LogSparseRestartLocal;
  spec.subseq_len = subseq_len;
  spec.local_window = window;
  return spec;
}

bool PatternSpec::uses_local() const {
  return kind == PatternKind::LogSparseLocal ||
         kind == PatternKind::LogSparseRestartLocal;
}

bool PatternSpec::uses_restart() const {
  return kind == PatternKind::LogSparseRestart ||
         kind == PatternKind::LogSparseRestartLocal;
}

std::string_view to_string(PatternKind kind) {
  switch (kind) {
    case PatternKind::FullCausal: return "full";
    case PatternKind::LogSparse: return "logsparse";
    case PatternKind::LogSparseLocal: return "logsparse-local";
    case PatternKind::LogSparseRestart: return "logsparse-restart";
    case PatternKind::LogSparseRestartLocal: return "logsparse-restart-local";
  }
  return "unknown";
}

PatternKind parse_pattern_kind(std::string_view name) {
  const std::string key = normalize(name);
  if (key == "full" || key == "full-causal" || key == "fullcausal") return PatternKind::FullCausal;
  if (key == "logsparse") return PatternKind::LogSparse;
  if (key == "logsparse-local") return PatternKind::LogSparseLocal;
  if (key == "logsparse-restart") return PatternKind::LogSparseRestart;
  if (key == "logsparse-restart-local") return PatternKind::LogSparseRestartLocal;
  throw ArgumentError("unknown attention pattern '" + std::string(name) + "'");
}

std::size_t floor_log2(std::size_t n) {
  if (n == 0) throw ArgumentError("floor_log2(0) is undefined");
  return static_cast<std::size_t>(std::bit_width(n)) - 1;
}

std::size_t ceil_log2(std::size_t n) {
  if (n == 0) throw ArgumentError("ceil_log2(0) is undefined");
  return n == 1 ? 0 : floor_log2(n - 1) + 1;
}

void validate(const PatternSpec& spec, std::size_t length) {
  if (length == 0) throw ArgumentError("pattern length must be at least 1");
  if (spec.uses_restart()) {
    if (spec.subseq_len < 2) {
      throw ArgumentError("restart attention needs subseq_len >= 2");
    }
    if (spec.subseq_len > length) {
      throw ArgumentError("subseq_len " + std::to_string(spec.subseq_len) +
                          " exceeds sequence length " + std::to_string(length));
    }
  }
}

std::size_t effective_local_window(const PatternSpec& spec, std::size_t length) {
  if (!spec.uses_local()) return 1;
  if (spec.local_window > 0) return spec.local_window;
  const std::size_t span = spec.uses_restart() ? spec.subseq_len : length;
  return std::max<std::size_t>(1, ceil_log2(std::max<std::size_t>(1, span)));
}

std::vector<std::size_t> index_set(std::size_t cell, std::size_t length,
                                   const PatternSpec& spec) {
  validate(spec, length);
  if (cell < 1 || cell > length) {
    throw ArgumentError("cell " + std::to_string(cell) + " outside 1.." +
                        std::to_string(length));
  }

  std::vector<std::size_t> out;
  if (spec.kind == PatternKind::FullCausal) {
    out.resize(cell);
    for (std::size_t j = 0; j < cell; ++j) out[j] = j + 1;
    return out;
  }

  const std::size_t window = effective_local_window(spec, length);
  if (!spec.uses_restart()) {
    append_block_pattern(cell, window, 0, out);
    return out;
  }

  const std::size_t sub = spec.subseq_len;
  const std::size_t block = (cell - 1) / sub;
  if (spec.cross_subsequence) {
    for (std::size_t earlier = 0; earlier < block; ++earlier) {
      append_block_pattern(sub, window, earlier * sub, out);
    }
  }
  append_block_pattern(cell - block * sub, window, block * sub, out);
  return out;
}

MaskMatrix::MaskMatrix(std::vector<std::vector<std::size_t>> rows) {
  offsets_.reserve(rows.size() + 1);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto& row = rows[i];
    const std::size_t cell = i + 1;
    std::sort(row.begin(), row.end());
    row.erase(std::unique(row.begin(), row.end()), row.end());
    if (row.empty() || row.back() != cell) {
      throw ArgumentError("mask row " + std::to_string(cell) +
                          " must attend itself and nothing later");
    }
    if (row.front() < 1) {
      throw ArgumentError("mask row " + std::to_string(cell) + " references cell 0");
    }
    columns_.insert(columns_.end(), row.begin(), row.end());
    offsets_.push_back(columns_.size());
  }
}

std::span<const std::size_t> MaskMatrix::row(std::size_t cell) const {
  if (cell < 1 || cell > length()) {
    throw ArgumentError("mask row " + std::to_string(cell) + " out of range");
  }
  return {columns_.data() + offsets_[cell - 1], offsets_[cell] - offsets_[cell - 1]};
}

std::size_t MaskMatrix::row_size(std::size_t cell) const { return row(cell).size(); }

bool MaskMatrix::allowed(std::size_t cell, std::size_t attended) const {
  const auto r = row(cell);
  return std::binary_search(r.begin(), r.end(), attended);
}

std::vector<std::vector<bool>> MaskMatrix::to_dense() const {
  const std::size_t n = length();
  std::vector<std::vector<bool>> dense(n, std::vector<bool>(n, false));
  for (std::size_t l = 1; l <= n; ++l) {
    for (std::size_t j : row(l)) dense[l - 1][j - 1] = true;
  }
  return dense;
}

MaskMatrix MaskMatrix::prefix(std::size_t length) const {
  if (length < 1 || length > this->length()) {
    throw ArgumentError("mask prefix length out of range");
  }
  MaskMatrix out;
  out.offsets_.assign(offsets_.begin(), offsets_.begin() + static_cast<std::ptrdiff_t>(length) + 1);
  out.columns_.assign(columns_.begin(), columns_.begin() + static_cast<std::ptrdiff_t>(offsets_[length]));
  return out;
}

MaskMatrix build_mask(const PatternSpec& spec, std::size_t length) {
  validate(spec, length);
  std::vector<std::vector<std::size_t>> rows(length);
  std::size_t row_max = 0;
  for (std::size_t l = 1; l <= length; ++l) {
    rows[l - 1] = index_set(l, length, spec);
    row_max = std::max(row_max, rows[l - 1].size());
  }
  if (spec.densify && spec.kind != PatternKind::FullCausal) {
    for (std::size_t l = 1; l <= std::min(row_max, length); ++l) {
      auto& row = rows[l - 1];
      row.resize(l);
      for (std::size_t j = 0; j < l; ++j) row[j] = j + 1;
    }
  }
  return MaskMatrix(std::move(rows));
}

}  // namespace logsparse::sparsity
