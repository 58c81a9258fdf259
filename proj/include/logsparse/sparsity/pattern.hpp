#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace logsparse::sparsity {

enum class PatternKind {
  FullCausal,
  LogSparse,
  LogSparseLocal,
  LogSparseRestart,
  LogSparseRestartLocal,
};

/// Describes which earlier cells a cell may attend to.
///
/// Cells are 1-indexed. `local_window` (Local kinds) is the number of cells,
/// including the query itself, that are attended densely; 0 means "derive":
/// ceil(log2(subseq_len)) for restart kinds, ceil(log2(L)) otherwise.
/// `subseq_len` is only read by restart kinds.
struct PatternSpec {
  PatternKind kind = PatternKind::FullCausal;
  std::size_t local_window = 0;
  std::size_t subseq_len = 0;
  // Restart kinds: also attend each earlier subsequence through the pattern
  // anchored at its final cell. Off gives fully isolated subsequences.
  bool cross_subsequence = true;
  // Cells l <= row_max attend all of their past (costs no extra memory).
  bool densify = true;

  static PatternSpec full_causal();
  static PatternSpec log_sparse();
  static PatternSpec log_sparse_local(std::size_t window = 0);
  static PatternSpec log_sparse_restart(std::size_t subseq_len);
  static PatternSpec log_sparse_restart_local(std::size_t subseq_len,
                                              std::size_t window = 0);

  bool uses_local() const;
  bool uses_restart() const;
};

std::string_view to_string(PatternKind kind);

/// Accepts "full", "logsparse", "logsparse-local", "logsparse-restart",
/// "logsparse-restart-local" (case-insensitive, '_' and '-' interchangeable).
PatternKind parse_pattern_kind(std::string_view name);

/// Throws ArgumentError when the spec cannot be applied to a sequence of
/// `length` cells.
void validate(const PatternSpec& spec, std::size_t length);

/// Local window actually used for a sequence of `length` cells.
std::size_t effective_local_window(const PatternSpec& spec, std::size_t length);

/// floor(log2(n)) for n >= 1.
std::size_t floor_log2(std::size_t n);
/// ceil(log2(n)) for n >= 1.
std::size_t ceil_log2(std::size_t n);

/// Sorted set of cells that `cell` attends to, before densification.
std::vector<std::size_t> index_set(std::size_t cell, std::size_t length,
                                   const PatternSpec& spec);

/// Boolean causal attention pattern stored row-compressed. Row l lists the
/// cells j (ascending, 1-indexed) that cell l may attend.
class MaskMatrix {
 public:
  /// Validates causality (every j <= l) and presence of the diagonal.
  explicit MaskMatrix(std::vector<std::vector<std::size_t>> rows);

  std::size_t length() const noexcept { return offsets_.size() - 1; }
  std::size_t nnz() const noexcept { return columns_.size(); }

  std::span<const std::size_t> row(std::size_t cell) const;
  std::size_t row_size(std::size_t cell) const;
  bool allowed(std::size_t cell, std::size_t attended) const;

  /// Dense L x L table, [l-1][j-1].
  std::vector<std::vector<bool>> to_dense() const;

  /// Top-left `length` x `length` block; masks are causal so this is the
  /// pattern seen by a prefix of the sequence.
  MaskMatrix prefix(std::size_t length) const;

  friend bool operator==(const MaskMatrix&, const MaskMatrix&) = default;

 private:
  MaskMatrix() = default;

  std::vector<std::size_t> offsets_{0};
  std::vector<std::size_t> columns_;
};

MaskMatrix build_mask(const PatternSpec& spec, std::size_t length);

}  // namespace logsparse::sparsity
