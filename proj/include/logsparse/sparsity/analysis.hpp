#pragma once

#include <boost/multiprecision/cpp_int.hpp>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "logsparse/sparsity/pattern.hpp"

namespace logsparse::sparsity {

using BigCount = boost::multiprecision::cpp_int;

/// Pairs (j, l), j <= l, such that information from cell j reaches cell l
/// after `layers_tested` stacked layers.
struct ReachabilityReport {
  std::size_t layers_tested = 0;
  bool fully_covered = false;
  std::vector<std::pair<std::size_t, std::size_t>> uncovered_pairs;
};

/// Row-bitset reachability: reach(l) after k layers is the union of
/// reach(p) after k-1 layers over p in row(l). Self-loops make the sets
/// monotone in k.
class ReachabilityMatrix {
 public:
  /// One layer of attention.
  explicit ReachabilityMatrix(const MaskMatrix& mask);

  std::size_t length() const noexcept { return length_; }
  std::size_t layers() const noexcept { return layers_; }

  /// Composes one more layer of `mask`. Returns true if any set grew.
  bool advance(const MaskMatrix& mask);

  bool reaches(std::size_t from, std::size_t to) const;
  bool fully_covered() const;
  ReachabilityReport report() const;

 private:
  std::size_t length_;
  std::size_t words_;
  std::size_t layers_ = 1;
  std::vector<std::uint64_t> bits_;
};

ReachabilityReport reachability(const MaskMatrix& mask, std::size_t layers);

/// Smallest k such that k stacked layers connect every j <= l, or nullopt if
/// no depth does (e.g. isolated restart subsequences).
std::optional<std::size_t> min_layers_full_coverage(const MaskMatrix& mask);

/// Number of walks (j, p1, ..., l) with exactly `layers` edges, each edge an
/// allowed mask entry (self-loops count).
BigCount count_paths(const MaskMatrix& mask, std::size_t from, std::size_t to,
                     std::size_t layers);

/// Same walks counted for every destination at once; index l-1 holds the
/// count for destination l.
std::vector<BigCount> count_paths_from(const MaskMatrix& mask, std::size_t from,
                                       std::size_t layers);

/// Fixed-width variant; throws OverflowError if any intermediate count
/// exceeds 2^64 - 1.
std::uint64_t count_paths_u64(const MaskMatrix& mask, std::size_t from,
                              std::size_t to, std::size_t layers);

struct MemoryBudget {
  std::size_t nnz = 0;
  std::size_t dense_cells = 0;
  std::size_t row_max = 0;
  std::size_t analytic_bound = 0;
  // Dense length whose L^2 cost is nearest analytic_bound (rounded, not
  // floored: 576 * 112 = 64512 maps to 254).
  std::size_t equivalent_full_length = 0;
};

MemoryBudget attended_budget(const MaskMatrix& mask);

/// Nearest integer to sqrt(n).
std::size_t rounded_sqrt(std::size_t n);

}  // namespace logsparse::sparsity
