#include "logsparse/sparsity/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "logsparse/common/error.hpp"

namespace logsparse::sparsity {

namespace {

void check_cell(const MaskMatrix& mask, std::size_t cell, const char* what) {
  if (cell < 1 || cell > mask.length()) {
    throw ArgumentError(std::string(what) + " cell " + std::to_string(cell) +
                        " outside 1.." + std::to_string(mask.length()));
  }
}

template <class Count, class Add>
std::vector<Count> walk_counts(const MaskMatrix& mask, std::size_t from,
                               std::size_t layers, Add add) {
  const std::size_t n = mask.length();
  std::vector<Count> current(n, Count{0});
  std::vector<Count> next(n, Count{0});
  current[from - 1] = Count{1};
  for (std::size_t step = 0; step < layers; ++step) {
    for (std::size_t l = 1; l <= n; ++l) {
      Count total{0};
      // Walks only move forward in time, so cells before `from` stay zero.
      if (l >= from) {
        for (std::size_t p : mask.row(l)) {
          if (p >= from) total = add(total, current[p - 1]);
        }
      }
      next[l - 1] = total;
    }
    std::swap(current, next);
  }
  return current;
}

}  // namespace

ReachabilityMatrix::ReachabilityMatrix(const MaskMatrix& mask)
    : length_(mask.length()), words_((mask.length() + 63) / 64),
      bits_(length_ * words_, 0) {
  for (std::size_t l = 1; l <= length_; ++l) {
    std::uint64_t* row = bits_.data() + (l - 1) * words_;
    for (std::size_t j : mask.row(l)) row[(j - 1) / 64] |= std::uint64_t{1} << ((j - 1) % 64);
  }
}

bool ReachabilityMatrix::advance(const MaskMatrix& mask) {
  if (mask.length() != length_) throw ArgumentError("mask length mismatch");
  std::vector<std::uint64_t> next(bits_.size(), 0);
  bool grew = false;
  for (std::size_t l = 1; l <= length_; ++l) {
    std::uint64_t* out = next.data() + (l - 1) * words_;
    for (std::size_t p : mask.row(l)) {
      const std::uint64_t* in = bits_.data() + (p - 1) * words_;
      for (std::size_t w = 0; w < words_; ++w) out[w] |= in[w];
    }
    const std::uint64_t* before = bits_.data() + (l - 1) * words_;
    for (std::size_t w = 0; w < words_ && !grew; ++w) grew = out[w] != before[w];
  }
  bits_.swap(next);
  ++layers_;
  return grew;
}

bool ReachabilityMatrix::reaches(std::size_t from, std::size_t to) const {
  if (from < 1 || to < 1 || from > length_ || to > length_) {
    throw ArgumentError("reachability query out of range");
  }
  const std::uint64_t word = bits_[(to - 1) * words_ + (from - 1) / 64];
  return (word >> ((from - 1) % 64)) & 1U;
}

bool ReachabilityMatrix::fully_covered() const {
  for (std::size_t l = 1; l <= length_; ++l) {
    const std::uint64_t* row = bits_.data() + (l - 1) * words_;
    const std::size_t full_words = l / 64;
    for (std::size_t w = 0; w < full_words; ++w) {
      if (row[w] != ~std::uint64_t{0}) return false;
    }
    const std::size_t rest = l % 64;
    if (rest != 0) {
      const std::uint64_t want = (std::uint64_t{1} << rest) - 1;
      if ((row[full_words] & want) != want) return false;
    }
  }
  return true;
}

ReachabilityReport ReachabilityMatrix::report() const {
  ReachabilityReport out;
  out.layers_tested = layers_;
  for (std::size_t l = 1; l <= length_; ++l) {
    for (std::size_t j = 1; j <= l; ++j) {
      if (!reaches(j, l)) out.uncovered_pairs.emplace_back(j, l);
    }
  }
  out.fully_covered = out.uncovered_pairs.empty();
  return out;
}

ReachabilityReport reachability(const MaskMatrix& mask, std::size_t layers) {
  if (layers < 1) throw ArgumentError("layers must be at least 1");
  ReachabilityMatrix reach(mask);
  while (reach.layers() < layers) reach.advance(mask);
  return reach.report();
}

std::optional<std::size_t> min_layers_full_coverage(const MaskMatrix& mask) {
  ReachabilityMatrix reach(mask);
  while (!reach.fully_covered()) {
    if (!reach.advance(mask)) return std::nullopt;
  }
  return reach.layers();
}

std::vector<BigCount> count_paths_from(const MaskMatrix& mask, std::size_t from,
                                       std::size_t layers) {
  check_cell(mask, from, "source");
  if (layers < 1) throw ArgumentError("layers must be at least 1");
  return walk_counts<BigCount>(mask, from, layers,
                               [](const BigCount& a, const BigCount& b) { return a + b; });
}

BigCount count_paths(const MaskMatrix& mask, std::size_t from, std::size_t to,
                     std::size_t layers) {
  check_cell(mask, to, "destination");
  if (from > to) throw ArgumentError("paths run forward in time: need from <= to");
  return count_paths_from(mask, from, layers)[to - 1];
}

std::uint64_t count_paths_u64(const MaskMatrix& mask, std::size_t from,
                              std::size_t to, std::size_t layers) {
  check_cell(mask, from, "source");
  check_cell(mask, to, "destination");
  if (from > to) throw ArgumentError("paths run forward in time: need from <= to");
  if (layers < 1) throw ArgumentError("layers must be at least 1");
  const auto counts = walk_counts<std::uint64_t>(
      mask, from, layers, [](std::uint64_t a, std::uint64_t b) {
        std::uint64_t sum = 0;
        if (__builtin_add_overflow(a, b, &sum)) {
          throw OverflowError("path count exceeds 64-bit range");
        }
        return sum;
      });
  return counts[to - 1];
}

std::size_t rounded_sqrt(std::size_t n) {
  std::size_t r = static_cast<std::size_t>(std::sqrt(static_cast<double>(n)));
  while (r * r > n) --r;
  while ((r + 1) * (r + 1) <= n) ++r;
  // r = floor(sqrt(n)); round up when n >= (r + 1/2)^2 = r^2 + r + 1/4.
  return n > r * r + r ? r + 1 : r;
}

MemoryBudget attended_budget(const MaskMatrix& mask) {
  MemoryBudget out;
  const std::size_t n = mask.length();
  out.nnz = mask.nnz();
  out.dense_cells = n * n;
  for (std::size_t l = 1; l <= n; ++l) out.row_max = std::max(out.row_max, mask.row_size(l));
  out.analytic_bound = n * out.row_max;
  out.equivalent_full_length = rounded_sqrt(out.analytic_bound);
  return out;
}

}  // namespace logsparse::sparsity
