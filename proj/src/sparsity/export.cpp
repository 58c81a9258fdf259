#include "logsparse/sparsity/export.hpp"

#include <ostream>

namespace logsparse::sparsity {

void write_mask_dense_csv(const MaskMatrix& mask, std::ostream& out) {
  const std::size_t n = mask.length();
  std::string line;
  for (std::size_t l = 1; l <= n; ++l) {
    line.assign(2 * n - 1, ',');
    for (std::size_t j = 0; j < n; ++j) line[2 * j] = '0';
    for (std::size_t j : mask.row(l)) line[2 * (j - 1)] = '1';
    out << line << '\n';
  }
}

void write_mask_coordinates(const MaskMatrix& mask, std::ostream& out) {
  for (std::size_t l = 1; l <= mask.length(); ++l) {
    for (std::size_t j : mask.row(l)) out << l << ',' << j << '\n';
  }
}

nlohmann::json to_json(const MemoryBudget& budget) {
  return {
      {"nnz", budget.nnz},
      {"dense_cells", budget.dense_cells},
      {"row_max", budget.row_max},
      {"analytic_bound", budget.analytic_bound},
      {"equivalent_full_length", budget.equivalent_full_length},
  };
}

nlohmann::json to_json(const PatternSpec& spec) {
  return {
      {"kind", std::string(to_string(spec.kind))},
      {"local_window", spec.local_window},
      {"subseq_len", spec.subseq_len},
      {"cross_subsequence", spec.cross_subsequence},
      {"densify", spec.densify},
  };
}

PatternSpec pattern_from_json(const nlohmann::json& j) {
  PatternSpec spec;
  if (j.is_string()) {
    spec.kind = parse_pattern_kind(j.get<std::string>());
    return spec;
  }
  spec.kind = parse_pattern_kind(j.value("kind", std::string("full")));
  spec.local_window = j.value("local_window", std::size_t{0});
  spec.subseq_len = j.value("subseq_len", std::size_t{0});
  spec.cross_subsequence = j.value("cross_subsequence", true);
  spec.densify = j.value("densify", true);
  return spec;
}

}  // namespace logsparse::sparsity
