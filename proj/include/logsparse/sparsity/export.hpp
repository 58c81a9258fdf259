#pragma once

#include <iosfwd>
#include <string>

#include "json.hpp"
#include "logsparse/sparsity/analysis.hpp"
#include "logsparse/sparsity/pattern.hpp"

namespace logsparse::sparsity {

/// L lines of L comma-separated 0/1 flags; line l is row l.
void write_mask_dense_csv(const MaskMatrix& mask, std::ostream& out);

/// One "l,j" line per allowed pair, row-major, 1-indexed.
void write_mask_coordinates(const MaskMatrix& mask, std::ostream& out);

nlohmann::json to_json(const MemoryBudget& budget);
nlohmann::json to_json(const PatternSpec& spec);
PatternSpec pattern_from_json(const nlohmann::json& j);

}  // namespace logsparse::sparsity
