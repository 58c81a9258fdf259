#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"

#include "logsparse/sparsity/pattern.hpp"

namespace logsparse::cli {

/// Parses and runs one command line. Returns 0 on success, 2 for
/// configuration errors and 3 for runtime or divergence errors.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

struct MaskRequest {
  sparsity::PatternSpec spec;
  std::size_t length = 0;
  bool verify_theorem = false;
  std::vector<std::pair<std::size_t, std::size_t>> paths;  // (from, to)
  std::size_t path_layers = 0;                              // 0 = floor(log2 L) + 1
};

/// Budget, coverage depth and optional path counts (as decimal strings).
nlohmann::json mask_report(const MaskRequest& request);

/// Positional form: a pattern name followed by L=, sub=, win=, densify=,
/// cross= tokens. Throws ConfigError.
MaskRequest parse_mask_tokens(const std::vector<std::string>& tokens);

}  // namespace logsparse::cli
