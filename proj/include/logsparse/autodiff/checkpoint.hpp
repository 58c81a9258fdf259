#pragma once

#include <filesystem>

#include "json.hpp"
#include "logsparse/autodiff/parameter.hpp"

namespace logsparse::ad {

/// Writes `manifest.json` (names, shapes, blob files) plus one
/// little-endian float64 blob per parameter into `dir`. `extra` is stored
/// under the manifest's "metadata" key.
void save_checkpoint(const ParameterStore& params, const std::filesystem::path& dir,
                     const nlohmann::json& extra = nlohmann::json::object());

/// Loads values into an already-constructed store. Every stored parameter
/// must exist with the same shape, and vice versa. Returns the metadata.
nlohmann::json load_checkpoint(ParameterStore& params, const std::filesystem::path& dir);

/// Reads only the manifest's metadata.
nlohmann::json read_checkpoint_metadata(const std::filesystem::path& dir);

}  // namespace logsparse::ad
