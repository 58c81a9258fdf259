#include "logsparse/autodiff/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "logsparse/common/error.hpp"

namespace logsparse::ad {

namespace {

constexpr const char* kFormat = "logsparse-checkpoint";

std::string blob_name(const Parameter& p) {
  std::string safe;
  for (char c : p.name) safe.push_back(std::isalnum(static_cast<unsigned char>(c)) ? c : '_');
  return std::to_string(p.index) + "_" + safe + ".f64";
}

std::uint64_t to_little_endian(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    return __builtin_bswap64(v);
  }
}

nlohmann::json read_manifest(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw IoError("cannot open " + (dir / "manifest.json").string());
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed checkpoint manifest: " + std::string(e.what()));
  }
  if (manifest.value("format", std::string()) != kFormat) {
    throw DataError("not a checkpoint manifest: " + (dir / "manifest.json").string());
  }
  return manifest;
}

}  // namespace

void save_checkpoint(const ParameterStore& params, const std::filesystem::path& dir,
                     const nlohmann::json& extra) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  nlohmann::json entries = nlohmann::json::array();
  for (const auto& p : params) {
    const std::string file = blob_name(*p);
    std::ofstream out(dir / file, std::ios::binary);
    if (!out) throw IoError("cannot write " + (dir / file).string());
    for (double v : p->value.values()) {
      const std::uint64_t bits = to_little_endian(std::bit_cast<std::uint64_t>(v));
      out.write(reinterpret_cast<const char*>(&bits), sizeof bits);
    }
    if (!out) throw IoError("short write to " + (dir / file).string());
    entries.push_back({{"name", p->name}, {"shape", p->value.shape()}, {"file", file}});
  }
  nlohmann::json manifest = {
      {"format", kFormat}, {"version", 1}, {"parameters", entries}, {"metadata", extra}};
  std::ofstream out(dir / "manifest.json");
  if (!out) throw IoError("cannot write manifest in " + dir.string());
  out << manifest.dump(2) << '\n';
}

nlohmann::json load_checkpoint(ParameterStore& params, const std::filesystem::path& dir) {
  const nlohmann::json manifest = read_manifest(dir);
  const auto& entries = manifest.at("parameters");
  if (entries.size() != params.size()) {
    throw DataError("checkpoint has " + std::to_string(entries.size()) + " parameters, model has " +
                    std::to_string(params.size()));
  }
  for (const auto& entry : entries) {
    const auto name = entry.at("name").get<std::string>();
    Parameter* p = params.find(name);
    if (p == nullptr) throw DataError("checkpoint parameter '" + name + "' not in model");
    if (entry.at("shape").get<Shape>() != p->value.shape()) {
      throw DataError("checkpoint shape mismatch for '" + name + "'");
    }
    const auto file = dir / entry.at("file").get<std::string>();
    std::ifstream in(file, std::ios::binary);
    if (!in) throw IoError("cannot open " + file.string());
    for (double& v : p->value.values()) {
      std::uint64_t bits = 0;
      if (!in.read(reinterpret_cast<char*>(&bits), sizeof bits)) {
        throw DataError("truncated blob " + file.string());
      }
      v = std::bit_cast<double>(to_little_endian(bits));
    }
    p->zero_grad();
  }
  return manifest.value("metadata", nlohmann::json::object());
}

nlohmann::json read_checkpoint_metadata(const std::filesystem::path& dir) {
  return read_manifest(dir).value("metadata", nlohmann::json::object());
}

}  // namespace logsparse::ad
