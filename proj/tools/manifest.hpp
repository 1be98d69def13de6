#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace slb::tool {

namespace fs = std::filesystem;
using nlohmann::json;

/// Reads a JSON document; parse errors are rethrown as runtime_error
/// carrying "path:line:column".
json load_json(const fs::path& path);

/// Loads a subcommand config. A RunManifest is accepted too, in which case
/// its recorded config is returned after checking the subcommand matches.
json load_config(const fs::path& path, const std::string& subcommand);

std::string sha256_file(const fs::path& path);

/// Writes `manifest.json` next to the outputs and returns its path.
fs::path write_manifest(const fs::path& out_dir, const std::string& subcommand, const json& config,
                        std::uint64_t seed, const std::vector<std::string>& outputs);

/// Writes text and fails loudly when the stream breaks.
void write_text(const fs::path& path, const std::string& text);

}  // namespace slb::tool
