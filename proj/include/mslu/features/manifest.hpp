#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "mslu/features/grammar.hpp"

namespace mslu::features {

struct ManifestEntry {
  std::string id;
  std::filesystem::path audio;  // absolute after read_manifest
  std::string text;
  Command intent;
  std::string speaker;

  std::vector<std::string> tokens() const;
};

// JSON Lines; relative audio paths resolve against the manifest's directory.
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);

// Audio paths are written relative to the manifest's directory when possible.
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries);

std::vector<std::string> split_tokens(const std::string& text);
std::string join_tokens(const std::vector<std::string>& tokens);

}  // namespace mslu::features
