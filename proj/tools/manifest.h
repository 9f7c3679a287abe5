#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace sotkit::cli {

// Hex SHA-256 of a file's bytes. Throws std::runtime_error if unreadable.
std::string Sha256File(const std::filesystem::path& path);

// Provenance record written next to every output of a file-writing run.
struct RunManifest {
  std::string command_line;
  std::string tool_version;
  std::map<std::string, std::string> seeds;
  std::vector<std::pair<std::string, std::string>> inputs;  // path, digest
  std::vector<std::string> outputs;
  std::vector<std::string> stages;

  void AddInput(const std::filesystem::path& path);
  void AddOutput(const std::filesystem::path& path);
  // Also records the output files' digests and a UTC timestamp.
  void Write(const std::filesystem::path& path) const;
};

}  // namespace sotkit::cli
