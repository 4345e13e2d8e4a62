#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

namespace gloc {

inline constexpr const char* kToolVersion = "0.1.0";

/// FNV-1a over the file bytes, as a 16-digit hex string.
std::string file_hash(const std::string& path);

/// Replay record written next to every command's outputs: command name,
/// fully resolved config, master seed, input hashes and the tool version.
/// Re-running the same invocation reproduces both the outputs and this
/// manifest byte for byte.
struct RunManifest {
  std::string command;
  nlohmann::json config;
  std::uint64_t seed = 0;
  nlohmann::json inputs;  // name -> {path, hash}
  std::string version = kToolVersion;

  void add_input(const std::string& name, const std::string& path);
  void write(const std::string& path) const;
};

}  // namespace gloc
