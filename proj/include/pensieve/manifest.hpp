#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace pensieve {

inline constexpr const char* kToolVersion = "0.1.0";

// FNV-1a 64-bit content hash, rendered as "fnv1a:" + 16 hex digits.
std::uint64_t fnv1a(std::span<const unsigned char> bytes);
std::string digest_file(const std::string& path);

// Reproducibility sidecar written next to every command output: the exact
// configuration, the digests of every input, tool version, seed, timestamp.
struct RunManifest {
  std::string command;                 // rendered argv
  std::string config_json;             // configuration snapshot ("" if none)
  std::vector<std::pair<std::string, std::string>> inputs;  // name -> path
  bool has_seed = false;
  std::uint64_t seed = 0;

  void write(const std::string& path) const;
};

}  // namespace pensieve
