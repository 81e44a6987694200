#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace lpcaps::cli {

inline constexpr const char* kToolVersion = "0.1.0";

/// Exit codes: 0 success, 2 validation error (bad input or flags),
/// 1 runtime error (provider, network, I/O).
enum ExitCode : int { kOk = 0, kRuntimeError = 1, kValidationError = 2 };

/// Entry point shared by the lpcaps binary and the tests. args excludes the
/// program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Per-run record written next to the primary output as
/// <output>.manifest.json. `fingerprint` hashes everything except the
/// timestamps, so two runs with equal inputs, flags and outputs share it.
struct RunManifest {
  std::string command;
  nlohmann::json config = nlohmann::json::object();
  std::uint64_t seed = 0;
  std::vector<std::filesystem::path> inputs;
  std::vector<std::filesystem::path> outputs;
  std::string started_at;
  std::string finished_at;
  nlohmann::json extra = nlohmann::json::object();

  nlohmann::json to_json() const;
  std::string fingerprint() const;
  /// Writes <primary output>.manifest.json and returns its path.
  std::filesystem::path write() const;
};

}  // namespace lpcaps::cli
