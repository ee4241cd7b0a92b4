#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

namespace critflow {

inline constexpr const char* version = "0.1.0";

enum ExitCode : int { exit_ok = 0, exit_config = 2, exit_numerical = 3 };

struct RunOptions {
  std::filesystem::path config_path;
  std::optional<std::filesystem::path> output_dir;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
  bool no_plots = false;
  /// worker cap; 0 reads CRITFLOW_THREADS, falling back to hardware concurrency
  unsigned threads = 0;
};

/// Worker count from CRITFLOW_THREADS (unset or invalid: 0, meaning hardware concurrency).
unsigned threads_from_environment();

/// Execute the configured scenario and write its artifacts; returns an ExitCode.
int run(const RunOptions& options);

}  // namespace critflow
