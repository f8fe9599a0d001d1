#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace iderase {

inline constexpr std::uint32_t kFormatVersion = 1;

// Validation failures: bad arguments, malformed configs/manifests, shape
// mismatches. The CLI maps these to exit code 1.
struct ValidationError : std::runtime_error {
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Runtime failures: I/O, corrupt checkpoints, non-finite losses. Exit code 2.
struct RuntimeFailure : std::runtime_error {
  explicit RuntimeFailure(const std::string& msg) : std::runtime_error(msg) {}
};

// A training run finished but did not reach a required quality bar
// (e.g. the extractor separation margin). Exit code 3.
struct ThresholdError : std::runtime_error {
  explicit ThresholdError(const std::string& msg) : std::runtime_error(msg) {}
};

inline void check(bool cond, const std::string& msg) {
  if (!cond) throw ValidationError(msg);
}

}  // namespace iderase
