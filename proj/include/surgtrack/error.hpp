#pragma once

#include <stdexcept>
#include <string>

namespace surgtrack {

/// Failure category. Each maps onto one CLI exit code and one stable
/// machine-readable tag.
enum class ErrorKind {
  kUsage,    // bad flags, bad configuration
  kConfig,   // invalid model/train configuration
  kShape,    // array dimension mismatch
  kData,     // missing or malformed input files
  kSeed,     // a seed frame could not be prompted
  kNumeric,  // NaN/Inf encountered
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

  /// Short tag used in the "ERROR <tag>:" line printed by the CLI.
  const char* tag() const noexcept {
    switch (kind_) {
      case ErrorKind::kUsage: return "usage";
      case ErrorKind::kConfig: return "config";
      case ErrorKind::kShape: return "shape";
      case ErrorKind::kData: return "data";
      case ErrorKind::kSeed: return "seed";
      case ErrorKind::kNumeric: return "numeric";
    }
    return "unknown";
  }

  /// Process exit code: 2 usage, 3 data, 4 numeric.
  int exit_code() const noexcept {
    switch (kind_) {
      case ErrorKind::kUsage:
      case ErrorKind::kConfig: return 2;
      case ErrorKind::kNumeric: return 4;
      default: return 3;
    }
  }

 private:
  ErrorKind kind_;
};

inline Error ShapeError(const std::string& msg) { return Error(ErrorKind::kShape, msg); }
inline Error ConfigError(const std::string& msg) { return Error(ErrorKind::kConfig, msg); }
inline Error DataError(const std::string& msg) { return Error(ErrorKind::kData, msg); }
inline Error NumericError(const std::string& msg) { return Error(ErrorKind::kNumeric, msg); }
inline Error SeedError(const std::string& msg) { return Error(ErrorKind::kSeed, msg); }
inline Error UsageError(const std::string& msg) { return Error(ErrorKind::kUsage, msg); }

}  // namespace surgtrack
