#ifndef MULTITOX_ERRORS_HPP
#define MULTITOX_ERRORS_HPP

#include <atomic>
#include <stdexcept>
#include <string>

namespace multitox {

// Bad configuration, flags, or file formats supplied by the caller.
// The CLI maps this to exit code 2; everything else maps to 1.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IndexError : std::runtime_error {
  explicit IndexError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Checkpoint-specific failures, kept distinct so callers can tell a stale
// file from a damaged one.
struct CheckpointVersionError : IoError {
  explicit CheckpointVersionError(const std::string& msg) : IoError(msg) {}
};
struct CheckpointShapeError : IoError {
  explicit CheckpointShapeError(const std::string& msg) : IoError(msg) {}
};
struct CheckpointTruncatedError : IoError {
  explicit CheckpointTruncatedError(const std::string& msg) : IoError(msg) {}
};

// Non-fatal conditions (all-masked attention rows, degenerate metric
// denominators, ...) are flagged here rather than thrown.
void log_warning(const std::string& msg);
long warning_count();

}  // namespace multitox

#endif
