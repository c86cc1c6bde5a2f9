#pragma once

#include <stdexcept>
#include <string>

namespace mpcnn {

/// Broad classes of failure. The CLI maps them onto exit codes: data-level
/// problems exit with 2, violated internal invariants with 3.
enum class ErrorKind {
  InvalidShape,
  InvalidAxis,
  InvalidParameter,
  InvalidLabel,
  InvalidState,
  EmptyDataset,
  EmptyClass,
  Decode,
  Partition,
  CorruptCheckpoint,
  UnsupportedVersion,
  ArchitectureMismatch,
  PersistedState,
  Io,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

  /// True for errors caused by inputs (files, manifests, labels) rather than
  /// by a broken invariant inside the program.
  bool is_data_error() const noexcept {
    switch (kind_) {
      case ErrorKind::InvalidLabel:
      case ErrorKind::EmptyDataset:
      case ErrorKind::EmptyClass:
      case ErrorKind::Decode:
      case ErrorKind::Partition:
      case ErrorKind::CorruptCheckpoint:
      case ErrorKind::UnsupportedVersion:
      case ErrorKind::ArchitectureMismatch:
      case ErrorKind::PersistedState:
      case ErrorKind::Io:
        return true;
      default:
        return false;
    }
  }

 private:
  ErrorKind kind_;
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidShape: return "invalid-shape";
    case ErrorKind::InvalidAxis: return "invalid-axis";
    case ErrorKind::InvalidParameter: return "invalid-parameter";
    case ErrorKind::InvalidLabel: return "invalid-label";
    case ErrorKind::InvalidState: return "invalid-state";
    case ErrorKind::EmptyDataset: return "empty-dataset";
    case ErrorKind::EmptyClass: return "empty-class";
    case ErrorKind::Decode: return "decode";
    case ErrorKind::Partition: return "partition";
    case ErrorKind::CorruptCheckpoint: return "corrupt-checkpoint";
    case ErrorKind::UnsupportedVersion: return "unsupported-version";
    case ErrorKind::ArchitectureMismatch: return "architecture-mismatch";
    case ErrorKind::PersistedState: return "persisted-state";
    case ErrorKind::Io: return "io";
  }
  return "unknown";
}

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, std::string(to_string(kind)) + ": " + what);
}

}  // namespace mpcnn
