#pragma once

#include <stdexcept>
#include <string>

namespace dmval {

// Malformed input file: missing column, bad header, unparsable cell.
class SchemaError : public std::runtime_error {
 public:
  explicit SchemaError(const std::string& msg) : std::runtime_error(msg) {}
};

// Well-formed file whose content violates a dataset invariant
// (non-contiguous frames, duplicate ids, track outside its roadway, ...).
class DataIntegrityError : public std::runtime_error {
 public:
  explicit DataIntegrityError(const std::string& msg) : std::runtime_error(msg) {}
};

// Geometrically invalid road description (fewer than two lane markings, ...).
class GeometryError : public std::runtime_error {
 public:
  explicit GeometryError(const std::string& msg) : std::runtime_error(msg) {}
};

// Caller broke an operation's precondition (dimension mismatch, empty grid, ...).
class ContractError : public std::logic_error {
 public:
  explicit ContractError(const std::string& msg) : std::logic_error(msg) {}
};

// A statistic was requested from fewer samples than it needs.
class InsufficientDataError : public std::runtime_error {
 public:
  explicit InsufficientDataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Recording rejected as a whole (e.g. it contains a merge lane).
class RecordingRejected : public std::runtime_error {
 public:
  explicit RecordingRejected(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad pipeline configuration (unknown key, out-of-range value).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace dmval
