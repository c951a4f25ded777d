#pragma once

#include <stdexcept>
#include <string>

namespace advdet {

/// Process exit codes shared by every command.
enum class ExitCode : int {
  kOk = 0,
  kUsage = 1,    // usage or configuration problem
  kData = 2,     // malformed or inconsistent input data
  kRuntime = 3,  // runtime or numerical failure
};

class Error : public std::runtime_error {
 public:
  Error(ExitCode code, const std::string& what) : Error(code, "", what) {}
  Error(ExitCode code, const std::string& prefix, const std::string& detail)
      : std::runtime_error(prefix + detail), code_(code), detail_(detail) {}
  ExitCode exit_code() const noexcept { return code_; }
  /// Message without the category prefix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  ExitCode code_;
  std::string detail_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ExitCode::kUsage, "config error: ", what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ExitCode::kData, "data error: ", what) {}
};

class IntegrityError : public Error {
 public:
  IntegrityError(const std::string& key, const std::string& what)
      : Error(ExitCode::kData, "integrity error at '" + key + "': ", what), key_(key) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what) : Error(ExitCode::kRuntime, "shape error: ", what) {}
};

/// A caller broke a documented precondition.
class ContractViolation : public Error {
 public:
  explicit ContractViolation(const std::string& what)
      : Error(ExitCode::kRuntime, "contract violation: ", what) {}
};

class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what)
      : Error(ExitCode::kRuntime, "numerical error: ", what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ExitCode::kRuntime, "io error: ", what) {}
};

/// Raised by embedding providers (zero-norm vectors, missing backends, cache misses).
class EmbeddingError : public Error {
 public:
  EmbeddingError(ExitCode code, const std::string& what) : Error(code, "embedding error: ", what) {}
};

class ClusteringError : public Error {
 public:
  explicit ClusteringError(const std::string& what)
      : Error(ExitCode::kRuntime, "clustering error: ", what) {}
};

class CalibrationError : public Error {
 public:
  explicit CalibrationError(const std::string& what)
      : Error(ExitCode::kRuntime, "calibration error: ", what) {}
};

class MetricError : public Error {
 public:
  explicit MetricError(const std::string& what) : Error(ExitCode::kData, "metric error: ", what) {}
};

}  // namespace advdet
