#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace entsim {

/// Broad failure categories. The CLI maps these onto process exit codes.
enum class ErrorCategory {
  domain = 1,
  config = 2,
  fit = 3,
  io = 4,
  analysis = 5,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  explicit DomainError(const std::string& what) : Error(ErrorCategory::domain, what) {}
};

/// Rate coefficients that imply a channel efficiency above one.
class InconsistentCoefficients : public Error {
 public:
  explicit InconsistentCoefficients(const std::string& what)
      : Error(ErrorCategory::config, what) {}
};

/// Linear least squares with a rank-deficient design matrix.
class SingularFit : public Error {
 public:
  explicit SingularFit(const std::string& what) : Error(ErrorCategory::fit, what) {}
};

class NoPeakError : public Error {
 public:
  explicit NoPeakError(const std::string& what) : Error(ErrorCategory::analysis, what) {}
};

class InsufficientData : public Error {
 public:
  explicit InsufficientData(const std::string& what) : Error(ErrorCategory::analysis, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorCategory::io, what) {}
};

enum class ConfigErrorCode {
  missing_file = 10,
  parse_error = 11,
  schema_violation = 12,
  invariant_violation = 13,
};

/// Configuration problem, carrying the JSON key path that caused it.
class ConfigError : public Error {
 public:
  ConfigError(ConfigErrorCode code, std::string key_path, const std::string& message)
      : Error(ErrorCategory::config,
              key_path.empty() ? message : key_path + ": " + message),
        code_(code),
        key_path_(std::move(key_path)) {}

  ConfigErrorCode code() const noexcept { return code_; }
  const std::string& key_path() const noexcept { return key_path_; }

 private:
  ConfigErrorCode code_;
  std::string key_path_;
};

}  // namespace entsim
