#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dyngrasp {

/// Broad failure classes. The CLI maps them onto exit codes 2, 3 and 4.
enum class ErrorKind { Config, Data, Invariant };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorKind::Config, what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorKind::Data, what) {}
};

class InvariantError : public Error {
 public:
  explicit InvariantError(const std::string& what)
      : Error(ErrorKind::Invariant, what) {}
};

// Filter parameters that cannot be realized (edges outside (0, nyquist), odd order).
class InvalidDesignError : public ConfigError {
 public:
  explicit InvalidDesignError(const std::string& what)
      : ConfigError("invalid filter design: " + what) {}
};

// An MVC envelope whose maximum is not positive cannot normalize its channel.
class DegenerateMvcError : public DataError {
 public:
  explicit DegenerateMvcError(std::size_t channel)
      : DataError("degenerate MVC normalizer on channel " +
                  std::to_string(channel + 1) + " (column ch" +
                  (channel + 1 < 10 ? "0" : "") + std::to_string(channel + 1) +
                  "): maximum must be > 0"),
        channel_(channel) {}

  /// Zero-based channel index.
  std::size_t channel() const noexcept { return channel_; }

 private:
  std::size_t channel_;
};

class SingularCovarianceError : public DataError {
 public:
  explicit SingularCovarianceError(const std::string& what)
      : DataError(what + "; set lambda > 0 to regularize the covariance") {}
};

// Malformed input file. Names the file and the offending field.
class SchemaError : public DataError {
 public:
  SchemaError(const std::string& file, const std::string& field,
              const std::string& detail)
      : DataError(file + ": field '" + field + "': " + detail),
        file_(file),
        field_(field) {}

  const std::string& file() const noexcept { return file_; }
  const std::string& field() const noexcept { return field_; }

 private:
  std::string file_;
  std::string field_;
};

}  // namespace dyngrasp
