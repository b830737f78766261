#pragma once

#include <stdexcept>
#include <string>

namespace fieldvqa {

// Error families map one-to-one onto the CLI exit codes.
enum class ErrorCategory {
  kConfig = 1,
  kBackend = 2,
  kData = 3,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }
  int exit_code() const noexcept { return static_cast<int>(category_); }

 private:
  ErrorCategory category_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorCategory::kConfig, what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorCategory::kData, what) {}
};

enum class BackendFailure {
  kAuthentication,
  kRateLimited,
  kTimeout,
  kTransport,
  kServer,
  kBadRequest,
  kMalformedResponse,
  kMissingMockEntry,
};

const char* to_string(BackendFailure failure);

// True for failures worth another attempt after backoff.
bool is_retryable(BackendFailure failure);

class BackendError : public Error {
 public:
  BackendError(BackendFailure failure, const std::string& what, int attempts = 1)
      : Error(ErrorCategory::kBackend, what), failure_(failure), attempts_(attempts) {}

  BackendFailure failure() const noexcept { return failure_; }
  int attempts() const noexcept { return attempts_; }

 private:
  BackendFailure failure_;
  int attempts_;
};

}  // namespace fieldvqa
