#pragma once

#include <stdexcept>
#include <string>

namespace fedhorizon {

/// Broad failure category; each maps onto a stable process exit code.
enum class ErrorCategory {
  config = 1,    // usage or configuration problem
  data = 2,      // malformed or inconsistent input data
  protocol = 3,  // wire protocol violation or timeout
  bind = 4,      // coordinator could not listen on its endpoint
  connect = 5,   // node exhausted its connection attempts
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
  explicit ConfigError(const std::string& what) : Error(ErrorCategory::config, what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorCategory::data, what) {}
};

}  // namespace fedhorizon
