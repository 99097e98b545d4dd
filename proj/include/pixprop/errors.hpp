#pragma once

#include <stdexcept>
#include <string>

namespace pixprop {

// Failure categories surfaced by the command-line tool as distinct exit codes.
enum class ErrorCategory { kConfig = 2, kData = 3, kDivergence = 4, kIo = 5 };

class PixpropError : public std::runtime_error {
 public:
  PixpropError(ErrorCategory category, const std::string& message)
      : std::runtime_error(message), category_(category) {}
  ErrorCategory category() const { return category_; }

 private:
  ErrorCategory category_;
};

class ConfigError : public PixpropError {
 public:
  explicit ConfigError(const std::string& m) : PixpropError(ErrorCategory::kConfig, m) {}
};

class DataError : public PixpropError {
 public:
  explicit DataError(const std::string& m) : PixpropError(ErrorCategory::kData, m) {}
};

class DivergenceError : public PixpropError {
 public:
  explicit DivergenceError(const std::string& m)
      : PixpropError(ErrorCategory::kDivergence, m) {}
};

class IoError : public PixpropError {
 public:
  explicit IoError(const std::string& m) : PixpropError(ErrorCategory::kIo, m) {}
};

}  // namespace pixprop
