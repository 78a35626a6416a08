#pragma once

#include <stdexcept>
#include <string>

namespace floodseg {

// Every failure the library reports derives from Error. The CLI maps the
// category onto its exit code.
enum class ErrorCategory { Config, Data, Numeric, Contract };

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}
  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

// Invalid parameters or configuration keys.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorCategory::Config, what) {}
};

// Data is present but has the wrong shape, bands or dimensions.
class SchemaError : public Error {
 public:
  explicit SchemaError(const std::string& what) : Error(ErrorCategory::Data, what) {}
};

// A file does not follow its binary or text format.
class FormatError : public Error {
 public:
  explicit FormatError(const std::string& what) : Error(ErrorCategory::Data, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorCategory::Data, what) {}
};

// Input is well formed but the operation is undefined on it (constant band,
// zero denominators, no valid pixels).
class DegenerateInputError : public Error {
 public:
  explicit DegenerateInputError(const std::string& what) : Error(ErrorCategory::Data, what) {}
};

// Non-finite loss or parameters during optimization.
class DivergenceError : public Error {
 public:
  explicit DivergenceError(const std::string& what) : Error(ErrorCategory::Numeric, what) {}
};

// An API was used out of order (stale forward trace, mutated frozen net).
class ContractError : public Error {
 public:
  explicit ContractError(const std::string& what) : Error(ErrorCategory::Contract, what) {}
};

}  // namespace floodseg
