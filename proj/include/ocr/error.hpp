#pragma once

#include <stdexcept>
#include <string>

namespace ocr {

/// Failure categories; the CLI maps each to an exit code.
enum class ErrorKind { kRuntime, kInvalidConfig, kMissingFile };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  explicit Error(const std::string& what) : Error(ErrorKind::kRuntime, what) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace ocr
