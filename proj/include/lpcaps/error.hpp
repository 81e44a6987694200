#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace lpcaps {

/// Validation errors map to CLI exit code 2, runtime errors to 1.
enum class ErrorClass { kValidation, kRuntime };

/// Every failure surfaced by the toolkit carries a stable machine-readable
/// code (e.g. "duplicate_track_id") alongside the human message.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message,
        ErrorClass cls = ErrorClass::kValidation)
      : std::runtime_error(message), code_(std::move(code)), class_(cls) {}

  const std::string& code() const noexcept { return code_; }
  ErrorClass error_class() const noexcept { return class_; }

 private:
  std::string code_;
  ErrorClass class_;
};

inline Error validation_error(std::string code, const std::string& message) {
  return Error(std::move(code), message, ErrorClass::kValidation);
}

inline Error runtime_error(std::string code, const std::string& message) {
  return Error(std::move(code), message, ErrorClass::kRuntime);
}

}  // namespace lpcaps
