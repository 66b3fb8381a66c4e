#pragma once

#include <stdexcept>
#include <string>

namespace siamret {

// Error classes surfaced through the C API as status codes.
enum class ErrorCode {
  io,
  parse,
  invalid_argument,
  config,
  checksum,
  version,
  mismatch,
  numeric,
  empty_input,
  not_found,
  tape_reuse,
  zero_norm,
};

const char* error_code_name(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace siamret
