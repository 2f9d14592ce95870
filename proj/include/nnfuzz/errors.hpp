#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace nnfuzz {

enum class ErrorCode {
  io_error,
  bad_magic,
  malformed_header,
  shape_mismatch,
  unsupported_layer,
  truncated_blob,
  empty_model,
  empty_dataset,
  invalid_config,
  invalid_argument,
  index_out_of_range,
  depth_exceeded,
  fully_expanded,
  profile_mismatch,
};

std::string_view error_code_name(ErrorCode code) noexcept;

/// The single exception type thrown by the library. The code names the failure class.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline std::string_view error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::io_error: return "io_error";
    case ErrorCode::bad_magic: return "bad_magic";
    case ErrorCode::malformed_header: return "malformed_header";
    case ErrorCode::shape_mismatch: return "shape_mismatch";
    case ErrorCode::unsupported_layer: return "unsupported_layer";
    case ErrorCode::truncated_blob: return "truncated_blob";
    case ErrorCode::empty_model: return "empty_model";
    case ErrorCode::empty_dataset: return "empty_dataset";
    case ErrorCode::invalid_config: return "invalid_config";
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::index_out_of_range: return "index_out_of_range";
    case ErrorCode::depth_exceeded: return "depth_exceeded";
    case ErrorCode::fully_expanded: return "fully_expanded";
    case ErrorCode::profile_mismatch: return "profile_mismatch";
  }
  return "unknown";
}

}  // namespace nnfuzz
