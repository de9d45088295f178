#pragma once

#include <stdexcept>
#include <string>

namespace cap2aug {

enum class ErrorKind {
  invalid_argument,
  io_failure,
  bad_magic,
  truncated_payload,
  dimension_mismatch,
  non_finite_value,
  label_out_of_range,
  zero_row,
  unnormalized_input,
  insufficient_shots,
  empty_input,
  empty_synthetic_with_positive_alpha,
  schema_violation,
};

const char* to_string(ErrorKind kind);

// All library failures surface as this exception; `kind` drives CLI exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& detail)
      : std::runtime_error(std::string(to_string(kind)) + ": " + detail), kind_(kind), detail_(detail) {}

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorKind kind_;
  std::string detail_;
};

}  // namespace cap2aug
