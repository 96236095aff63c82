#pragma once

#include <stdexcept>
#include <string>

namespace gridloop {

enum class ErrorCode {
  io = 1,
  parse,
  invalid_argument,
  topology,
  convergence,
  certificate,
  observability,
  dimension,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace gridloop
