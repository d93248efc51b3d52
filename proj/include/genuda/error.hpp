#pragma once

#include <stdexcept>
#include <string>

namespace genuda {

enum class ErrorCode {
  kIo = 1,
  kParse,
  kConfig,
  kLabel,
  kTemplate,
  kShape,
  kContract,
  kDomain,  // numeric precondition (empty corpus, batch too small, ...)
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

}  // namespace genuda
