#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

namespace f0lab {

// Error category, mapped to distinct process exit codes by the CLI.
enum class ErrorCode {
  invalid_config = 2,  // bad option/config values
  io = 3,              // missing or unreadable/unwritable file
  parse = 4,           // malformed file content or schema violation
  mismatch = 5,        // model/corpus schema mismatch, misaligned inputs
  numeric = 6,         // non-finite loss, divergence
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string message)
      : std::runtime_error(std::move(message)), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

namespace detail {
inline void format_into(std::ostringstream&) {}

template <typename T, typename... Rest>
void format_into(std::ostringstream& os, const T& v, const Rest&... rest) {
  os << v;
  format_into(os, rest...);
}
}  // namespace detail

template <typename... Parts>
[[noreturn]] void raise(ErrorCode code, const Parts&... parts) {
  std::ostringstream os;
  detail::format_into(os, parts...);
  throw Error(code, os.str());
}

template <typename... Parts>
void require(bool cond, ErrorCode code, const Parts&... parts) {
  if (!cond) raise(code, parts...);
}

}  // namespace f0lab
