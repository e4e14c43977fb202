#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace pcp {

enum class Errc {
  invalid_argument,
  parse_error,
  unavailable,
  dial_error,
  protocol_error,
  handshake_timeout,
  authentication_failure,
  channel_exhausted,
  decrypt_error,
  connection_closed,
  connection_reset,
  timeout,
  transfer_error,
  io_error,
};

std::string_view to_string(Errc code) noexcept;

/// Every failure raised by the protocol library carries one of the codes
/// above; callers switch on code(), never on the message text.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) {
  throw Error(code, what);
}

}  // namespace pcp
