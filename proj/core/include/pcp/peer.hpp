#pragma once

#include <compare>
#include <string>

#include "pcp/bytes.hpp"
#include "pcp/random.hpp"

namespace pcp {

/// 16 random bytes per running node. Not a key hash: peers are
/// authenticated by the PAKE, never by their id.
class PeerId {
 public:
  static constexpr std::size_t kSize = 16;

  PeerId() = default;
  explicit PeerId(const FixedBytes<kSize>& bytes) : bytes_(bytes) {}

  static PeerId random(RandomSource& rng);
  /// Throws Error(parse_error).
  static PeerId from_hex(std::string_view hex);

  const FixedBytes<kSize>& bytes() const noexcept { return bytes_; }
  std::string hex() const { return to_hex(bytes_); }
  /// First 8 hex digits, for logs.
  std::string short_hex() const { return hex().substr(0, 8); }

  auto operator<=>(const PeerId&) const = default;

 private:
  FixedBytes<kSize> bytes_{};
};

struct PeerAddress {
  PeerId peer_id;
  /// "sim:<node index>" on the simulator, "host:port" over TCP.
  std::string endpoint;

  auto operator<=>(const PeerAddress&) const = default;
};

}  // namespace pcp
