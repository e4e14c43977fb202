#pragma once

#include <compare>
#include <cstdint>
#include <string>

#include "pcp/bytes.hpp"
#include "pcp/passphrase.hpp"

namespace pcp {

/// Protocol constant: both peers must agree on it. Other widths exist for tests.
inline constexpr std::int64_t kSlotWidthSeconds = 300;

using ContentKey = FixedBytes<32>;

/// A window of unix time [start, start + width). start is a multiple of width.
class TimeSlot {
 public:
  TimeSlot(std::int64_t start, std::int64_t width = kSlotWidthSeconds);

  std::int64_t start() const noexcept { return start_; }
  std::int64_t width() const noexcept { return width_; }
  std::int64_t end() const noexcept { return start_ + width_; }

  auto operator<=>(const TimeSlot&) const = default;

 private:
  std::int64_t start_;
  std::int64_t width_;
};

TimeSlot truncate_to_slot(std::int64_t now_seconds, std::int64_t width = kSlotWidthSeconds);

/// Throws Error(invalid_argument) when the slot starts before its own width.
TimeSlot previous_slot(const TimeSlot& slot);

struct DiscoveryKey {
  ChannelId channel;
  TimeSlot slot;
  std::string id_string;   // "/pcp/{slot start}/{channel}"
  ContentKey content_key;  // SHA-256 of id_string

  bool operator==(const DiscoveryKey&) const = default;
};

DiscoveryKey discovery_key(ChannelId channel, const TimeSlot& slot);

}  // namespace pcp
