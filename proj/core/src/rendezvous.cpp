#include "pcp/rendezvous.hpp"

#include "pcp/crypto.hpp"
#include "pcp/error.hpp"

namespace pcp {

TimeSlot::TimeSlot(std::int64_t start, std::int64_t width) : start_(start), width_(width) {
  if (width <= 0) fail(Errc::invalid_argument, "slot width must be positive");
  if (start < 0) fail(Errc::invalid_argument, "slot start must be non-negative");
  if (start % width != 0) fail(Errc::invalid_argument, "slot start is not a multiple of its width");
}

TimeSlot truncate_to_slot(std::int64_t now_seconds, std::int64_t width) {
  if (width <= 0) fail(Errc::invalid_argument, "slot width must be positive");
  if (now_seconds < 0) fail(Errc::invalid_argument, "time before the unix epoch");
  return TimeSlot(now_seconds / width * width, width);
}

TimeSlot previous_slot(const TimeSlot& slot) {
  if (slot.start() < slot.width()) {
    fail(Errc::invalid_argument, "no slot precedes the epoch slot");
  }
  return TimeSlot(slot.start() - slot.width(), slot.width());
}

DiscoveryKey discovery_key(ChannelId channel, const TimeSlot& slot) {
  std::string id = "/pcp/" + std::to_string(slot.start()) + "/" + std::to_string(channel.value());
  auto key = crypto::sha256(as_bytes(id));
  return DiscoveryKey{channel, slot, std::move(id), key};
}

}  // namespace pcp
