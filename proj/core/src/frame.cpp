#include "pcp/frame.hpp"

#include "pcp/error.hpp"

namespace pcp {

bool is_known_frame_type(std::uint8_t type) {
  switch (static_cast<FrameType>(type)) {
    case FrameType::pake_msg1:
    case FrameType::pake_msg2:
    case FrameType::confirm_tag:
    case FrameType::app_data:
      return true;
  }
  return false;
}

FixedBytes<kFrameHeaderSize> encode_frame_header(FrameType type, std::uint32_t length) {
  if (length > kMaxFramePayload) fail(Errc::invalid_argument, "frame payload too large");
  return {kProtocolVersion,
          static_cast<std::uint8_t>(type),
          static_cast<std::uint8_t>(length >> 24),
          static_cast<std::uint8_t>(length >> 16),
          static_cast<std::uint8_t>(length >> 8),
          static_cast<std::uint8_t>(length)};
}

FrameHeader decode_frame_header(ByteView header) {
  if (header.size() != kFrameHeaderSize) fail(Errc::protocol_error, "short frame header");
  if (header[0] != kProtocolVersion) {
    fail(Errc::protocol_error, "unsupported protocol version " + std::to_string(header[0]));
  }
  if (!is_known_frame_type(header[1])) fail(Errc::protocol_error, "unknown frame type " + std::to_string(header[1]));
  std::uint32_t length = get_u32_be(header.subspan(2));
  if (length > kMaxFramePayload) fail(Errc::protocol_error, "frame length " + std::to_string(length) + " too large");
  return FrameHeader{static_cast<FrameType>(header[1]), length};
}

Bytes encode_frame(FrameType type, ByteView payload) {
  auto header = encode_frame_header(type, static_cast<std::uint32_t>(payload.size()));
  Bytes out(header.begin(), header.end());
  append(out, payload);
  return out;
}

Task<Frame> read_frame(Connection& conn, TimePoint deadline) {
  Bytes raw = co_await conn.read_exact(kFrameHeaderSize, deadline);
  auto header = decode_frame_header(raw);
  Bytes payload = co_await conn.read_exact(header.length, deadline);
  append(raw, payload);
  co_return Frame{header.type, std::move(payload), std::move(raw)};
}

}  // namespace pcp
