#pragma once

#include <cstdint>

#include "pcp/async.hpp"
#include "pcp/bytes.hpp"
#include "pcp/connection.hpp"

namespace pcp {

// Wire frame: version (1) | type (1) | payload length (4, big-endian) | payload

inline constexpr std::uint8_t kProtocolVersion = 0x01;
inline constexpr std::size_t kFrameHeaderSize = 6;
/// Upper bound on a frame payload; larger lengths are a protocol error.
inline constexpr std::uint32_t kMaxFramePayload = 16u * 1024 * 1024 + 256;

enum class FrameType : std::uint8_t {
  pake_msg1 = 0x01,
  pake_msg2 = 0x02,
  confirm_tag = 0x03,
  app_data = 0x10,
};

bool is_known_frame_type(std::uint8_t type);

struct FrameHeader {
  FrameType type;
  std::uint32_t length;
};

FixedBytes<kFrameHeaderSize> encode_frame_header(FrameType type, std::uint32_t length);
/// Throws Error(protocol_error) on a version, type or length violation.
FrameHeader decode_frame_header(ByteView header);

Bytes encode_frame(FrameType type, ByteView payload);

struct Frame {
  FrameType type;
  Bytes payload;
  /// Header plus payload exactly as read from the wire.
  Bytes raw;
};

Task<Frame> read_frame(Connection& conn, TimePoint deadline);

}  // namespace pcp
