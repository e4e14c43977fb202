#include "pcp/auth.hpp"

#include <sodium.h>

#include <algorithm>
#include <limits>

#include "pcp/error.hpp"

namespace pcp {

namespace {

constexpr std::string_view kGeneratorDomain = "pcp/cpace/v1/generator";
constexpr std::string_view kKeyScheduleSalt = "pcp/cpace/v1";
constexpr std::size_t kPointSize = crypto_core_ristretto255_BYTES;
constexpr std::size_t kScalarSize = crypto_core_ristretto255_SCALARBYTES;
constexpr std::size_t kTagSize = 32;

using Point = FixedBytes<kPointSize>;
using Scalar = FixedBytes<kScalarSize>;

void put_lv(Bytes& out, std::string_view s) {
  put_u32_be(out, static_cast<std::uint32_t>(s.size()));
  append(out, as_bytes(s));
}

Scalar random_scalar(RandomSource& rng) {
  Scalar s{};
  for (;;) {
    FixedBytes<crypto_core_ristretto255_NONREDUCEDSCALARBYTES> wide{};
    rng.fill(wide);
    crypto_core_ristretto255_scalar_reduce(s.data(), wide.data());
    if (!sodium_is_zero(s.data(), s.size())) return s;
  }
}

/// scalar * point; nullopt for an identity result or an invalid point.
std::optional<Point> multiply(const Scalar& scalar, ByteView point) {
  if (point.size() != kPointSize || crypto_core_ristretto255_is_valid_point(point.data()) != 1) {
    return std::nullopt;
  }
  Point out{};
  if (crypto_scalarmult_ristretto255(out.data(), scalar.data(), point.data()) != 0) return std::nullopt;
  return out;
}

std::string_view send_label(Role role) {
  return role == Role::initiator ? kLabelSendInitiator : kLabelSendResponder;
}

Role other(Role role) { return role == Role::initiator ? Role::responder : Role::initiator; }

crypto::Key expand_key(ByteView prk, std::string_view label, const crypto::Digest& transcript_hash) {
  Bytes info;
  append(info, as_bytes(label));
  append(info, transcript_hash);
  auto okm = crypto::hkdf_expand(prk, info, 32);
  crypto::Key key{};
  std::copy(okm.begin(), okm.end(), key.begin());
  return key;
}

Task<Handshake> run_initiator(Connection& conn, const PakeSecret& secret, const HandshakeOptions& options,
                              RandomSource& rng) {
  if (secret.session_binding.size() > 255) fail(Errc::invalid_argument, "session binding longer than 255 bytes");
  auto generator = pake_generator(secret);
  Scalar x = random_scalar(rng);
  auto own = multiply(x, generator);
  if (!own) fail(Errc::protocol_error, "degenerate generator");

  Bytes payload;
  payload.push_back(static_cast<std::uint8_t>(secret.session_binding.size()));
  append(payload, as_bytes(secret.session_binding));
  append(payload, options.local_peer.bytes());
  append(payload, *own);
  Bytes raw1 = encode_frame(FrameType::pake_msg1, payload);
  conn.write(raw1);

  Frame msg2 = co_await read_frame(conn, options.deadline);
  if (msg2.type != FrameType::pake_msg2) fail(Errc::protocol_error, "expected pake-msg-2");
  if (msg2.payload.size() != kPointSize) fail(Errc::protocol_error, "pake-msg-2 has wrong length");
  auto shared = multiply(x, msg2.payload);
  sodium_memzero(x.data(), x.size());
  if (!shared) fail(Errc::protocol_error, "pake-msg-2 carries an invalid group element");

  Bytes transcript = raw1;
  append(transcript, msg2.raw);
  auto keys = derive_session_keys(*shared, transcript, Role::initiator);
  co_return Handshake{keys, std::move(transcript), secret.session_binding, options.local_peer};
}

Task<Handshake> run_responder(Connection& conn, PakeSecret secret, const HandshakeOptions& options,
                              RandomSource& rng) {
  Frame msg1 = co_await read_frame(conn, options.deadline);
  if (msg1.type != FrameType::pake_msg1) fail(Errc::protocol_error, "expected pake-msg-1");
  const auto& p = msg1.payload;
  if (p.empty()) fail(Errc::protocol_error, "empty pake-msg-1");
  std::size_t binding_len = p[0];
  if (p.size() != 1 + binding_len + PeerId::kSize + kPointSize) {
    fail(Errc::protocol_error, "pake-msg-1 has wrong length");
  }
  std::string binding(p.begin() + 1, p.begin() + 1 + static_cast<std::ptrdiff_t>(binding_len));
  const auto& accepted = options.accepted_bindings;
  bool known = accepted.empty() ? binding == secret.session_binding
                                : std::find(accepted.begin(), accepted.end(), binding) != accepted.end();
  if (!known) fail(Errc::protocol_error, "pake-msg-1 names an unknown session binding");
  FixedBytes<PeerId::kSize> peer_bytes{};
  std::copy_n(p.begin() + 1 + static_cast<std::ptrdiff_t>(binding_len), PeerId::kSize, peer_bytes.begin());
  PeerId initiator_peer(peer_bytes);
  ByteView their_point(p.data() + 1 + binding_len + PeerId::kSize, kPointSize);

  secret.session_binding = binding;
  auto generator = pake_generator(secret);
  Scalar y = random_scalar(rng);
  auto own = multiply(y, generator);
  auto shared = multiply(y, their_point);
  sodium_memzero(y.data(), y.size());
  if (!own) fail(Errc::protocol_error, "degenerate generator");
  if (!shared) fail(Errc::protocol_error, "pake-msg-1 carries an invalid group element");

  Bytes raw2 = encode_frame(FrameType::pake_msg2, *own);
  conn.write(raw2);

  Bytes transcript = msg1.raw;
  append(transcript, raw2);
  auto keys = derive_session_keys(*shared, transcript, Role::responder);
  co_return Handshake{keys, std::move(transcript), binding, initiator_peer};
}

}  // namespace

std::string_view to_string(Role role) { return role == Role::initiator ? "initiator" : "responder"; }

PakeSecret PakeSecret::from(const Passphrase& p, const DiscoveryKey& key) {
  return PakeSecret{p.render(), key.id_string};
}

FixedBytes<32> pake_generator(const PakeSecret& secret) {
  crypto::ensure_sodium();
  Bytes input;
  append(input, as_bytes(kGeneratorDomain));
  put_lv(input, secret.passphrase);
  put_lv(input, secret.session_binding);
  auto wide = crypto::sha512(input);
  FixedBytes<32> point{};
  crypto_core_ristretto255_from_hash(point.data(), wide.data());
  return point;
}

SessionKeys derive_session_keys(ByteView shared_element, ByteView transcript, Role role) {
  auto prk = crypto::hkdf_extract(as_bytes(kKeyScheduleSalt), shared_element);
  auto th = crypto::sha256(transcript);
  auto initiator_key = expand_key(prk, kLabelSendInitiator, th);
  auto responder_key = expand_key(prk, kLabelSendResponder, th);
  SessionKeys keys;
  keys.role = role;
  keys.confirm = expand_key(prk, kLabelConfirm, th);
  keys.send = role == Role::initiator ? initiator_key : responder_key;
  keys.recv = role == Role::initiator ? responder_key : initiator_key;
  sodium_memzero(prk.data(), prk.size());
  return keys;
}

crypto::Digest confirmation_tag(const crypto::Key& confirm_key, Role sender, ByteView transcript) {
  Bytes message;
  append(message, as_bytes(sender == Role::initiator ? kConfirmInitiator : kConfirmResponder));
  append(message, transcript);
  return crypto::hmac_sha256(confirm_key, message);
}

Task<Handshake> pake_handshake(Connection& conn, PakeSecret secret, HandshakeOptions options, RandomSource& rng) {
  Errc code{};
  std::string what;
  try {
    if (options.role == Role::initiator) {
      co_return co_await run_initiator(conn, secret, options, rng);
    }
    co_return co_await run_responder(conn, std::move(secret), options, rng);
  } catch (const Error& e) {
    code = e.code();
    what = e.what();
  }
  conn.abort("handshake failed: " + what);
  switch (code) {
    case Errc::timeout:
      fail(Errc::handshake_timeout, "pake handshake timed out");
    case Errc::connection_closed:
    case Errc::connection_reset:
      fail(Errc::protocol_error, "peer dropped the connection during the pake exchange: " + what);
    default:
      fail(code, what);
  }
}

Task<std::shared_ptr<SecureChannel>> confirm_key(std::shared_ptr<Connection> conn, Handshake handshake,
                                                 TimePoint deadline) {
  Errc code{};
  std::string what;
  try {
    const Role role = handshake.keys.role;
    auto own = confirmation_tag(handshake.keys.confirm, role, handshake.transcript);
    conn->write(encode_frame(FrameType::confirm_tag, own));

    Frame reply = co_await read_frame(*conn, deadline);
    if (reply.type != FrameType::confirm_tag || reply.payload.size() != kTagSize) {
      fail(Errc::protocol_error, "expected a confirm-tag frame");
    }
    auto expected = confirmation_tag(handshake.keys.confirm, other(role), handshake.transcript);
    if (!crypto::equal(expected, reply.payload)) {
      fail(Errc::authentication_failure, "key confirmation failed: peer derived a different key");
    }
    co_return std::make_shared<SecureChannel>(conn, handshake.keys);
  } catch (const Error& e) {
    code = e.code();
    what = e.what();
  }
  conn->abort("key confirmation failed");
  switch (code) {
    case Errc::timeout:
      fail(Errc::handshake_timeout, "key confirmation timed out");
    case Errc::connection_closed:
    case Errc::connection_reset:
      fail(Errc::authentication_failure, "peer dropped the connection during key confirmation");
    default:
      fail(code, what);
  }
}

SecureChannel::SecureChannel(std::shared_ptr<Connection> conn, const SessionKeys& keys)
    : SecureChannel(std::move(conn), keys.role, CipherState{keys.send, 0}, CipherState{keys.recv, 0}) {}

SecureChannel::SecureChannel(std::shared_ptr<Connection> conn, Role role, CipherState send, CipherState recv)
    : conn_(std::move(conn)), role_(role), send_(send), recv_(recv) {}

void SecureChannel::check_usable() const {
  if (aborted_) fail(Errc::connection_reset, "secure channel was aborted");
}

namespace {
FixedBytes<crypto::kAeadNonceSize> nonce_for(std::uint64_t counter) {
  FixedBytes<crypto::kAeadNonceSize> nonce{};
  for (int i = 0; i < 8; ++i) nonce[4 + i] = static_cast<std::uint8_t>(counter >> (56 - 8 * i));
  return nonce;
}
}  // namespace

Bytes SecureChannel::seal(ByteView plaintext) {
  check_usable();
  if (send_.counter == std::numeric_limits<std::uint64_t>::max()) {
    abort("send nonce space exhausted");
    fail(Errc::channel_exhausted, "send nonce space exhausted");
  }
  if (plaintext.size() + crypto::kAeadTagSize > kMaxFramePayload) {
    fail(Errc::invalid_argument, "plaintext too large for one frame");
  }
  auto header = encode_frame_header(FrameType::app_data,
                                    static_cast<std::uint32_t>(plaintext.size() + crypto::kAeadTagSize));
  Bytes ad;
  append(ad, as_bytes(send_label(role_)));
  append(ad, header);
  auto ct = crypto::aead_seal(send_.key, nonce_for(send_.counter), ad, plaintext);
  ++send_.counter;
  Bytes frame(header.begin(), header.end());
  append(frame, ct);
  return frame;
}

Bytes SecureChannel::open(ByteView frame) {
  check_usable();
  try {
    if (frame.size() < kFrameHeaderSize) fail(Errc::decrypt_error, "truncated frame");
    auto header = decode_frame_header(frame.first(kFrameHeaderSize));
    if (header.type != FrameType::app_data) fail(Errc::protocol_error, "expected an app-data frame");
    if (header.length != frame.size() - kFrameHeaderSize) fail(Errc::decrypt_error, "frame length mismatch");
    if (recv_.counter == std::numeric_limits<std::uint64_t>::max()) {
      fail(Errc::channel_exhausted, "receive nonce space exhausted");
    }
    Bytes ad;
    append(ad, as_bytes(send_label(other(role_))));
    append(ad, frame.first(kFrameHeaderSize));
    auto pt = crypto::aead_open(recv_.key, nonce_for(recv_.counter), ad, frame.subspan(kFrameHeaderSize));
    if (!pt) fail(Errc::decrypt_error, "frame failed authentication");
    ++recv_.counter;
    return std::move(*pt);
  } catch (const Error& e) {
    abort(e.what());
    throw;
  }
}

void SecureChannel::send(ByteView plaintext) {
  auto frame = seal(plaintext);
  try {
    conn_->write(frame);
  } catch (const Error& e) {
    abort(e.what());
    throw;
  }
}

Task<Bytes> SecureChannel::receive(TimePoint deadline) {
  check_usable();
  Errc code{};
  std::string what;
  try {
    Frame frame = co_await read_frame(*conn_, deadline);
    co_return open(frame.raw);
  } catch (const Error& e) {
    code = e.code();
    what = e.what();
  }
  abort(what);
  fail(code, what);
}

void SecureChannel::abort(const std::string& reason) {
  if (aborted_) return;
  aborted_ = true;
  if (conn_) conn_->abort(reason);
}

void SecureChannel::close() {
  if (!aborted_ && conn_) conn_->close();
}

}  // namespace pcp
