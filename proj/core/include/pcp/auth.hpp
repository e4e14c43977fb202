#pragma once

// Password-authenticated key exchange over a fresh connection.
//
// The PAKE is CPace instantiated on ristretto255: both sides map
// (passphrase, session binding) to a secret generator G, exchange x*G and
// y*G, and agree on K = xy*G. One round trip; an active attacker gets one
// password guess per connection and a passive one learns nothing usable
// offline. Key confirmation is one transcript MAC in each direction.
//
//   initiator -> responder  pake-msg-1  [len(binding)][binding][peer id][X]
//   responder -> initiator  pake-msg-2  [Y]
//   both                    confirm-tag HMAC(k_confirm, direction label | transcript)

#include <memory>
#include <string>
#include <vector>

#include "pcp/async.hpp"
#include "pcp/connection.hpp"
#include "pcp/crypto.hpp"
#include "pcp/frame.hpp"
#include "pcp/passphrase.hpp"
#include "pcp/peer.hpp"
#include "pcp/random.hpp"
#include "pcp/rendezvous.hpp"

namespace pcp {

enum class Role { initiator, responder };

std::string_view to_string(Role role);

inline constexpr std::string_view kLabelSendInitiator = "pcp/send/initiator";
inline constexpr std::string_view kLabelSendResponder = "pcp/send/responder";
inline constexpr std::string_view kLabelConfirm = "pcp/confirm";
inline constexpr std::string_view kConfirmInitiator = "confirm/initiator";
inline constexpr std::string_view kConfirmResponder = "confirm/responder";

inline constexpr Millis kDefaultHandshakeTimeout = 10'000;

struct PakeSecret {
  /// Canonical "word1-...-wordN" rendering of the full passphrase.
  std::string passphrase;
  /// Discovery id string the connection was rendezvoused under.
  std::string session_binding;

  static PakeSecret from(const Passphrase& p, const DiscoveryKey& key);
};

struct SessionKeys {
  crypto::Key send{};
  crypto::Key recv{};
  crypto::Key confirm{};
  Role role = Role::initiator;
};

/// What pake_handshake hands to confirm_key.
struct Handshake {
  SessionKeys keys;
  /// Raw msg-1 frame followed by raw msg-2 frame.
  Bytes transcript;
  std::string session_binding;
  PeerId initiator_peer;
};

struct HandshakeOptions {
  Role role = Role::initiator;
  /// Sent in msg-1 by the initiator.
  PeerId local_peer;
  /// Responder only: bindings it has published. Empty means only the
  /// secret's own binding is accepted.
  std::vector<std::string> accepted_bindings;
  TimePoint deadline = kNever;
};

/// Maps (passphrase, binding) to the ristretto255 generator both sides use.
FixedBytes<32> pake_generator(const PakeSecret& secret);

/// Key schedule from the shared group element and the handshake transcript.
SessionKeys derive_session_keys(ByteView shared_element, ByteView transcript, Role role);

crypto::Digest confirmation_tag(const crypto::Key& confirm_key, Role sender, ByteView transcript);

/// Runs the PAKE exchange. Never reveals whether the secrets matched; that
/// is confirm_key's job. Errors: protocol_error (malformed or unexpected
/// message, unknown binding), handshake_timeout. The connection is dropped
/// on any error.
Task<Handshake> pake_handshake(Connection& conn, PakeSecret secret, HandshakeOptions options, RandomSource& rng);

struct CipherState {
  crypto::Key key{};
  std::uint64_t counter = 0;
};

/// Encrypted framing over an authenticated connection. Each direction has
/// its own key and a strictly increasing 64-bit nonce counter; any failed
/// open aborts the channel for good.
class SecureChannel {
 public:
  SecureChannel(std::shared_ptr<Connection> conn, const SessionKeys& keys);
  SecureChannel(std::shared_ptr<Connection> conn, Role role, CipherState send, CipherState recv);

  /// Frame = header | AEAD(k_send, counter, label | header, plaintext).
  /// Throws Error(channel_exhausted) when the counter would wrap.
  Bytes seal(ByteView plaintext);
  /// Inverse of the peer's seal. Throws Error(decrypt_error) and aborts.
  Bytes open(ByteView frame);

  void send(ByteView plaintext);
  Task<Bytes> receive(TimePoint deadline = kNever);

  void abort(const std::string& reason);
  void close();
  bool aborted() const { return aborted_; }

  Role role() const { return role_; }
  std::uint64_t send_counter() const { return send_.counter; }
  std::uint64_t recv_counter() const { return recv_.counter; }
  const std::shared_ptr<Connection>& connection() const { return conn_; }

 private:
  void check_usable() const;

  std::shared_ptr<Connection> conn_;
  Role role_;
  CipherState send_;
  CipherState recv_;
  bool aborted_ = false;
};

/// Mutual challenge: each side sends its transcript MAC and checks the
/// peer's. Errors: authentication_failure (tag mismatch or the peer
/// dropped us), handshake_timeout. The connection is dropped on failure.
Task<std::shared_ptr<SecureChannel>> confirm_key(std::shared_ptr<Connection> conn, Handshake handshake,
                                                 TimePoint deadline);

}  // namespace pcp
