#pragma once

#include <sodium.h>

#include <cstdint>
#include <optional>

#include "pcp/bytes.hpp"

// Thin RAII/value wrappers over libsodium. Nothing here is protocol
// specific; the key schedule and PAKE live in auth.

namespace pcp::crypto {

using Digest = FixedBytes<32>;
using Key = FixedBytes<32>;

inline constexpr std::size_t kAeadTagSize = crypto_aead_chacha20poly1305_ietf_ABYTES;
inline constexpr std::size_t kAeadNonceSize = crypto_aead_chacha20poly1305_ietf_NPUBBYTES;

/// Initializes libsodium once; safe to call from anywhere.
void ensure_sodium();

Digest sha256(ByteView data);
FixedBytes<64> sha512(ByteView data);

class Sha256 {
 public:
  Sha256();
  void update(ByteView data);
  Digest finish();

 private:
  crypto_hash_sha256_state state_{};
};

Digest hmac_sha256(ByteView key, ByteView message);

/// RFC 5869 HKDF with SHA-256.
Digest hkdf_extract(ByteView salt, ByteView ikm);
Bytes hkdf_expand(ByteView prk, ByteView info, std::size_t length);

/// Constant-time comparison; false on length mismatch.
bool equal(ByteView a, ByteView b);

/// ChaCha20-Poly1305 (IETF). Output is ciphertext followed by the tag.
Bytes aead_seal(const Key& key, const FixedBytes<kAeadNonceSize>& nonce,
                ByteView associated_data, ByteView plaintext);
std::optional<Bytes> aead_open(const Key& key,
                               const FixedBytes<kAeadNonceSize>& nonce,
                               ByteView associated_data, ByteView ciphertext);

}  // namespace pcp::crypto
