#include "pcp/crypto.hpp"

#include <mutex>

#include "pcp/error.hpp"

namespace pcp::crypto {

void ensure_sodium() {
  static std::once_flag once;
  std::call_once(once, [] {
    if (sodium_init() < 0) fail(Errc::unavailable, "libsodium initialization failed");
  });
}

Digest sha256(ByteView data) {
  ensure_sodium();
  Digest out{};
  crypto_hash_sha256(out.data(), data.data(), data.size());
  return out;
}

FixedBytes<64> sha512(ByteView data) {
  ensure_sodium();
  FixedBytes<64> out{};
  crypto_hash_sha512(out.data(), data.data(), data.size());
  return out;
}

Sha256::Sha256() {
  ensure_sodium();
  crypto_hash_sha256_init(&state_);
}

void Sha256::update(ByteView data) {
  crypto_hash_sha256_update(&state_, data.data(), data.size());
}

Digest Sha256::finish() {
  Digest out{};
  crypto_hash_sha256_final(&state_, out.data());
  return out;
}

Digest hmac_sha256(ByteView key, ByteView message) {
  ensure_sodium();
  crypto_auth_hmacsha256_state st;
  crypto_auth_hmacsha256_init(&st, key.data(), key.size());
  crypto_auth_hmacsha256_update(&st, message.data(), message.size());
  Digest out{};
  crypto_auth_hmacsha256_final(&st, out.data());
  sodium_memzero(&st, sizeof st);
  return out;
}

Digest hkdf_extract(ByteView salt, ByteView ikm) {
  if (salt.empty()) {
    Digest zeros{};
    return hmac_sha256(zeros, ikm);
  }
  return hmac_sha256(salt, ikm);
}

Bytes hkdf_expand(ByteView prk, ByteView info, std::size_t length) {
  if (length > 255 * 32) fail(Errc::invalid_argument, "hkdf output too long");
  Bytes okm;
  okm.reserve(length);
  Bytes block;
  std::uint8_t counter = 1;
  while (okm.size() < length) {
    Bytes input = block;
    append(input, info);
    input.push_back(counter++);
    auto t = hmac_sha256(prk, input);
    block.assign(t.begin(), t.end());
    std::size_t take = std::min(block.size(), length - okm.size());
    okm.insert(okm.end(), block.begin(), block.begin() + static_cast<std::ptrdiff_t>(take));
  }
  return okm;
}

bool equal(ByteView a, ByteView b) {
  if (a.size() != b.size()) return false;
  if (a.empty()) return true;
  return sodium_memcmp(a.data(), b.data(), a.size()) == 0;
}

Bytes aead_seal(const Key& key, const FixedBytes<kAeadNonceSize>& nonce,
                ByteView associated_data, ByteView plaintext) {
  ensure_sodium();
  Bytes out(plaintext.size() + kAeadTagSize);
  unsigned long long written = 0;
  crypto_aead_chacha20poly1305_ietf_encrypt(
      out.data(), &written, plaintext.data(), plaintext.size(),
      associated_data.data(), associated_data.size(), nullptr, nonce.data(),
      key.data());
  out.resize(static_cast<std::size_t>(written));
  return out;
}

std::optional<Bytes> aead_open(const Key& key,
                               const FixedBytes<kAeadNonceSize>& nonce,
                               ByteView associated_data, ByteView ciphertext) {
  ensure_sodium();
  if (ciphertext.size() < kAeadTagSize) return std::nullopt;
  Bytes out(ciphertext.size() - kAeadTagSize);
  unsigned long long written = 0;
  if (crypto_aead_chacha20poly1305_ietf_decrypt(
          out.data(), &written, nullptr, ciphertext.data(), ciphertext.size(),
          associated_data.data(), associated_data.size(), nonce.data(),
          key.data()) != 0) {
    return std::nullopt;
  }
  out.resize(static_cast<std::size_t>(written));
  return out;
}

}  // namespace pcp::crypto
