#include "pcp/random.hpp"

#include <sodium.h>

#include <algorithm>
#include <limits>

#include "pcp/crypto.hpp"
#include "pcp/error.hpp"

namespace pcp {

std::uint64_t RandomSource::next_u64() {
  FixedBytes<8> raw{};
  fill(raw);
  return get_u64_be(raw);
}

std::uint64_t RandomSource::uniform(std::uint64_t bound) {
  if (bound == 0) fail(Errc::invalid_argument, "uniform bound must be positive");
  // Rejection sampling over the largest multiple of bound.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  for (;;) {
    std::uint64_t v = next_u64();
    if (v < limit) return v % bound;
  }
}

std::int64_t RandomSource::uniform_between(std::int64_t lo, std::int64_t hi) {
  if (hi < lo) fail(Errc::invalid_argument, "empty range");
  auto span = static_cast<std::uint64_t>(hi - lo) + 1;
  return lo + static_cast<std::int64_t>(uniform(span));
}

bool RandomSource::chance(double p) {
  if (p <= 0.0) return false;
  if (p >= 1.0) return true;
  // 53 random bits give a uniform double in [0, 1).
  double u = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  return u < p;
}

void SystemRandom::fill(std::span<std::uint8_t> out) {
  crypto::ensure_sodium();
  randombytes_buf(out.data(), out.size());
}

SeededRandom::SeededRandom(std::uint64_t seed) {
  Bytes material;
  append(material, as_bytes("pcp/seeded-random"));
  put_u64_be(material, seed);
  key_ = crypto::sha256(material);
}

void SeededRandom::fill(std::span<std::uint8_t> out) {
  std::size_t pos = 0;
  while (pos < out.size()) {
    if (used_ == buffer_.size()) {
      FixedBytes<8> nonce{};
      Bytes counter;
      put_u64_be(counter, block_++);
      std::copy(counter.begin(), counter.end(), nonce.begin());
      crypto_stream_chacha20(buffer_.data(), buffer_.size(), nonce.data(), key_.data());
      used_ = 0;
    }
    std::size_t n = std::min(out.size() - pos, buffer_.size() - used_);
    std::copy_n(buffer_.begin() + static_cast<std::ptrdiff_t>(used_), n,
                out.begin() + static_cast<std::ptrdiff_t>(pos));
    used_ += n;
    pos += n;
  }
}

}  // namespace pcp
