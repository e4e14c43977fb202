#pragma once

#include <cstdint>
#include <span>

#include "pcp/bytes.hpp"

namespace pcp {

/// Source of random bytes. Everything random in the protocol (passphrase
/// words, PAKE scalars, peer ids, simulated latencies) draws from one of
/// these so a simulated run can be replayed from its seed.
class RandomSource {
 public:
  virtual ~RandomSource() = default;
  virtual void fill(std::span<std::uint8_t> out) = 0;

  std::uint64_t next_u64();
  /// Uniform integer in [0, bound). bound must be > 0.
  std::uint64_t uniform(std::uint64_t bound);
  /// Uniform integer in [lo, hi] inclusive.
  std::int64_t uniform_between(std::int64_t lo, std::int64_t hi);
  /// Bernoulli trial with success probability p in [0, 1].
  bool chance(double p);
};

/// Operating-system CSPRNG (libsodium randombytes).
class SystemRandom final : public RandomSource {
 public:
  void fill(std::span<std::uint8_t> out) override;
};

/// Deterministic ChaCha20 keystream keyed by SHA-256 of the seed.
class SeededRandom final : public RandomSource {
 public:
  explicit SeededRandom(std::uint64_t seed);
  void fill(std::span<std::uint8_t> out) override;

 private:
  FixedBytes<32> key_{};
  std::uint64_t block_ = 0;
  FixedBytes<64> buffer_{};
  std::size_t used_ = 64;
};

}  // namespace pcp
