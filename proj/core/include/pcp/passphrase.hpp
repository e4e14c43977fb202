#pragma once

#include <compare>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "pcp/random.hpp"

namespace pcp {

/// Index of the passphrase's first word; selects the rendezvous channel.
class ChannelId {
 public:
  static constexpr std::uint32_t kMax = 2047;

  /// Throws Error(invalid_argument) outside [0, 2047].
  explicit ChannelId(std::int64_t value);

  std::uint32_t value() const noexcept { return value_; }
  auto operator<=>(const ChannelId&) const = default;

 private:
  std::uint32_t value_;
};

/// Ordered words from the BIP39 English list. The first word picks the
/// channel; all words together form the PAKE secret.
class Passphrase {
 public:
  static constexpr std::size_t kMinWords = 2;
  static constexpr std::size_t kDefaultWords = 4;
  static constexpr char kSeparator = '-';

  /// Validates every word and the minimum length; throws Error(parse_error).
  explicit Passphrase(std::vector<std::string> words);

  const std::vector<std::string>& words() const noexcept { return words_; }
  std::size_t size() const noexcept { return words_.size(); }

  /// Canonical "word1-word2-...-wordN" text.
  std::string render() const;

  bool operator==(const Passphrase&) const = default;

 private:
  std::vector<std::string> words_;
};

/// Draws word_count words uniformly and independently (repeats allowed).
/// Throws Error(invalid_argument) when word_count < 2.
Passphrase generate_passphrase(std::size_t word_count, RandomSource& rng);

/// Splits on '-' and checks each token against the wordlist.
/// Throws Error(parse_error) naming the offending token.
Passphrase parse_passphrase(std::string_view text);

ChannelId channel_id(const Passphrase& p);

}  // namespace pcp
