#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>

namespace pcp {

/// The BIP39 English wordlist, compiled into the library.
class Wordlist {
 public:
  static constexpr std::size_t kSize = 2048;

  static const Wordlist& english();

  std::size_t size() const noexcept { return kSize; }
  std::string_view word(std::size_t index) const;
  std::optional<std::size_t> index_of(std::string_view word) const;
  std::span<const std::string_view> words() const noexcept;

  /// Newline-separated text exactly as embedded; its SHA-256 is pinned in tests.
  static std::string_view embedded_text() noexcept;

 private:
  Wordlist();
};

}  // namespace pcp
