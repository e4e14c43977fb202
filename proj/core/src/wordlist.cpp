#include "pcp/wordlist.hpp"

#include <algorithm>
#include <array>
#include <string>

#include "pcp/error.hpp"

namespace pcp {

namespace detail {
extern const std::string_view kEmbeddedWordlist;
}

namespace {

struct Table {
  std::array<std::string_view, Wordlist::kSize> words{};

  Table() {
    std::string_view text = detail::kEmbeddedWordlist;
    std::size_t count = 0;
    while (!text.empty()) {
      auto nl = text.find('\n');
      auto line = text.substr(0, nl);
      if (!line.empty()) {
        if (count == Wordlist::kSize) fail(Errc::parse_error, "embedded wordlist has more than 2048 words");
        words[count++] = line;
      }
      if (nl == std::string_view::npos) break;
      text.remove_prefix(nl + 1);
    }
    if (count != Wordlist::kSize) {
      fail(Errc::parse_error, "embedded wordlist has " + std::to_string(count) + " words");
    }
    // BIP39 English is sorted, which index_of relies on.
    if (!std::is_sorted(words.begin(), words.end())) {
      fail(Errc::parse_error, "embedded wordlist is not sorted");
    }
  }
};

const Table& table() {
  static const Table t;
  return t;
}

}  // namespace

Wordlist::Wordlist() { (void)table(); }

const Wordlist& Wordlist::english() {
  static const Wordlist list;
  return list;
}

std::string_view Wordlist::word(std::size_t index) const {
  if (index >= kSize) fail(Errc::invalid_argument, "word index out of range");
  return table().words[index];
}

std::optional<std::size_t> Wordlist::index_of(std::string_view word) const {
  const auto& w = table().words;
  auto it = std::lower_bound(w.begin(), w.end(), word);
  if (it == w.end() || *it != word) return std::nullopt;
  return static_cast<std::size_t>(it - w.begin());
}

std::span<const std::string_view> Wordlist::words() const noexcept {
  return table().words;
}

std::string_view Wordlist::embedded_text() noexcept {
  return detail::kEmbeddedWordlist;
}

}  // namespace pcp
