#include "pcp/passphrase.hpp"

#include "pcp/error.hpp"
#include "pcp/wordlist.hpp"

namespace pcp {

ChannelId::ChannelId(std::int64_t value) {
  if (value < 0 || value > static_cast<std::int64_t>(kMax)) {
    fail(Errc::invalid_argument, "channel id " + std::to_string(value) + " outside [0, 2047]");
  }
  value_ = static_cast<std::uint32_t>(value);
}

Passphrase::Passphrase(std::vector<std::string> words) : words_(std::move(words)) {
  if (words_.size() < kMinWords) {
    fail(Errc::parse_error, "passphrase needs at least " + std::to_string(kMinWords) + " words, got " +
                                std::to_string(words_.size()));
  }
  const auto& list = Wordlist::english();
  for (const auto& w : words_) {
    if (!list.index_of(w)) fail(Errc::parse_error, "unknown word \"" + w + "\"");
  }
}

std::string Passphrase::render() const {
  std::string out;
  for (std::size_t i = 0; i < words_.size(); ++i) {
    if (i != 0) out.push_back(kSeparator);
    out += words_[i];
  }
  return out;
}

Passphrase generate_passphrase(std::size_t word_count, RandomSource& rng) {
  if (word_count < Passphrase::kMinWords) {
    fail(Errc::invalid_argument, "word_count must be at least 2");
  }
  const auto& list = Wordlist::english();
  std::vector<std::string> words;
  words.reserve(word_count);
  for (std::size_t i = 0; i < word_count; ++i) {
    words.emplace_back(list.word(rng.uniform(Wordlist::kSize)));
  }
  return Passphrase(std::move(words));
}

Passphrase parse_passphrase(std::string_view text) {
  std::vector<std::string> tokens;
  std::size_t start = 0;
  for (;;) {
    auto pos = text.find(Passphrase::kSeparator, start);
    tokens.emplace_back(text.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  if (tokens.size() < Passphrase::kMinWords) {
    fail(Errc::parse_error, "passphrase \"" + std::string(text) + "\" has fewer than 2 words");
  }
  return Passphrase(std::move(tokens));
}

ChannelId channel_id(const Passphrase& p) {
  auto index = Wordlist::english().index_of(p.words().front());
  return ChannelId(static_cast<std::int64_t>(*index));
}

}  // namespace pcp
