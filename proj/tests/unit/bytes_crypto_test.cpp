#include <gtest/gtest.h>

#include "pcp/bytes.hpp"
#include "pcp/crypto.hpp"
#include "pcp/error.hpp"
#include "pcp/random.hpp"

namespace pcp {
namespace {

Bytes bytes_of(std::string_view s) { return Bytes(s.begin(), s.end()); }

TEST(Bytes, HexRoundTrip) {
  Bytes b{0x00, 0x01, 0xab, 0xff};
  EXPECT_EQ(to_hex(b), "0001abff");
  EXPECT_EQ(from_hex("0001ABff"), b);
  EXPECT_TRUE(from_hex("").empty());
}

TEST(Bytes, HexRejectsMalformed) {
  EXPECT_THROW(from_hex("abc"), Error);
  EXPECT_THROW(from_hex("zz"), Error);
}

TEST(Bytes, BigEndianHelpers) {
  Bytes out;
  put_u32_be(out, 0x01020304);
  put_u64_be(out, 0x05060708090a0b0cULL);
  EXPECT_EQ(to_hex(out), "0102030405060708090a0b0c");
  EXPECT_EQ(get_u32_be(out), 0x01020304u);
  EXPECT_EQ(get_u64_be(ByteView(out).subspan(4)), 0x05060708090a0b0cULL);
}

TEST(Crypto, Sha256KnownAnswers) {
  EXPECT_EQ(to_hex(crypto::sha256({})), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  crypto::Sha256 h;
  h.update(as_bytes("/pcp/0"));
  h.update(as_bytes("/0"));
  EXPECT_EQ(to_hex(h.finish()), "4e8acdc02652f139b0c0b2b9156ca42be4f28b1a741fd4fd2e4639cc3bf23ea6");
}

TEST(Crypto, HmacKnownAnswer) {
  auto mac = crypto::hmac_sha256(as_bytes("key"), as_bytes("The quick brown fox jumps over the lazy dog"));
  EXPECT_EQ(to_hex(mac), "f7bc83f430538424b13298e6aa6fb143ef4d59a14946175997479dbc2d1a3cd8");
}

// RFC 5869 test case 1.
TEST(Crypto, HkdfRfc5869Case1) {
  Bytes ikm(22, 0x0b);
  auto salt = from_hex("000102030405060708090a0b0c");
  auto info = from_hex("f0f1f2f3f4f5f6f7f8f9");
  auto prk = crypto::hkdf_extract(salt, ikm);
  EXPECT_EQ(to_hex(prk), "077709362c2e32df0ddc3f0dc47bba6390b6c73bb50f9c3122ec844ad7c2b3e5");
  auto okm = crypto::hkdf_expand(prk, info, 42);
  EXPECT_EQ(to_hex(okm),
            "3cb25f25faacd57a90434f64d0362f2a2d2d0a90cf1a5a4c5db02d56ecc4c5bf34007208d5b887185865");
}

TEST(Crypto, HkdfExpandLimits) {
  crypto::Digest prk{};
  EXPECT_EQ(crypto::hkdf_expand(prk, {}, 255 * 32).size(), 255u * 32);
  EXPECT_THROW(crypto::hkdf_expand(prk, {}, 255 * 32 + 1), Error);
}

TEST(Crypto, AeadKnownAnswerAndTamper) {
  crypto::Key key{};
  for (std::size_t i = 0; i < key.size(); ++i) key[i] = static_cast<std::uint8_t>(i);
  FixedBytes<crypto::kAeadNonceSize> nonce{};
  nonce[11] = 7;
  auto ad = bytes_of("ad");
  auto ct = crypto::aead_seal(key, nonce, ad, as_bytes("hello"));
  EXPECT_EQ(to_hex(ct), "4023792f2115ede4b6e3e355f405e270fb1d2d4828");

  auto pt = crypto::aead_open(key, nonce, ad, ct);
  ASSERT_TRUE(pt);
  EXPECT_EQ(*pt, bytes_of("hello"));

  for (std::size_t i = 0; i < ct.size(); ++i) {
    auto bad = ct;
    bad[i] ^= 0x80;
    EXPECT_FALSE(crypto::aead_open(key, nonce, ad, bad)) << "byte " << i;
  }
  EXPECT_FALSE(crypto::aead_open(key, nonce, bytes_of("ae"), ct));
  EXPECT_FALSE(crypto::aead_open(key, nonce, ad, ByteView(ct).first(10)));
}

TEST(Crypto, ConstantTimeEqual) {
  EXPECT_TRUE(crypto::equal(bytes_of("abc"), bytes_of("abc")));
  EXPECT_FALSE(crypto::equal(bytes_of("abc"), bytes_of("abd")));
  EXPECT_FALSE(crypto::equal(bytes_of("abc"), bytes_of("ab")));
}

TEST(Random, SeededIsReproducible) {
  SeededRandom a(42), b(42), c(43);
  for (int i = 0; i < 100; ++i) {
    auto x = a.next_u64();
    EXPECT_EQ(x, b.next_u64());
    (void)c;
  }
  SeededRandom d(42);
  EXPECT_NE(d.next_u64(), c.next_u64());
}

TEST(Random, UniformStaysInRange) {
  SeededRandom rng(7);
  for (int i = 0; i < 10000; ++i) {
    EXPECT_LT(rng.uniform(3), 3u);
    auto v = rng.uniform_between(-2, 2);
    EXPECT_GE(v, -2);
    EXPECT_LE(v, 2);
  }
  EXPECT_EQ(rng.uniform_between(5, 5), 5);
  EXPECT_FALSE(rng.chance(0.0));
  EXPECT_TRUE(rng.chance(1.0));
}

}  // namespace
}  // namespace pcp
