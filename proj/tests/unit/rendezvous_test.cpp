#include <gtest/gtest.h>

#include "pcp/error.hpp"
#include "pcp/rendezvous.hpp"

namespace pcp {
namespace {

TEST(TimeSlot, Truncation) {
  EXPECT_EQ(truncate_to_slot(1617283473).start(), 1617283200);
  EXPECT_EQ(truncate_to_slot(1617283200).start(), 1617283200);
  EXPECT_EQ(truncate_to_slot(1617283499).start(), 1617283200);
  EXPECT_EQ(truncate_to_slot(1617283500).start(), 1617283500);
  EXPECT_EQ(truncate_to_slot(0).start(), 0);
  EXPECT_EQ(truncate_to_slot(299).start(), 0);
  EXPECT_EQ(truncate_to_slot(1617283473).end(), 1617283500);
  EXPECT_EQ(truncate_to_slot(125, 60).start(), 120);
}

TEST(TimeSlot, Validation) {
  EXPECT_THROW(TimeSlot(301), Error);
  EXPECT_THROW(TimeSlot(0, 0), Error);
  EXPECT_THROW(truncate_to_slot(-1), Error);
  EXPECT_THROW(previous_slot(TimeSlot(0)), Error);
  EXPECT_EQ(previous_slot(TimeSlot(1617283200)).start(), 1617282900);
}

TEST(DiscoveryKey, KnownDigests) {
  auto k0 = discovery_key(ChannelId(0), TimeSlot(0));
  EXPECT_EQ(k0.id_string, "/pcp/0/0");
  EXPECT_EQ(to_hex(k0.content_key), "4e8acdc02652f139b0c0b2b9156ca42be4f28b1a741fd4fd2e4639cc3bf23ea6");

  auto k1 = discovery_key(ChannelId(42), truncate_to_slot(1617283473));
  EXPECT_EQ(k1.id_string, "/pcp/1617283200/42");
  EXPECT_EQ(to_hex(k1.content_key), "87b3de3e41dfaa5b441e94360afd12f7af3155719e4e22d01191eea222f32ef4");

  auto k2 = discovery_key(ChannelId(2047), previous_slot(TimeSlot(1617283200)));
  EXPECT_EQ(k2.id_string, "/pcp/1617282900/2047");
  EXPECT_EQ(to_hex(k2.content_key), "f510d6e56eb9a60fd85641883b6b1f2a6a36492b84636337a82eac281f7974fa");
}

TEST(DiscoveryKey, DistinctAcrossChannelsAndSlots) {
  TimeSlot s(1617283200);
  EXPECT_NE(discovery_key(ChannelId(1), s), discovery_key(ChannelId(2), s));
  EXPECT_NE(discovery_key(ChannelId(1), s).content_key,
            discovery_key(ChannelId(1), previous_slot(s)).content_key);
  EXPECT_EQ(discovery_key(ChannelId(1), s), discovery_key(ChannelId(1), s));
}

}  // namespace
}  // namespace pcp
