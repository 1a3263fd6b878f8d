#include <gtest/gtest.h>

#include <random>

#include "dili/message.hpp"

namespace dili {
namespace {

ClientOp client_op(Key k) {
  ClientOp op;
  op.key = k;
  return op;
}

TEST(Message, FindFrameIsTwentyOneBytes) {
  Message m{Tag::find, 0x0102030405060708ull, client_op(7)};
  const auto bytes = encode(m);
  ASSERT_EQ(bytes.size(), 21u);
  // Little-endian length of everything after the prefix.
  EXPECT_EQ(bytes[0], 17);
  EXPECT_EQ(bytes[1], 0);
  EXPECT_EQ(bytes[4], static_cast<std::uint8_t>(Tag::find));
  EXPECT_EQ(bytes[5], 0x08);
  EXPECT_EQ(bytes[13], 7);
  EXPECT_EQ(encode(m), bytes);
}

NodeRef rand_ref(std::mt19937_64& rng) {
  return NodeRef::pack(static_cast<ServerId>(rng() % 8), rng() % 100'000, rng() % 2);
}
ItemId rand_id(std::mt19937_64& rng) {
  return {static_cast<ServerId>(rng() % 8), rng()};
}
Status rand_status(std::mt19937_64& rng) { return static_cast<Status>(rng() % 7); }

// A canonical body for the tag: client forms without delegation carry no
// ref and no hops, and DELETE_AT is always delegated.
Message random_message(std::mt19937_64& rng) {
  const auto tag = static_cast<Tag>(1 + rng() % 17);
  Message m;
  m.tag = tag;
  m.request_id = rng();
  const Key key = static_cast<Key>(rng());
  switch (tag) {
    case Tag::find:
    case Tag::insert:
    case Tag::remove:
    case Tag::delete_at: {
      ClientOp op = client_op(key);
      if (tag == Tag::delete_at || rng() % 2) {
        op.delegated = true;
        op.ref = rand_ref(rng);
        op.hops = static_cast<std::uint8_t>(1 + rng() % 3);
      }
      m.body = op;
      break;
    }
    case Tag::move_sh:
      m.body = MoveShMsg{rand_id(rng), key, key + 5, static_cast<std::int64_t>(rng() % 1000)};
      break;
    case Tag::move_item:
      m.body = MoveItemMsg{rand_ref(rng), rand_id(rng), key, rand_id(rng), rng() % 2 == 1,
                           rand_ref(rng)};
      break;
    case Tag::rep_insert:
      m.body = RepInsertMsg{rand_ref(rng), rand_id(rng), key, rand_id(rng), rand_ref(rng)};
      break;
    case Tag::rep_delete:
      m.body = RepDeleteMsg{rand_ref(rng), rand_id(rng), rand_ref(rng)};
      break;
    case Tag::replay_resp_insert:
      m.body = ReplayInsertResp{rand_status(rng), rand_ref(rng), rand_ref(rng)};
      break;
    case Tag::replay_resp_delete:
      m.body = ReplayDeleteResp{rand_status(rng), rand_ref(rng)};
      break;
    case Tag::register_sublist:
    case Tag::switch_st:
    case Tag::switch_server:
      m.body = KeyRefMsg{key, rand_ref(rng)};
      break;
    case Tag::register_merged:
      m.body = KeyMsg{key};
      break;
    case Tag::ack:
      m.body = AckMsg{rand_status(rng), static_cast<std::int64_t>(rng())};
      break;
    case Tag::bool_resp:
      m.body = BoolResp{rand_status(rng), rng() % 2 == 1, static_cast<std::uint8_t>(rng() % 4)};
      break;
    case Tag::ref_resp:
      m.body = RefResp{rand_status(rng), rand_ref(rng)};
      break;
  }
  return m;
}

TEST(Message, RoundTripFuzz) {
  std::mt19937_64 rng(99);
  for (int i = 0; i < 20'000; ++i) {
    const Message m = random_message(rng);
    ASSERT_TRUE(well_formed(m)) << tag_name(m.tag);
    const auto bytes = encode(m);
    ASSERT_EQ(frame_size(bytes), bytes.size());
    const auto back = decode(bytes);
    ASSERT_TRUE(back.has_value()) << tag_name(m.tag);
    ASSERT_EQ(*back, m) << tag_name(m.tag);
  }
}

TEST(Message, TruncatedAndCorruptFramesAreRejected) {
  const auto bytes = encode({Tag::insert, 1, client_op(42)});
  for (std::size_t n = 0; n < bytes.size(); ++n)
    EXPECT_FALSE(decode(std::span(bytes.data(), n)).has_value()) << n;

  auto bad_tag = bytes;
  bad_tag[4] = 0;
  EXPECT_FALSE(decode(bad_tag).has_value());
  bad_tag[4] = 200;
  EXPECT_FALSE(decode(bad_tag).has_value());

  // Wrong payload length for the tag.
  auto longer = bytes;
  longer.push_back(0);
  longer[0] += 1;
  EXPECT_FALSE(decode(longer).has_value());
}

TEST(Message, FrameSizeNeedsPrefix) {
  const auto bytes = encode({Tag::find, 1, client_op(1)});
  EXPECT_EQ(frame_size(std::span(bytes.data(), 2)), std::optional<std::size_t>(0));
  EXPECT_EQ(frame_size(bytes), std::optional<std::size_t>(21));
  std::vector<std::uint8_t> huge = {0xff, 0xff, 0xff, 0x7f};
  EXPECT_FALSE(frame_size(huge).has_value());
}

TEST(Message, WellFormedChecksPayloadAlternative) {
  EXPECT_TRUE(well_formed({Tag::find, 1, client_op(1)}));
  EXPECT_FALSE(well_formed({Tag::find, 1, AckMsg{}}));
}

}  // namespace
}  // namespace dili
