#include <gtest/gtest.h>

#include <random>

#include "gpufirst/sim_memory.hpp"

using namespace gpufirst;

namespace {

std::vector<std::byte> bytes_of(std::string_view s) { return to_bytes(s, false); }

}  // namespace

TEST(SimMemory, PlaceStaticRoundTrips) {
  memory_space dev(space_kind::device, 4096);
  auto b = dev.place_static(to_bytes("%f%d%d"), true);
  ASSERT_EQ(to_bytes("%f%d%d").size(), 7u);
  auto back = dev.read_bytes(b, 7);
  EXPECT_EQ(back, to_bytes("%f%d%d"));
}

TEST(SimMemory, ConsecutivePlacementsAreDisjoint) {
  memory_space dev(space_kind::device, 4096);
  auto a = dev.place_static(bytes_of("abcdefghij"), false);
  auto b = dev.place_static(bytes_of("xyz"), false);
  EXPECT_GE(b.offset, a.offset + 10);
  EXPECT_EQ(dev.static_objects().size(), 2u);
}

TEST(SimMemory, PlacementBeyondCapacityIsOutOfMemory) {
  memory_space dev(space_kind::device, 256);
  std::vector<std::byte> big(257);
  try {
    dev.place_static(big, false);
    FAIL() << "expected out_of_memory";
  } catch (const error& e) {
    EXPECT_EQ(e.code(), errc::out_of_memory);
  }
}

TEST(SimMemory, WriteThenReadIsIdentity) {
  memory_space host(space_kind::host, 1024);
  std::vector<std::byte> data(128);
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = std::byte(i * 7 + 3);
  sim_address at{space_kind::host, 300};
  host.write_bytes(at, data);
  EXPECT_EQ(host.read_bytes(at, 128), data);
}

TEST(SimMemory, ReadAtCapacityFaults) {
  memory_space host(space_kind::host, 1024);
  try {
    host.read_bytes({space_kind::host, 1024}, 1);
    FAIL();
  } catch (const error& e) {
    EXPECT_EQ(e.code(), errc::fault);
  }
  EXPECT_THROW(host.read_bytes({space_kind::host, 1000}, 25), error);
}

TEST(SimMemory, WrongSpaceFaults) {
  memory_space dev(space_kind::device, 1024);
  try {
    dev.load<std::uint32_t>({space_kind::host, 0});
    FAIL();
  } catch (const error& e) {
    EXPECT_EQ(e.code(), errc::fault);
  }
}

TEST(SimMemory, WriteIntoConstantObjectIsRejected) {
  memory_space dev(space_kind::device, 1024);
  auto c = dev.place_static(bytes_of("constant"), true);
  auto w = dev.place_static(bytes_of("mutable!"), false);
  try {
    dev.store<std::uint8_t>(c + 3, 1);
    FAIL();
  } catch (const error& e) {
    EXPECT_EQ(e.code(), errc::constness_violation);
  }
  EXPECT_NO_THROW(dev.store<std::uint8_t>(w + 3, 1));
}

TEST(SimMemory, WriteStraddlingIntoConstantObjectIsRejected) {
  memory_space dev(space_kind::device, 1024);
  auto w = dev.place_static(bytes_of("mutable!"), false);
  auto c = dev.place_static(bytes_of("constant"), true);
  ASSERT_GE(c.offset, 2u);
  sim_address before{space_kind::device, c.offset - 2};
  EXPECT_THROW(dev.write_bytes(before, std::vector<std::byte>(4)), error);
  EXPECT_NO_THROW(dev.write_bytes(w, std::vector<std::byte>(8)));
}

TEST(SimMemory, TranslatePreservesOffset) {
  translation t{{space_kind::device, 0x1000}, {space_kind::host, 0x80}, 16};
  EXPECT_EQ(translate({space_kind::device, 0x1004}, t), (sim_address{space_kind::host, 0x84}));
  EXPECT_EQ(translate(t.source_base, t), t.dest_base);
  try {
    translate({space_kind::device, 0x1010}, t);
    FAIL();
  } catch (const error& e) {
    EXPECT_EQ(e.code(), errc::translation_miss);
  }
  EXPECT_THROW(translate({space_kind::host, 0x1004}, t), error);
}

TEST(SimMemory, TranslateOffsetPreservationProperty) {
  std::mt19937_64 rng(11);
  for (int n = 0; n < 1000; ++n) {
    translation t{{space_kind::device, rng() % 100000}, {space_kind::shared, rng() % 100000}, 1 + rng() % 5000};
    auto d = rng() % t.length;
    auto r = translate(t.source_base + d, t);
    EXPECT_EQ(r.offset - t.dest_base.offset, d);
  }
}

TEST(SimMemory, LittleEndianEncoding) {
  std::byte raw[4];
  encode_le<std::uint32_t>(0x11223344u, raw);
  EXPECT_EQ(raw[0], std::byte{0x44});
  EXPECT_EQ(raw[3], std::byte{0x11});
  EXPECT_EQ(decode_le<std::uint32_t>(raw), 0x11223344u);
  std::byte f[4];
  encode_le(3.5f, f);
  EXPECT_EQ(decode_le<float>(f), 3.5f);
}

TEST(SimMemory, RecordLayoutOfFscanfStruct) {
  std::uint64_t fields[] = {4, 4, 4};
  auto l = layout_record(fields);
  EXPECT_EQ(l.offsets[2], 8u);
  EXPECT_EQ(l.size, 12u);
  std::uint64_t mixed[] = {1, 8, 4};
  auto m = layout_record(mixed);
  EXPECT_EQ(m.offsets, (std::vector<std::uint64_t>{0, 8, 16}));
  EXPECT_EQ(m.size, 24u);
}

TEST(SimMemory, AddressEncodingRoundTrips) {
  sim_address a{space_kind::host, 0x1234};
  EXPECT_EQ(sim_address::decode(a.encode()), a);
  EXPECT_FALSE(sim_address::decode(0).has_value());
  EXPECT_FALSE(sim_address::decode(42).has_value());
  EXPECT_NE((sim_address{space_kind::device, 8}).encode(), (sim_address{space_kind::host, 8}).encode());
}

TEST(SimMemory, FindStaticInteriorLookup) {
  memory_space dev(space_kind::device, 4096);
  dev.place_static(std::vector<std::byte>(20), false);
  auto b = dev.place_static(std::vector<std::byte>(64), true);
  auto hit = dev.find_static(b + 12);
  ASSERT_TRUE(hit);
  EXPECT_EQ(hit->base, b);
  EXPECT_EQ(hit->size, 64u);
  EXPECT_EQ(hit->offset, 12u);
  EXPECT_TRUE(hit->constant);
  EXPECT_FALSE(dev.find_static(b + 64));
}

TEST(SimMemory, ReservedRegionsGrowDownAndStayDisjoint) {
  memory_space dev(space_kind::device, 1 << 16);
  auto s = dev.place_static(std::vector<std::byte>(100), false);
  auto r1 = dev.reserve_region(1000, 64);
  auto r2 = dev.reserve_region(1000, 64);
  EXPECT_EQ(r1.offset % 64, 0u);
  EXPECT_GE(r1.offset, r2.offset + 1000);
  EXPECT_GE(r2.offset, s.offset + 100);
  EXPECT_THROW(dev.reserve_region(1 << 16), error);
}

TEST(SimMemory, AtomicCellsRequireAlignment) {
  memory_space shared(space_kind::shared, 256);
  auto c = shared.cell32({space_kind::shared, 8});
  c.store(5);
  EXPECT_EQ(shared.load<std::uint32_t>({space_kind::shared, 8}), 5u);
  EXPECT_THROW(shared.cell64({space_kind::shared, 4}), error);
}
