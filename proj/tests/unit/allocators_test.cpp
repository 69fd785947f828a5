#include <gtest/gtest.h>

#include <atomic>
#include <thread>

#include "gpufirst/allocators.hpp"
#include "oracles.hpp"

using namespace gpufirst;

namespace {

allocator_config balanced(std::uint32_t n, std::uint32_t m, std::uint32_t ratio, std::uint64_t heap) {
  allocator_config c;
  c.kind = allocator_kind::balanced;
  c.n_thread_slots = n;
  c.m_team_slots = m;
  c.first_chunk_ratio = ratio;
  c.heap_base = {space_kind::device, 0};
  c.heap_size = heap;
  return c;
}

allocator_config generic(std::uint64_t heap) {
  allocator_config c;
  c.kind = allocator_kind::generic;
  c.heap_size = heap;
  return c;
}

struct fixture {
  memory_space space;
  std::unique_ptr<heap_allocator> heap;
  explicit fixture(const allocator_config& c) : space(space_kind::device, c.heap_size + 4096), heap(make_allocator(space, c)) {}
  balanced_allocator& bal() { return dynamic_cast<balanced_allocator&>(*heap); }
};

errc code_of(auto&& fn) {
  try {
    fn();
  } catch (const error& e) {
    return e.code();
  }
  return errc::internal_inconsistency;
}

}  // namespace

TEST(ChunkIndex, ModuloRule) {
  auto c = balanced(32, 16, 4, 1 << 20);
  EXPECT_EQ(chunk_index(37, 3, c), (chunk_coord{5, 3}));
  EXPECT_EQ(chunk_index(0, 0, c), (chunk_coord{0, 0}));
  EXPECT_EQ(chunk_index(32, 16, c), (chunk_coord{0, 0}));
}

TEST(ChunkIndex, FirstChunkIsLarger) {
  fixture f(balanced(32, 16, 4, 1 << 22));
  auto& b = f.bal();
  EXPECT_EQ(b.chunk_size({0, 7}), 4 * b.chunk_size({1, 7}));
  oracle::reference_geometry geo(b.config());
  for (std::uint32_t m = 0; m < 16; ++m)
    for (std::uint32_t n = 0; n < 32; ++n) {
      EXPECT_EQ(b.chunk_base({n, m}).offset, geo.base(b.config(), n, m));
      EXPECT_EQ(b.chunk_size({n, m}), geo.size(b.config(), n));
    }
}

TEST(ParseConfig, Grammar) {
  EXPECT_EQ(parse_allocator_config("generic").kind, allocator_kind::generic);
  auto c = parse_allocator_config("balanced:32,16");
  EXPECT_EQ(c.n_thread_slots, 32u);
  EXPECT_EQ(c.m_team_slots, 16u);
  EXPECT_EQ(c.first_chunk_ratio, 4u);
  EXPECT_EQ(parse_allocator_config("balanced:2,3,1").first_chunk_ratio, 1u);
  for (auto bad : {"balanced", "balanced:", "balanced:0,4", "balanced:1", "balanced:1,2,3,4", "malloc", "balanced:2,x"})
    EXPECT_EQ(code_of([&] { parse_allocator_config(bad); }), errc::config) << bad;
}

TEST(Balanced, BumpGivesAscendingDisjointBlocks) {
  fixture f(balanced(1, 1, 1, 4096));
  auto a = f.heap->allocate(0, 0, 32);
  auto b = f.heap->allocate(0, 0, 16);
  EXPECT_GE(b.offset, a.offset + 32);
  EXPECT_EQ(a.offset % 16, 0u);
  EXPECT_EQ(b.offset % 16, 0u);
  EXPECT_GE(f.bal().chunk_top({0, 0}), b.offset + 16);
}

TEST(Balanced, TooLargeIsOutOfMemory) {
  fixture f(balanced(1, 1, 1, 4096));
  EXPECT_EQ(code_of([&] { f.heap->allocate(0, 0, 4096); }), errc::out_of_memory);
}

TEST(Balanced, ChunkCanRunOutWhileOthersAreEmpty) {
  fixture f(balanced(2, 1, 1, 8192));
  EXPECT_EQ(code_of([&] {
              for (int i = 0; i < 1000; ++i) f.heap->allocate(1, 0, 256);
            }),
            errc::out_of_memory);
  EXPECT_NO_THROW(f.heap->allocate(0, 0, 256));
}

// The three watermark scenarios, with tops recomputed by the reference chunk.
class Watermark : public ::testing::Test {
 protected:
  fixture f{balanced(1, 1, 1, 4096)};
  oracle::reference_chunk ref{4096, 16};
  sim_address a, b, c;
  std::uint64_t ra = 0, rb = 0, rc = 0;

  void SetUp() override {
    a = f.heap->allocate(0, 0, 40);
    b = f.heap->allocate(0, 0, 24);
    c = f.heap->allocate(0, 0, 100);
    ra = *ref.allocate(40);
    rb = *ref.allocate(24);
    rc = *ref.allocate(100);
    ASSERT_EQ(a.offset, ra);
    ASSERT_EQ(b.offset, rb);
    ASSERT_EQ(c.offset, rc);
  }
  std::uint64_t top() { return f.bal().chunk_top({0, 0}); }
};

TEST_F(Watermark, FreeMiddleKeepsTop) {
  auto before = top();
  f.heap->deallocate(b);
  ref.deallocate(rb);
  EXPECT_EQ(top(), before);
  EXPECT_EQ(top(), ref.top());
}

TEST_F(Watermark, FreeTopReclaims) {
  f.heap->deallocate(c);
  ref.deallocate(rc);
  EXPECT_EQ(top(), ref.top());
  EXPECT_EQ(top(), b.offset + 32);
}

TEST_F(Watermark, CascadeOverTrailingDeadEntries) {
  f.heap->deallocate(b);
  ref.deallocate(rb);
  f.heap->deallocate(c);
  ref.deallocate(rc);
  EXPECT_EQ(top(), ref.top());
  EXPECT_EQ(top(), a.offset + 48);
  f.heap->deallocate(a);
  EXPECT_EQ(top(), 0u);
}

TEST(Balanced, DeadEntryIsReusedWhenChunkIsFull) {
  fixture f(balanced(1, 1, 1, 1024));
  std::vector<sim_address> blocks;
  try {
    for (;;) blocks.push_back(f.heap->allocate(0, 0, 48));
  } catch (const error& e) {
    ASSERT_EQ(e.code(), errc::out_of_memory);
  }
  ASSERT_GE(blocks.size(), 3u);
  auto victim = blocks[1];
  f.heap->deallocate(victim);
  auto d = f.heap->allocate(0, 0, 32);
  EXPECT_EQ(d, victim);
  EXPECT_EQ(f.heap->find_object(d)->size, 32u);
}

TEST(Balanced, HeaderChainCoversUsedRange) {
  fixture f(balanced(2, 2, 2, 1 << 16));
  std::mt19937_64 rng(5);
  std::vector<sim_address> live;
  for (int step = 0; step < 2000; ++step) {
    if (live.empty() || rng() % 3) {
      try {
        live.push_back(f.heap->allocate(rng() % 4, rng() % 4, 1 + rng() % 300));
      } catch (const error&) {
      }
    } else {
      auto i = rng() % live.size();
      f.heap->deallocate(live[i]);
      live.erase(live.begin() + long(i));
    }
    for (std::uint32_t m = 0; m < 2; ++m)
      for (std::uint32_t n = 0; n < 2; ++n) {
        auto chain = f.bal().chain({n, m});
        auto top = f.bal().chunk_top({n, m});
        ASSERT_LE(top, f.bal().chunk_size({n, m}));
        // Top-down: each entry ends where the one above begins (plus padding).
        std::uint64_t above = top;
        for (const auto& e : chain) {
          ASSERT_LE(e.user + e.capacity, above);
          ASSERT_LT(above - (e.user + e.capacity), 16u);
          above = e.header;
        }
        ASSERT_LT(above, 16u);
        if (!chain.empty()) {
          ASSERT_TRUE(chain.front().in_use);
        }
      }
  }
  for (auto a : live) f.heap->deallocate(a);
  for (std::uint32_t m = 0; m < 2; ++m)
    for (std::uint32_t n = 0; n < 2; ++n) EXPECT_EQ(f.bal().chunk_top({n, m}), 0u);
}

TEST(Allocators, InvalidFrees) {
  for (auto cfg : {generic(4096), balanced(1, 1, 1, 4096)}) {
    fixture f(cfg);
    auto a = f.heap->allocate(0, 0, 32);
    auto b = f.heap->allocate(0, 0, 32);
    EXPECT_EQ(code_of([&] { f.heap->deallocate(a + 4); }), errc::invalid_free);
    f.heap->deallocate(a);
    EXPECT_EQ(code_of([&] { f.heap->deallocate(a); }), errc::invalid_free);
    EXPECT_EQ(code_of([&] { f.heap->deallocate({space_kind::device, 1 << 20}); }), errc::invalid_free);
    f.heap->deallocate(b);
  }
}

TEST(Allocators, FindObject) {
  for (auto cfg : {generic(4096), balanced(2, 1, 1, 4096)}) {
    fixture f(cfg);
    auto b = f.heap->allocate(1, 0, 64);
    auto hit = f.heap->find_object(b + 12);
    ASSERT_TRUE(hit);
    EXPECT_EQ(*hit, (object_span{b, 64, 12}));
    EXPECT_FALSE(f.heap->find_object(b + 64));
    f.heap->deallocate(b);
    EXPECT_FALSE(f.heap->find_object(b + 12));
  }
}

TEST(Allocators, RegistryLookupOrder) {
  memory_space dev(space_kind::device, 1 << 16);
  auto g = dev.place_static(to_bytes("hello"), true);
  auto cfg = generic(4096);
  cfg.heap_base = dev.reserve_region(4096);
  auto heap = make_allocator(dev, cfg);
  object_registry reg(dev, heap.get());
  auto h = heap->allocate(0, 0, 10);
  auto st = dev.reserve_region(64);
  reg.register_stack(st, 64);
  EXPECT_EQ(reg.find_object(h + 3)->base, h);
  auto s = reg.find_object(g + 2);
  ASSERT_TRUE(s);
  EXPECT_TRUE(s->constant);
  EXPECT_EQ(reg.find_object(st + 63)->offset, 63u);
  EXPECT_FALSE(reg.find_object({space_kind::host, 8}));
  reg.unregister_stack(st);
  EXPECT_FALSE(reg.find_object(st + 1));
}

TEST(Generic, CoalescesOnFree) {
  fixture f(generic(1024));
  auto a = f.heap->allocate(0, 0, 300);
  auto b = f.heap->allocate(0, 0, 300);
  auto c = f.heap->allocate(0, 0, 300);
  EXPECT_EQ(code_of([&] { f.heap->allocate(0, 0, 600); }), errc::out_of_memory);
  f.heap->deallocate(a);
  f.heap->deallocate(b);
  EXPECT_EQ(f.heap->allocate(0, 0, 600), a);
  f.heap->deallocate(c);
}

class OracleEquivalence : public ::testing::TestWithParam<std::string> {};

TEST_P(OracleEquivalence, MatchesReference) {
  auto cfg = parse_allocator_config(GetParam());
  cfg.heap_size = 1 << 18;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    auto r = oracle::run_allocator_oracle(cfg, seed, 1000);
    EXPECT_TRUE(r.matched) << r.detail;
    EXPECT_FALSE(r.overlap);
  }
}

INSTANTIATE_TEST_SUITE_P(Configs, OracleEquivalence,
                         ::testing::Values("generic", "balanced:1,1,1", "balanced:1,1,4", "balanced:32,16,1",
                                           "balanced:32,16,4", "balanced:1,16,4", "balanced:32,1,1"));

TEST(Balanced, DistinctChunksDoNotInterfere) {
  fixture f(balanced(8, 1, 1, 1 << 20));
  std::atomic<bool> bad{false};
  std::vector<std::thread> ts;
  for (std::uint32_t t = 0; t < 8; ++t)
    ts.emplace_back([&, t] {
      auto base = f.bal().chunk_base({t, 0}).offset;
      auto size = f.bal().chunk_size({t, 0});
      std::vector<sim_address> mine;
      for (int i = 0; i < 2000; ++i) {
        if (mine.size() < 20) {
          auto a = f.heap->allocate(t, 0, 1 + (i * 37) % 200);
          if (a.offset < base || a.offset >= base + size) bad = true;
          f.space.fill(a, 1, std::byte(t));
          mine.push_back(a);
        } else {
          for (auto a : mine) {
            if (f.space.load<std::uint8_t>(a) != t) bad = true;
            f.heap->deallocate(a);
          }
          mine.clear();
        }
      }
    });
  for (auto& t : ts) t.join();
  EXPECT_FALSE(bad);
  EXPECT_FALSE(oracle::overlapping(oracle::live_of(*f.heap)));
}
