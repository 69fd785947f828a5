#pragma once

// Deterministic region bodies for the kernel-split check. Each case writes
// an array in device memory either by plain per-iteration stores or by
// commutative atomic adds; the oracle computes the same array sequentially.

#include <cstdint>
#include <string>
#include <vector>

#include "gpufirst/multiteam.hpp"

namespace oracle {

struct split_case {
  std::uint32_t id;
  std::uint32_t teams;
  std::uint32_t threads;
  std::uint64_t trip;
  gpufirst::schedule sched;
  bool atomic_adds;  // histogram style: many iterations hit the same cell
};

inline std::vector<split_case> split_corpus() {
  using gpufirst::schedule;
  std::vector<split_case> out;
  const std::uint32_t geoms[][2] = {{1, 1}, {4, 4}, {2, 8}, {8, 2}, {3, 5}};
  std::uint32_t id = 1;
  for (std::uint32_t g = 0; g < 5; ++g)
    for (int variant = 0; variant < 4; ++variant) {
      auto sched = variant % 2 ? schedule::cyclic(1 + variant) : schedule::block();
      out.push_back({id, geoms[g][0], geoms[g][1], 97 + 131 * std::uint64_t(id), sched, variant >= 2});
      ++id;
    }
  return out;
}

inline std::uint32_t split_value(std::uint32_t id, std::uint64_t i) {
  std::uint64_t x = (i + 1) * 0x9e3779b97f4a7c15ull ^ id;
  return std::uint32_t(x >> 32) ^ std::uint32_t(x);
}

inline std::uint64_t split_cells(const split_case& c) { return c.atomic_adds ? 17 + c.id % 5 : c.trip; }

// Sequential reference: all iterations in order on the host.
inline std::vector<std::uint32_t> split_sequential(const split_case& c) {
  std::vector<std::uint32_t> cells(split_cells(c), 0);
  for (std::uint64_t i = 0; i < c.trip; ++i) {
    if (c.atomic_adds)
      cells[i % cells.size()] += split_value(c.id, i);
    else
      cells[i] = split_value(c.id, i);
  }
  return cells;
}

// The same work as a multi-team region; returns the device array.
inline std::vector<std::uint32_t> split_parallel(gpufirst::runtime& rt, const split_case& c) {
  using namespace gpufirst;
  auto& dev = rt.memory().device();
  auto n = split_cells(c);
  auto arr = rt.heap().allocate(0, 0, n * 4);
  dev.fill(arr, n * 4, std::byte{0});
  region_descriptor region;
  region.id = c.id;
  region.trip_count = c.trip;
  region.sched = c.sched;
  region.body = [&, arr, n](agent_context& ctx) {
    auto& d = ctx.rt.memory().device();
    ctx.for_each_iteration([&](std::uint64_t i) {
      if (c.atomic_adds)
        d.cell32(arr + 4 * (i % n)).fetch_add(split_value(c.id, i), std::memory_order_relaxed);
      else
        d.store<std::uint32_t>(arr + 4 * i, split_value(c.id, i));
    });
  };
  rt.run_main([&](runtime& self) {
    self.encounter_parallel(region, c.teams, c.threads, arr);
    return 0;
  });
  std::vector<std::uint32_t> out(n);
  for (std::uint64_t k = 0; k < n; ++k) out[k] = dev.load<std::uint32_t>(arr + 4 * k);
  rt.heap().deallocate(arr);
  return out;
}

}  // namespace oracle
