#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <exception>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <thread>
#include <vector>

#include "gpufirst/allocators.hpp"
#include "gpufirst/backoff.hpp"
#include "gpufirst/error.hpp"
#include "gpufirst/rpc.hpp"
#include "gpufirst/sim_memory.hpp"

namespace gpufirst {

// Teams are bulked into one large team: ids run 0..T*K-1 without restarting
// per team.
constexpr std::uint64_t global_thread_id(std::uint64_t team, std::uint64_t local, std::uint64_t team_size) {
  return team * team_size + local;
}

enum class schedule_kind { static_block, static_cyclic };

struct schedule {
  schedule_kind kind = schedule_kind::static_block;
  std::uint64_t chunk = 1;

  static schedule block() { return {schedule_kind::static_block, 1}; }
  static schedule cyclic(std::uint64_t chunk) { return {schedule_kind::static_cyclic, chunk}; }
};

struct iter_range {
  std::uint64_t begin = 0;
  std::uint64_t end = 0;
  friend bool operator==(const iter_range&, const iter_range&) = default;
};

// Iterations of a work-shared loop owned by one agent out of `total`.
inline std::vector<iter_range> worksharing_bounds(std::uint64_t global_id, std::uint64_t total,
                                                  std::uint64_t trip_count, schedule sched) {
  std::vector<iter_range> out;
  if (total == 0 || global_id >= total || trip_count == 0) return out;
  if (sched.kind == schedule_kind::static_block) {
    auto block = (trip_count + total - 1) / total;
    auto begin = global_id * block;
    if (begin < trip_count) out.push_back({begin, std::min(begin + block, trip_count)});
    return out;
  }
  auto c = std::max<std::uint64_t>(sched.chunk, 1);
  for (auto j = global_id; j * c < trip_count; j += total) out.push_back({j * c, std::min((j + 1) * c, trip_count)});
  return out;
}

// Sense-reversing barrier over two cells of device memory: an arrival
// counter and the shared sense flag.
class global_barrier {
 public:
  global_barrier(memory_space& space, sim_address cells, std::uint64_t expected, std::chrono::milliseconds limit,
                 const std::atomic<bool>* abort = nullptr)
      : space_(space), cells_(cells), expected_(expected), limit_(limit), abort_(abort) {}

  static constexpr std::uint64_t cell_bytes = 16;

  void reset() {
    space_.cell64(cells_).store(0, std::memory_order_relaxed);
    space_.cell32(cells_ + 8).store(0, std::memory_order_release);
  }

  void wait(bool& local_sense) {
    local_sense = !local_sense;
    const std::uint32_t want = local_sense ? 1 : 0;
    auto counter = space_.cell64(cells_);
    auto sense = space_.cell32(cells_ + 8);
    if (counter.fetch_add(1, std::memory_order_acq_rel) + 1 == expected_) {
      counter.store(0, std::memory_order_relaxed);
      sense.store(want, std::memory_order_release);
      return;
    }
    backoff b;
    watchdog dog(limit_);
    while (sense.load(std::memory_order_acquire) != want) {
      if (abort_ && abort_->load(std::memory_order_relaxed))
        throw error(errc::fault, "barrier abandoned after a fault in another agent");
      if (dog.expired())
        throw error(errc::timeout, "deadlock: barrier waited " + std::to_string(limit_.count()) + " ms");
      b.pause();
    }
  }

 private:
  memory_space& space_;
  sim_address cells_;
  std::uint64_t expected_;
  std::chrono::milliseconds limit_;
  const std::atomic<bool>* abort_;
};

// Persistent worker threads reused across kernel launches.
class agent_pool {
 public:
  agent_pool() = default;
  agent_pool(const agent_pool&) = delete;
  agent_pool& operator=(const agent_pool&) = delete;

  ~agent_pool() {
    {
      std::lock_guard lock(mutex_);
      shutdown_ = true;
    }
    wake_.notify_all();
    for (auto& t : workers_) t.join();
  }

  std::size_t size() const {
    std::lock_guard lock(mutex_);
    return workers_.size();
  }

  // Runs fn(i) for every i in [0, count) on exactly `width` concurrent
  // workers, each taking a contiguous block of indices. fn must not throw.
  void run(std::size_t count, std::size_t width, const std::function<void(std::size_t)>& fn) {
    if (count == 0) return;
    width = std::clamp<std::size_t>(width, 1, count);
    std::lock_guard serial(run_mutex_);
    std::unique_lock lock(mutex_);
    while (workers_.size() < width) {
      auto id = workers_.size();
      workers_.emplace_back([this, id, gen = generation_] { worker(id, gen); });
    }
    fn_ = &fn;
    count_ = count;
    width_ = width;
    remaining_ = width;
    ++generation_;
    wake_.notify_all();
    done_.wait(lock, [&] { return remaining_ == 0; });
    fn_ = nullptr;
  }

 private:
  void worker(std::size_t id, std::uint64_t seen) {
    std::unique_lock lock(mutex_);
    while (true) {
      wake_.wait(lock, [&] { return shutdown_ || generation_ != seen; });
      if (shutdown_) return;
      seen = generation_;
      if (id >= width_) continue;
      auto begin = id * count_ / width_, end = (id + 1) * count_ / width_;
      const auto* fn = fn_;
      lock.unlock();
      for (auto i = begin; i < end; ++i) (*fn)(i);
      lock.lock();
      if (--remaining_ == 0) done_.notify_all();
    }
  }

  std::mutex run_mutex_;
  mutable std::mutex mutex_;
  std::condition_variable wake_;
  std::condition_variable done_;
  std::vector<std::thread> workers_;
  const std::function<void(std::size_t)>* fn_ = nullptr;
  std::size_t count_ = 0;
  std::size_t width_ = 0;
  std::size_t remaining_ = 0;
  std::uint64_t generation_ = 0;
  bool shutdown_ = false;
};

class runtime;

struct agent_context {
  runtime& rt;
  std::uint32_t region_id;
  std::uint64_t team;
  std::uint64_t local;
  std::uint64_t num_teams;
  std::uint64_t team_size;
  std::uint64_t global_id;
  std::uint64_t total;
  sim_address args;
  std::uint64_t trip_count;
  schedule sched;
  global_barrier* barrier_ = nullptr;
  bool local_sense = false;

  std::vector<iter_range> iterations() const { return worksharing_bounds(global_id, total, trip_count, sched); }

  template <typename Fn>
  void for_each_iteration(Fn&& fn) const {
    for (const auto& r : iterations())
      for (auto i = r.begin; i < r.end; ++i) fn(i);
  }

  void barrier() {
    if (!barrier_) throw error(errc::launch_rejected, "barrier used in a region not launched as cooperative");
    barrier_->wait(local_sense);
  }
};

struct region_descriptor {
  std::uint32_t id = 0;
  std::function<void(agent_context&)> body;
  std::uint64_t trip_count = 0;
  schedule sched = schedule::block();
  // Cooperative regions synchronize through the cross-team barrier and get
  // one worker per agent; the others are multiplexed onto the pool.
  bool cooperative = false;
};

struct kernel_launch {
  std::uint32_t region_id = 0;
  std::uint32_t num_teams = 1;
  std::uint32_t threads_per_team = 1;
  sim_address args;

  static constexpr std::uint64_t encoded_size = 24;

  std::array<std::byte, encoded_size> encode() const {
    std::array<std::byte, encoded_size> out{};
    encode_le(region_id, out.data());
    encode_le(num_teams, out.data() + 4);
    encode_le(threads_per_team, out.data() + 8);
    encode_le(args.encode(), out.data() + 16);
    return out;
  }

  static kernel_launch decode(std::span<const std::byte> raw) {
    kernel_launch k;
    k.region_id = decode_le<std::uint32_t>(raw.data());
    k.num_teams = decode_le<std::uint32_t>(raw.data() + 4);
    k.threads_per_team = decode_le<std::uint32_t>(raw.data() + 8);
    k.args = sim_address::decode(decode_le<std::uint64_t>(raw.data() + 16)).value_or(sim_address{});
    return k;
  }
};

enum class agent_role { none, initial, parallel };

inline agent_role& current_agent_role() {
  thread_local agent_role role = agent_role::none;
  return role;
}

struct runtime_config {
  memory_config memory;
  allocator_config allocator;  // heap placement is filled in by the runtime
  std::uint64_t heap_size = 32ull << 20;
  std::uint64_t stack_size = 1ull << 20;
  rpc_config rpc;
  std::size_t agent_limit = 65536;
  std::size_t worker_threads = 0;  // 0: max(4, hardware concurrency)
  std::chrono::milliseconds watchdog{30000};
};

// The simulated device/host pair: memory, device heap, object registry, RPC
// mailbox with its host server agent, and the multi-team kernel launcher.
class runtime {
 public:
  static constexpr std::uint32_t kernel_launch_callee = 0;

  explicit runtime(runtime_config cfg = {})
      : cfg_(std::move(cfg)), mem_(cfg_.memory), registry_(mem_.device()), rpc_(mem_, rpc_with_watchdog(cfg_)) {
    auto& dev = mem_.device();
    cfg_.allocator.heap_size = cfg_.heap_size;
    cfg_.allocator.heap_base = dev.reserve_region(cfg_.heap_size, std::max<std::uint64_t>(cfg_.allocator.alignment, 64));
    heap_ = make_allocator(dev, cfg_.allocator);
    registry_.set_heap(heap_.get());
    stack_ = dev.reserve_region(cfg_.stack_size, 64);
    barrier_cells_ = dev.reserve_region(global_barrier::cell_bytes, 64);
    launch_block_ = dev.reserve_region(kernel_launch::encoded_size, 64);
    if (cfg_.worker_threads == 0)
      cfg_.worker_threads = std::max<std::size_t>(4, std::thread::hardware_concurrency());

    rpc_.register_pad({"__omp_launch_kernel", kernel_launch_callee,
                       [this](landing_context& ctx) { return launch_pad(ctx); },
                       {access_mode::read}});
    server_ = std::make_unique<rpc_server_agent>(rpc_);
  }

  runtime(const runtime&) = delete;
  runtime& operator=(const runtime&) = delete;

  ~runtime() { server_->stop(); }

  const runtime_config& config() const { return cfg_; }
  sim_memory& memory() { return mem_; }
  heap_allocator& heap() { return *heap_; }
  object_registry& registry() { return registry_; }
  rpc_channel& rpc() { return rpc_; }
  sim_address stack_region() const { return stack_; }
  std::uint64_t launch_count() const { return launches_.load(); }

  // Executes the sequential program on the calling thread acting as the
  // main kernel's single initial agent.
  int run_main(const std::function<int(runtime&)>& program) {
    auto& role = current_agent_role();
    auto saved = role;
    role = agent_role::initial;
    struct restore {
      agent_role& r;
      agent_role v;
      ~restore() { r = v; }
    } guard{role, saved};
    return program(*this);
  }

  void encounter_parallel(const region_descriptor& region, std::uint32_t num_teams, std::uint32_t team_size,
                          sim_address args = {}) {
    auto role = current_agent_role();
    if (role == agent_role::parallel)
      throw error(errc::launch_rejected, "nested parallel region " + std::to_string(region.id));
    if (role != agent_role::initial)
      throw error(errc::launch_rejected, "parallel region " + std::to_string(region.id) +
                                             " encountered outside the initial agent");
    if (num_teams < 1 || team_size < 1) throw error(errc::launch_rejected, "empty launch geometry");
    auto total = std::uint64_t(num_teams) * team_size;
    if (total > cfg_.agent_limit)
      throw error(errc::launch_rejected, std::to_string(total) + " agents exceed the limit of " +
                                             std::to_string(cfg_.agent_limit));
    if (!region.body) throw error(errc::launch_rejected, "region without body");
    {
      std::lock_guard lock(regions_mutex_);
      regions_[region.id] = &region;
    }
    kernel_launch launch{region.id, num_teams, team_size, args};
    auto raw = launch.encode();
    mem_.device().write_bytes(launch_block_, raw);
    call_request req{kernel_launch_callee,
                     {arg_descriptor::ref(launch_block_, access_mode::read, kernel_launch::encoded_size, 0)}};
    try {
      rpc_.issue_call(req);
    } catch (const error& e) {
      forget(region.id);
      throw error(e.code(), "region " + std::to_string(region.id) + ": " + e.detail());
    } catch (const std::exception& e) {
      forget(region.id);
      throw error(errc::fault, "region " + std::to_string(region.id) + ": " + e.what());
    }
    forget(region.id);
  }

 private:
  static rpc_config rpc_with_watchdog(const runtime_config& cfg) {
    auto r = cfg.rpc;
    r.watchdog = cfg.watchdog;
    return r;
  }

  void forget(std::uint32_t id) {
    std::lock_guard lock(regions_mutex_);
    regions_.erase(id);
  }

  std::uint64_t launch_pad(landing_context& ctx) {
    auto raw = mem_.read_bytes(ctx.pointer(0), kernel_launch::encoded_size);
    auto launch = kernel_launch::decode(raw);
    const region_descriptor* region = nullptr;
    {
      std::lock_guard lock(regions_mutex_);
      auto it = regions_.find(launch.region_id);
      if (it != regions_.end()) region = it->second;
    }
    if (!region) throw error(errc::dispatch, "unknown region " + std::to_string(launch.region_id));
    launches_.fetch_add(1);

    auto total = std::uint64_t(launch.num_teams) * launch.threads_per_team;
    std::atomic<bool> abort{false};
    std::mutex failure_mutex;
    std::exception_ptr failure;
    global_barrier barrier(mem_.device(), barrier_cells_, total, cfg_.watchdog, &abort);
    barrier.reset();

    auto width = region->cooperative ? total : std::min<std::uint64_t>(total, cfg_.worker_threads);
    std::function<void(std::size_t)> agent = [&](std::size_t idx) {
      current_agent_role() = agent_role::parallel;
      if (abort.load(std::memory_order_relaxed)) return;
      agent_context ctx{*this,
                        launch.region_id,
                        idx / launch.threads_per_team,
                        idx % launch.threads_per_team,
                        launch.num_teams,
                        launch.threads_per_team,
                        global_thread_id(idx / launch.threads_per_team, idx % launch.threads_per_team,
                                         launch.threads_per_team),
                        total,
                        launch.args,
                        region->trip_count,
                        region->sched,
                        region->cooperative ? &barrier : nullptr};
      try {
        region->body(ctx);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        abort.store(true);
      }
    };
    pool_.run(total, width, agent);
    if (failure) std::rethrow_exception(failure);
    return 0;
  }

  runtime_config cfg_;
  sim_memory mem_;
  std::unique_ptr<heap_allocator> heap_;
  object_registry registry_;
  rpc_channel rpc_;
  sim_address stack_;
  sim_address barrier_cells_;
  sim_address launch_block_;
  agent_pool pool_;
  std::mutex regions_mutex_;
  std::map<std::uint32_t, const region_descriptor*> regions_;
  std::atomic<std::uint64_t> launches_{0};
  std::unique_ptr<rpc_server_agent> server_;
};

}  // namespace gpufirst
