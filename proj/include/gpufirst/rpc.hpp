#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <exception>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "gpufirst/allocators.hpp"
#include "gpufirst/backoff.hpp"
#include "gpufirst/error.hpp"
#include "gpufirst/plan.hpp"
#include "gpufirst/sim_memory.hpp"

namespace gpufirst {

enum class arg_kind : std::uint32_t { value = 0, ref = 1 };

struct arg_descriptor {
  arg_kind kind = arg_kind::value;
  std::uint64_t raw = 0;  // value payload
  sim_address addr;       // ref: the pointer as passed, possibly interior
  access_mode mode = access_mode::read_write;
  std::uint64_t obj_size = 0;
  std::uint64_t obj_offset = 0;

  static arg_descriptor value(std::uint64_t raw) { return {arg_kind::value, raw, {}, access_mode::read, 0, 0}; }
  static arg_descriptor value(sim_address a) { return value(a.encode()); }
  static arg_descriptor ref(sim_address addr, access_mode mode, std::uint64_t size, std::uint64_t offset) {
    if (offset >= size) throw error(errc::internal_inconsistency, "reference offset outside its object");
    return {arg_kind::ref, 0, addr, mode, size, offset};
  }

  sim_address object_base() const { return {addr.space, addr.offset - obj_offset}; }

  friend bool operator==(const arg_descriptor&, const arg_descriptor&) = default;
};

struct call_request {
  std::uint32_t callee = 0;
  std::vector<arg_descriptor> args;
  std::uint64_t identify_ns = 0;  // time spent resolving underlying objects, if any
};

// What a landing pad sees: value words verbatim, references translated to
// the host-visible copy of their object (same offset into the copy).
struct landing_context {
  sim_memory& memory;
  std::uint32_t callee;
  std::span<const std::uint64_t> args;
  std::span<const arg_kind> kinds;

  std::size_t size() const { return args.size(); }
  std::uint64_t word(std::size_t i) const { return args[i]; }
  bool is_ref(std::size_t i) const { return kinds[i] == arg_kind::ref; }
  sim_address pointer(std::size_t i) const {
    auto a = sim_address::decode(args[i]);
    if (!a) throw error(errc::fault, "argument " + std::to_string(i) + " is not a pointer");
    return *a;
  }
};

using landing_handler = std::function<std::uint64_t(landing_context&)>;

struct landing_pad {
  std::string name;
  std::uint32_t callee_id = 0;
  landing_handler handler;
  std::vector<std::optional<access_mode>> param_effects;  // nullopt: opaque
};

struct stage_times {
  struct device_side {
    std::uint64_t init_ns = 0, identify_ns = 0, wait_ns = 0, copyback_ns = 0;
    std::uint64_t total() const { return init_ns + identify_ns + wait_ns + copyback_ns; }
  } device;
  struct host_side {
    std::uint64_t copyin_ns = 0, invoke_ns = 0, copyout_notify_ns = 0, gap_ns = 0;
    std::uint64_t total() const { return copyin_ns + invoke_ns + copyout_notify_ns + gap_ns; }
  } host;
};

struct call_timing {
  std::uint64_t seq = 0;
  std::uint32_t callee = 0;
  stage_times stages;
};

inline nlohmann::json to_json(const call_timing& t) {
  const auto& d = t.stages.device;
  const auto& h = t.stages.host;
  return {{"callee", t.callee},
          {"seq", t.seq},
          {"device", {{"init_ns", d.init_ns}, {"identify_ns", d.identify_ns}, {"wait_ns", d.wait_ns},
                      {"copyback_ns", d.copyback_ns}}},
          {"host", {{"copyin_ns", h.copyin_ns}, {"invoke_ns", h.invoke_ns},
                    {"copyout_notify_ns", h.copyout_notify_ns}, {"gap_ns", h.gap_ns}}}};
}

inline call_timing call_timing_from_json(const nlohmann::json& j) {
  call_timing t;
  t.callee = j.at("callee").get<std::uint32_t>();
  t.seq = j.at("seq").get<std::uint64_t>();
  const auto& d = j.at("device");
  t.stages.device = {d.at("init_ns"), d.at("identify_ns"), d.at("wait_ns"), d.at("copyback_ns")};
  const auto& h = j.at("host");
  t.stages.host = {h.at("copyin_ns"), h.at("invoke_ns"), h.at("copyout_notify_ns"), h.at("gap_ns")};
  return t;
}

struct rpc_config {
  std::uint64_t payload_capacity = 16 * 1024;
  std::chrono::milliseconds watchdog{30000};
};

// Single-slot mailbox in the shared space. State machine:
//   Empty -(client)-> Requested -(server)-> Done -(client)-> Empty
// The state cell is the only synchronization point: payload writes happen
// before Requested, the return value and copy-out happen before Done.
class rpc_channel {
 public:
  enum state : std::uint32_t { empty = 0, requested = 1, done = 2 };
  enum error_flag : std::uint32_t { ok = 0, unknown_callee = 1, handler_failed = 2 };

  static constexpr std::uint64_t dispatch_error_ret = ~std::uint64_t{0};
  static constexpr std::uint32_t max_args = 16;
  static constexpr std::uint64_t payload_alignment = 16;

  // Mailbox layout, offsets from the mailbox base.
  static constexpr std::uint64_t off_state = 0, off_error = 4, off_callee = 8, off_nargs = 12, off_ret = 16,
                                 off_seq = 24, off_done_ns = 32, off_host_copyin = 40, off_host_invoke = 48,
                                 off_host_copyout = 56, off_descriptors = 64, descriptor_size = 48;
  static constexpr std::uint64_t off_payload = off_descriptors + max_args * descriptor_size;

  rpc_channel(sim_memory& mem, const rpc_config& cfg = {})
      : mem_(mem), cfg_(cfg), base_(mem.shared().reserve_region(off_payload + cfg.payload_capacity, 64)) {}

  rpc_channel(const rpc_channel&) = delete;
  rpc_channel& operator=(const rpc_channel&) = delete;

  sim_memory& memory() { return mem_; }
  const rpc_config& config() const { return cfg_; }
  sim_address mailbox() const { return base_; }
  sim_address payload_base() const { return base_ + off_payload; }

  std::uint32_t state_now() { return state_cell().load(std::memory_order_acquire); }

  void register_pad(landing_pad pad) {
    std::unique_lock lock(pads_mutex_);
    auto id = pad.callee_id;
    pads_[id] = std::move(pad);
  }

  std::optional<std::string> pad_name(std::uint32_t id) const {
    std::shared_lock lock(pads_mutex_);
    auto it = pads_.find(id);
    if (it == pads_.end()) return std::nullopt;
    return it->second.name;
  }

  std::uint64_t invocations() const { return invocations_.load(); }

  std::vector<call_timing> timings() const {
    std::lock_guard lock(timings_mutex_);
    return timings_;
  }
  void clear_timings() {
    std::lock_guard lock(timings_mutex_);
    timings_.clear();
  }

  // Device side. Blocks until the host served the request.
  std::uint64_t issue_call(const call_request& req) {
    if (req.args.size() > max_args) throw error(errc::payload_overflow, "too many arguments");
    std::unique_lock client(client_mutex_, std::defer_lock);
    if (!client.try_lock_for(cfg_.watchdog))
      throw error(errc::timeout, "deadlock: mailbox held by another client for " + std::to_string(cfg_.watchdog.count()) +
                                     " ms");
    auto& shared = mem_.shared();
    auto t0 = now_ns();

    std::vector<std::uint64_t> slots(req.args.size(), 0);
    std::uint64_t cursor = 0;
    for (std::size_t i = 0; i < req.args.size(); ++i) {
      const auto& a = req.args[i];
      if (a.kind != arg_kind::ref) continue;
      cursor = align_up(cursor, payload_alignment);
      if (a.obj_size > cfg_.payload_capacity - std::min(cursor, cfg_.payload_capacity))
        throw error(errc::payload_overflow, "referenced objects exceed " + std::to_string(cfg_.payload_capacity) +
                                                " payload bytes");
      slots[i] = cursor;
      cursor += a.obj_size;
    }

    wait_for_state(empty, "mailbox to drain");
    auto seq = next_seq_++;
    shared.store<std::uint32_t>(base_ + off_error, ok);
    shared.store<std::uint32_t>(base_ + off_callee, req.callee);
    shared.store<std::uint32_t>(base_ + off_nargs, static_cast<std::uint32_t>(req.args.size()));
    shared.store<std::uint64_t>(base_ + off_ret, 0);
    shared.store<std::uint64_t>(base_ + off_seq, seq);
    for (std::size_t i = 0; i < req.args.size(); ++i) {
      const auto& a = req.args[i];
      std::byte raw[descriptor_size] = {};
      encode_le(static_cast<std::uint32_t>(a.kind), raw);
      encode_le(static_cast<std::uint32_t>(a.mode), raw + 4);
      encode_le(a.kind == arg_kind::ref ? slots[i] : a.raw, raw + 8);
      encode_le(a.obj_size, raw + 16);
      encode_le(a.obj_offset, raw + 24);
      encode_le(a.kind == arg_kind::ref ? a.addr.encode() : std::uint64_t{0}, raw + 32);
      shared.write_bytes(base_ + off_descriptors + i * descriptor_size, raw);
    }
    auto t1 = now_ns();

    for (std::size_t i = 0; i < req.args.size(); ++i) {
      const auto& a = req.args[i];
      if (a.kind != arg_kind::ref) continue;
      auto dst = payload_base() + slots[i];
      if (copies_in(a.mode))
        mem_.copy(dst, a.object_base(), a.obj_size);
      else
        shared.fill(dst, a.obj_size, std::byte{0});
    }
    auto t2 = now_ns();

    state_cell().store(requested, std::memory_order_release);
    wait_for_state(done, "host to serve callee " + std::to_string(req.callee));
    auto t3 = now_ns();

    for (std::size_t i = 0; i < req.args.size(); ++i) {
      const auto& a = req.args[i];
      if (a.kind == arg_kind::ref && copies_back(a.mode)) mem_.copy(a.object_base(), payload_base() + slots[i], a.obj_size);
    }
    auto ret = shared.load<std::uint64_t>(base_ + off_ret);
    auto flag = shared.load<std::uint32_t>(base_ + off_error);
    call_timing timing;
    timing.seq = seq;
    timing.callee = req.callee;
    timing.stages.host.copyin_ns = shared.load<std::uint64_t>(base_ + off_host_copyin);
    timing.stages.host.invoke_ns = shared.load<std::uint64_t>(base_ + off_host_invoke);
    timing.stages.host.copyout_notify_ns = shared.load<std::uint64_t>(base_ + off_host_copyout);
    auto done_at = shared.load<std::uint64_t>(base_ + off_done_ns);
    timing.stages.host.gap_ns = t3 > done_at ? t3 - done_at : 0;
    std::exception_ptr failure;
    if (flag == handler_failed) {
      std::lock_guard lock(failure_mutex_);
      failure = std::exchange(handler_failure_, nullptr);
    }
    state_cell().store(empty, std::memory_order_release);
    auto t4 = now_ns();

    timing.stages.device = {t1 - t0, (t2 - t1) + req.identify_ns, t3 - t2, t4 - t3};
    {
      std::lock_guard lock(timings_mutex_);
      timings_.push_back(timing);
    }

    if (flag == unknown_callee) throw error(errc::dispatch, "host has no landing pad for callee " + std::to_string(req.callee));
    if (flag == handler_failed) {
      if (failure) std::rethrow_exception(failure);
      throw error(errc::dispatch, "landing pad for callee " + std::to_string(req.callee) + " failed");
    }
    return ret;
  }

  // Host side; not reentrant, exactly one server agent may call it.
  bool serve_once() {
    if (state_cell().load(std::memory_order_acquire) != requested) return false;
    auto& shared = mem_.shared();
    auto t0 = now_ns();
    auto callee = shared.load<std::uint32_t>(base_ + off_callee);
    auto nargs = std::min<std::uint32_t>(shared.load<std::uint32_t>(base_ + off_nargs), max_args);
    std::vector<std::uint64_t> words(nargs);
    std::vector<arg_kind> kinds(nargs);
    for (std::uint32_t i = 0; i < nargs; ++i) {
      auto raw = shared.read_bytes(base_ + off_descriptors + i * descriptor_size, descriptor_size);
      kinds[i] = static_cast<arg_kind>(decode_le<std::uint32_t>(raw.data()));
      auto word = decode_le<std::uint64_t>(raw.data() + 8);
      if (kinds[i] == arg_kind::ref) {
        auto size = decode_le<std::uint64_t>(raw.data() + 16);
        auto offset = decode_le<std::uint64_t>(raw.data() + 24);
        auto device_ptr = sim_address::decode(decode_le<std::uint64_t>(raw.data() + 32)).value_or(sim_address{});
        // The landing pad gets a pointer with the same offset into the copy.
        translation t{{device_ptr.space, device_ptr.offset - offset}, payload_base() + word, size};
        words[i] = translate(device_ptr, t).encode();
      } else {
        words[i] = word;
      }
    }
    auto t1 = now_ns();

    std::uint64_t ret = 0;
    std::uint32_t flag = ok;
    landing_handler handler;
    {
      std::shared_lock lock(pads_mutex_);
      auto it = pads_.find(callee);
      if (it != pads_.end()) handler = it->second.handler;
    }
    if (!handler) {
      ret = dispatch_error_ret;
      flag = unknown_callee;
    } else {
      invocations_.fetch_add(1);
      try {
        landing_context ctx{mem_, callee, words, kinds};
        ret = handler(ctx);
      } catch (...) {
        ret = dispatch_error_ret;
        flag = handler_failed;
        std::lock_guard lock(failure_mutex_);
        handler_failure_ = std::current_exception();
      }
    }
    auto t2 = now_ns();

    shared.store<std::uint64_t>(base_ + off_ret, ret);
    shared.store<std::uint32_t>(base_ + off_error, flag);
    shared.store<std::uint64_t>(base_ + off_host_copyin, t1 - t0);
    shared.store<std::uint64_t>(base_ + off_host_invoke, t2 - t1);
    auto t3 = now_ns();
    shared.store<std::uint64_t>(base_ + off_host_copyout, t3 - t2);
    shared.store<std::uint64_t>(base_ + off_done_ns, t3);
    state_cell().store(done, std::memory_order_release);
    return true;
  }

 private:
  std::atomic_ref<std::uint32_t> state_cell() { return mem_.shared().cell32(base_ + off_state); }

  void wait_for_state(std::uint32_t want, const std::string& what) {
    backoff b;
    watchdog dog(cfg_.watchdog);
    while (state_cell().load(std::memory_order_acquire) != want) {
      if (dog.expired()) throw error(errc::timeout, "deadlock: waited " + std::to_string(cfg_.watchdog.count()) +
                                                        " ms for " + what);
      b.pause();
    }
  }

  sim_memory& mem_;
  rpc_config cfg_;
  sim_address base_;

  std::timed_mutex client_mutex_;
  std::uint64_t next_seq_ = 0;

  mutable std::shared_mutex pads_mutex_;
  std::map<std::uint32_t, landing_pad> pads_;

  std::atomic<std::uint64_t> invocations_{0};

  std::mutex failure_mutex_;
  std::exception_ptr handler_failure_;

  mutable std::mutex timings_mutex_;
  std::vector<call_timing> timings_;
};

// The single host thread polling the mailbox.
class rpc_server_agent {
 public:
  explicit rpc_server_agent(rpc_channel& ch)
      : thread_([&ch](std::stop_token st) {
          backoff b;
          while (!st.stop_requested()) {
            if (ch.serve_once())
              b.reset();
            else
              b.pause();
          }
        }) {}

  void stop() {
    thread_.request_stop();
    if (thread_.joinable()) thread_.join();
  }

 private:
  std::jthread thread_;
};

// Runtime inputs for executing a lowering plan at one call site.
struct plan_context {
  std::span<const std::uint64_t> args;  // argument words, pointers encoded
  std::function<std::optional<sim_address>(const object_ref&)> resolve;  // base of a static object
  const object_registry* registry = nullptr;
};

inline call_request build_request(const lowering_plan& plan, const plan_context& ctx) {
  if (ctx.args.size() != plan.args.size())
    throw error(errc::internal_inconsistency, "call site passes " + std::to_string(ctx.args.size()) +
                                                  " arguments, plan expects " + std::to_string(plan.args.size()));
  auto t0 = now_ns();
  call_request req;
  req.callee = plan.callee_id;
  for (std::size_t i = 0; i < plan.args.size(); ++i) {
    auto word = ctx.args[i];
    const auto& cls = plan.args[i];
    if (std::holds_alternative<value_arg>(cls)) {
      req.args.push_back(arg_descriptor::value(word));
      continue;
    }
    auto addr = sim_address::decode(word);
    if (const auto* r = std::get_if<static_ref>(&cls)) {
      if (!addr) throw error(errc::internal_inconsistency, "argument " + std::to_string(i) + " is not a pointer");
      req.args.push_back(arg_descriptor::ref(*addr, r->mode, r->size, r->offset));
    } else if (const auto* d = std::get_if<dispatch_arg>(&cls)) {
      const static_ref* hit = nullptr;
      for (const auto& c : d->candidates) {
        auto base = ctx.resolve ? ctx.resolve(c.object) : std::nullopt;
        if (addr && base && *base + c.offset == *addr) {
          hit = &c;
          break;
        }
      }
      if (!hit)
        throw error(errc::internal_inconsistency,
                    "argument " + std::to_string(i) + " matches none of the statically enumerated objects");
      req.args.push_back(arg_descriptor::ref(*addr, hit->mode, hit->size, hit->offset));
    } else {
      const auto& dyn = std::get<dynamic_lookup>(cls);
      std::optional<object_span> found;
      if (addr && ctx.registry) found = ctx.registry->find_object(*addr);
      if (found)
        req.args.push_back(
            arg_descriptor::ref(*addr, found->constant ? access_mode::read : dyn.mode, found->size, found->offset));
      else
        req.args.push_back(arg_descriptor::value(word));
    }
  }
  req.identify_ns = now_ns() - t0;
  return req;
}

}  // namespace gpufirst
