#pragma once

#include <algorithm>
#include <chrono>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "gpufirst/allocators.hpp"
#include "gpufirst/host_library.hpp"
#include "gpufirst/multiteam.hpp"
#include "gpufirst/rpc.hpp"

namespace gpufirst {

struct bench_summary {
  double min = 0;
  double median = 0;
  double mean = 0;
  friend bool operator==(const bench_summary&, const bench_summary&) = default;
};

inline bench_summary summarize(std::vector<double> xs) {
  if (xs.empty()) return {};
  std::sort(xs.begin(), xs.end());
  auto n = xs.size();
  double median = n % 2 ? xs[n / 2] : (xs[n / 2 - 1] + xs[n / 2]) / 2;
  return {xs.front(), median, std::accumulate(xs.begin(), xs.end(), 0.0) / double(n)};
}

// One benchmark data point. Durations are in nanoseconds.
struct bench_result {
  std::string name;
  nlohmann::json params = nlohmann::json::object();
  std::uint32_t repetitions = 0;
  std::vector<double> durations_ns;
  bench_summary summary;
  bool failed = false;
  std::string error;
  friend bool operator==(const bench_result&, const bench_result&) = default;
};

inline nlohmann::json to_json(const bench_result& r) {
  nlohmann::json j{{"benchmark", r.name},
                   {"params", r.params},
                   {"repetitions", r.repetitions},
                   {"durations_ns", r.durations_ns},
                   {"summary", {{"min", r.summary.min}, {"median", r.summary.median}, {"mean", r.summary.mean}}},
                   {"failed", r.failed}};
  if (r.failed) j["error"] = r.error;
  return j;
}

inline bench_result bench_result_from_json(const nlohmann::json& j) {
  bench_result r;
  r.name = j.at("benchmark").get<std::string>();
  r.params = j.at("params");
  r.repetitions = j.at("repetitions").get<std::uint32_t>();
  r.durations_ns = j.at("durations_ns").get<std::vector<double>>();
  const auto& s = j.at("summary");
  r.summary = {s.at("min").get<double>(), s.at("median").get<double>(), s.at("mean").get<double>()};
  r.failed = j.at("failed").get<bool>();
  if (r.failed) r.error = j.at("error").get<std::string>();
  return r;
}

struct alloc_bench_config {
  allocator_config allocator;
  std::uint32_t teams = 1;
  std::uint32_t threads = 1;
  std::uint64_t block_size = 64;
  std::uint32_t reps = 10;
  std::uint64_t heap_size = 32ull << 20;
  std::size_t worker_threads = 0;
};

// Every thread of every team allocates one block at the start of the kernel,
// writes it, and frees it again. One agent runs a team whose K threads
// execute in lockstep; the phases are separated by the cross-team barrier,
// so all T*K blocks are live at the same time as on a fully resident grid.
inline bench_result bench_alloc_point(const alloc_bench_config& cfg) {
  bench_result r;
  r.name = "alloc";
  r.params = {{"allocator", to_string(cfg.allocator)},
              {"teams", cfg.teams},
              {"threads", cfg.threads},
              {"block_size", cfg.block_size}};
  r.repetitions = cfg.reps;
  try {
    if (cfg.reps < 3) throw error(errc::config, "at least 3 repetitions are required");
    runtime_config rc;
    rc.allocator = cfg.allocator;
    rc.heap_size = cfg.heap_size;
    rc.memory.device_capacity = cfg.heap_size + (8ull << 20);
    rc.memory.host_capacity = 1ull << 20;
    rc.worker_threads = cfg.worker_threads;
    runtime rt(rc);
    region_descriptor region;
    region.id = 1;
    region.cooperative = true;
    region.body = [&](agent_context& ctx) {
      auto& heap = rt.heap();
      auto& dev = rt.memory().device();
      std::vector<sim_address> blocks(cfg.threads);
      for (std::uint32_t lane = 0; lane < cfg.threads; ++lane)
        blocks[lane] = heap.allocate(lane, ctx.team, cfg.block_size);
      ctx.barrier();
      for (std::uint32_t lane = 0; lane < cfg.threads; ++lane) dev.fill(blocks[lane], cfg.block_size, std::byte(lane));
      ctx.barrier();
      for (std::uint32_t lane = 0; lane < cfg.threads; ++lane) heap.deallocate(blocks[lane]);
    };
    rt.run_main([&](runtime& self) {
      for (std::uint32_t rep = 0; rep < cfg.reps; ++rep) {
        auto t0 = now_ns();
        self.encounter_parallel(region, cfg.teams, 1);
        r.durations_ns.push_back(double(std::max<std::uint64_t>(now_ns() - t0, 1)));
      }
      return 0;
    });
  } catch (const std::exception& e) {
    r.failed = true;
    r.error = e.what();
  }
  r.summary = summarize(r.durations_ns);
  return r;
}

struct rpc_bench_config {
  std::uint32_t calls = 1000;
  std::chrono::nanoseconds handler_delay{0};
  std::uint64_t buffer_size = 128;
};

struct stage_fractions {
  double init = 0, identify = 0, wait = 0, copyback = 0;
  double copyin = 0, invoke = 0, copyout_notify = 0, gap = 0;
  double device_sum() const { return init + identify + wait + copyback; }
  double host_sum() const { return copyin + invoke + copyout_notify + gap; }
};

struct rpc_bench_report {
  std::vector<call_timing> calls;
  stage_fractions mean_ns;
  stage_fractions fraction;
  std::string output_sample;
};

// fprintf(out, "%s", buf) issued `calls` times: the format string is a Read
// argument, the 128-byte buffer a ReadWrite one and the FILE a value.
inline rpc_bench_report bench_rpc(const rpc_bench_config& cfg) {
  if (cfg.calls < 1) throw error(errc::config, "at least one call is required");
  if (cfg.buffer_size < 2) throw error(errc::config, "buffer must hold a string");
  runtime_config rc;
  rc.heap_size = 1ull << 20;
  rc.memory.device_capacity = 4ull << 20;
  rc.memory.host_capacity = 1ull << 20;
  runtime rt(rc);
  auto& mem = rt.memory();
  constexpr std::uint32_t callee = 1;
  rt.rpc().register_pad({"__fprintf_cp", callee, fprintf_pad(cfg.handler_delay), {}});

  auto out = host_file::create(mem.host(), "", 64 * 1024);
  auto fmt = mem.device().place_static(to_bytes("%s"), true);
  std::string text(cfg.buffer_size - 1, 'x');
  for (std::size_t i = 0; i < text.size(); ++i) text[i] = char('a' + i % 26);
  auto buf = rt.heap().allocate(0, 0, cfg.buffer_size);
  mem.write_bytes(buf, to_bytes(text));

  std::vector<arg_descriptor> args{arg_descriptor::value(out), arg_descriptor::ref(fmt, access_mode::read, 3, 0),
                                   arg_descriptor::ref(buf, access_mode::read_write, cfg.buffer_size, 0)};
  rt.rpc().clear_timings();
  for (std::uint32_t i = 0; i < cfg.calls; ++i) rt.rpc().issue_call({callee, args});

  rpc_bench_report rep;
  rep.calls = rt.rpc().timings();
  auto& m = rep.mean_ns;
  for (const auto& c : rep.calls) {
    const auto& d = c.stages.device;
    const auto& h = c.stages.host;
    m.init += d.init_ns, m.identify += d.identify_ns, m.wait += d.wait_ns, m.copyback += d.copyback_ns;
    m.copyin += h.copyin_ns, m.invoke += h.invoke_ns, m.copyout_notify += h.copyout_notify_ns, m.gap += h.gap_ns;
  }
  auto n = double(rep.calls.size());
  for (auto* v : {&m.init, &m.identify, &m.wait, &m.copyback, &m.copyin, &m.invoke, &m.copyout_notify, &m.gap}) *v /= n;
  auto dev = m.device_sum(), host = m.host_sum();
  auto& f = rep.fraction;
  if (dev > 0) f.init = m.init / dev, f.identify = m.identify / dev, f.wait = m.wait / dev, f.copyback = m.copyback / dev;
  if (host > 0)
    f.copyin = m.copyin / host, f.invoke = m.invoke / host, f.copyout_notify = m.copyout_notify / host,
    f.gap = m.gap / host;
  rep.output_sample = host_file::contents(mem, out).substr(0, 32);
  return rep;
}

}  // namespace gpufirst
