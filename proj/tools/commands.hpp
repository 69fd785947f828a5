#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gpufirst/analysis.hpp"
#include "gpufirst/bench.hpp"
#include "gpufirst/host_library.hpp"
#include "gpufirst/interpreter.hpp"
#include "gpufirst/mini_ir.hpp"
#include "gpufirst_corpus.hpp"

namespace gpufirst::cli {

enum exit_code : int { ok = 0, mismatch = 1, usage = 2, fault = 3 };

struct demo_values {
  std::int64_t r = 0;
  float f = 0;
  std::int32_t i = 0;
  std::int32_t b = 0;
  std::int32_t p1 = 0;
};

// Runs the fscanf call-site program on the simulator with `input` as the
// contents of the host file.
inline demo_values run_demo_program(const std::string& input) {
  auto m = ir::parse(corpus::fscanf_callsite);
  runtime_config rc;
  rc.memory.device_capacity = 8ull << 20;
  rc.memory.host_capacity = 1ull << 20;
  rc.heap_size = 2ull << 20;
  runtime rt(rc);
  ir::interpreter interp(m, rt);
  register_host_pads(rt.rpc(), interp.plans());
  auto file = host_file::create(rt.memory().host(), input);
  rt.run_main([&](runtime&) {
    interp.run("main", {file.encode()});
    return 0;
  });
  auto& dev = rt.memory().device();
  demo_values v;
  v.r = std::int64_t(dev.load<std::uint64_t>(interp.global_address("out_r")));
  v.r = std::int32_t(v.r);
  v.i = dev.load<std::int32_t>(interp.global_address("out_i"));
  v.f = dev.load<float>(interp.global_address("out_f"));
  v.b = dev.load<std::int32_t>(interp.global_address("out_b"));
  auto p = sim_address::decode(dev.load<std::uint64_t>(interp.global_address("out_p")));
  v.p1 = dev.load<std::int32_t>(*p + 4);
  return v;
}

// Direct host execution of the same call: s.a is 1 so the second %d goes to
// i, every object starts zeroed.
inline demo_values demo_oracle(const std::string& input) {
  demo_values v;
  int i = 0, p1 = 0;
  float f = 0;
  v.r = std::sscanf(input.c_str(), "%f%d%d", &f, &i, &p1);
  v.f = f;
  v.i = i;
  v.p1 = p1;
  return v;
}

inline int cmd_demo(const std::string& input, std::ostream& out, std::ostream& err) {
  auto got = run_demo_program(input);
  auto want = demo_oracle(input);
  out << "input \"" << input << "\"\n";
  out << "r=" << got.r << "\n";
  out << "s.f=" << got.f << "\n";
  out << "i=" << got.i << "\n";
  out << "s.b=" << got.b << "\n";
  out << "p[1]=" << got.p1 << "\n";
  bool same = true;
  auto cmp = [&](const char* what, auto g, auto w) {
    bool eq = std::memcmp(&g, &w, sizeof g) == 0;
    if (!eq) err << "mismatch " << what << ": simulator " << g << ", host " << w << "\n";
    same = same && eq;
  };
  cmp("r", got.r, want.r);
  cmp("s.f", got.f, want.f);
  cmp("i", got.i, want.i);
  cmp("s.b", got.b, want.b);
  cmp("p[1]", got.p1, want.p1);
  out << (same ? "oracle: match\n" : "oracle: MISMATCH\n");
  return same ? ok : mismatch;
}

inline std::vector<std::string> lower_text(std::string_view text) {
  auto m = ir::parse(text);
  std::vector<std::string> lines;
  for (const auto& p : ir::lower_module(m)) lines.push_back(to_string(p));
  return lines;
}

inline int cmd_lower(const std::string& path, std::ostream& out, std::ostream& err) {
  std::ifstream in(path);
  if (!in) {
    err << path << ": cannot open\n";
    return usage;
  }
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    for (const auto& l : lower_text(ss.str())) out << l << "\n";
  } catch (const error& e) {
    if (e.code() != errc::parse && e.code() != errc::resolve) throw;
    err << path << ": " << e.what() << "\n";
    return usage;
  }
  return ok;
}

struct alloc_grid {
  std::vector<std::string> allocators{"generic", "balanced:32,16"};
  std::vector<std::uint32_t> teams{1, 32, 64, 128, 256};
  std::vector<std::uint32_t> threads{1, 32, 64, 128, 256};
  std::uint32_t reps = 10;
  std::uint64_t block_size = 64;
  bool json = false;
};

inline int cmd_bench_alloc(const alloc_grid& grid, std::ostream& out, std::ostream& err) {
  std::vector<allocator_config> cfgs;
  for (const auto& a : grid.allocators) {
    try {
      cfgs.push_back(parse_allocator_config(a));
    } catch (const error& e) {
      err << e.what() << "\n";
      return usage;
    }
  }
  if (grid.reps < 3) {
    err << "--reps must be at least 3\n";
    return usage;
  }
  if (!grid.json)
    out << std::left << std::setw(18) << "allocator" << std::right << std::setw(7) << "teams" << std::setw(9)
        << "threads" << std::setw(14) << "min_us" << std::setw(14) << "median_us" << std::setw(14) << "mean_us"
        << "\n";
  for (const auto& cfg : cfgs)
    for (auto t : grid.teams)
      for (auto k : grid.threads) {
        alloc_bench_config bc;
        bc.allocator = cfg;
        bc.teams = t;
        bc.threads = k;
        bc.reps = grid.reps;
        bc.block_size = grid.block_size;
        auto r = bench_alloc_point(bc);
        if (grid.json) {
          out << to_json(r).dump() << "\n";
          continue;
        }
        out << std::left << std::setw(18) << to_string(cfg) << std::right << std::setw(7) << t << std::setw(9) << k;
        if (r.failed) {
          out << "  failed: " << r.error << "\n";
          continue;
        }
        out << std::fixed << std::setprecision(1) << std::setw(14) << r.summary.min / 1e3 << std::setw(14)
            << r.summary.median / 1e3 << std::setw(14) << r.summary.mean / 1e3 << "\n";
      }
  return ok;
}

inline int cmd_bench_rpc(const rpc_bench_config& cfg, bool json, std::ostream& out) {
  auto rep = bench_rpc(cfg);
  if (json) {
    for (const auto& c : rep.calls) out << to_json(c).dump() << "\n";
    return ok;
  }
  const auto& m = rep.mean_ns;
  const auto& f = rep.fraction;
  out << rep.calls.size() << " calls, handler delay " << cfg.handler_delay.count() / 1000 << " us\n";
  auto row = [&](const char* side, const char* stage, double ns, double frac) {
    out << std::left << std::setw(8) << side << std::setw(16) << stage << std::right << std::fixed
        << std::setprecision(3) << std::setw(12) << ns / 1e3 << std::setw(10) << frac << "\n";
  };
  out << std::left << std::setw(8) << "side" << std::setw(16) << "stage" << std::right << std::setw(12) << "mean_us"
      << std::setw(10) << "fraction" << "\n";
  row("device", "init", m.init, f.init);
  row("device", "identify", m.identify, f.identify);
  row("device", "wait", m.wait, f.wait);
  row("device", "copyback", m.copyback, f.copyback);
  row("host", "copyin", m.copyin, f.copyin);
  row("host", "invoke", m.invoke, f.invoke);
  row("host", "copyout_notify", m.copyout_notify, f.copyout_notify);
  row("host", "gap", m.gap, f.gap);
  out << "device sum " << std::setprecision(4) << f.device_sum() << ", host sum " << f.host_sum() << "\n";
  return ok;
}

}  // namespace gpufirst::cli
