#pragma once

// Runs a mini-IR program and checks, at every external call, that the object
// a pointer argument actually lands in is one the analysis predicted. The
// runtime truth comes from the object registry, not from the analysis.

#include <string>

#include "gpufirst/interpreter.hpp"
#include "gpufirst/mini_ir.hpp"

namespace oracle {

struct soundness_report {
  bool sound = true;
  std::size_t calls = 0;
  std::size_t pointer_args = 0;
  std::size_t dispatch_checked = 0;
  std::string detail;
};

inline soundness_report check_soundness(const std::string& text) {
  using namespace gpufirst;
  soundness_report rep;
  auto m = ir::parse(text);
  runtime_config rc;
  rc.memory = {4ull << 20, 1ull << 16, 1ull << 17};
  rc.heap_size = 1ull << 20;
  rc.stack_size = 1ull << 20;
  rc.worker_threads = 1;
  runtime rt(rc);
  ir::interpreter interp(m, rt);
  auto fail = [&](const ir::call_event& ev, std::size_t i, const std::string& why) {
    if (!rep.sound) return;
    rep.sound = false;
    rep.detail = ev.fn.name + " line " + std::to_string(ev.call.line) + " arg " + std::to_string(i) + ": " + why;
  };
  interp.set_external_hook([&](const ir::call_event& ev) -> std::uint64_t {
    ++rep.calls;
    for (std::size_t i = 0; i < ev.plan.args.size(); ++i) {
      const auto& cls = ev.plan.args[i];
      auto addr = sim_address::decode(ev.args[i]);
      if (std::holds_alternative<value_arg>(cls) || std::holds_alternative<dynamic_lookup>(cls)) continue;
      ++rep.pointer_args;
      if (!addr) {
        fail(ev, i, "statically classified reference is not a pointer");
        continue;
      }
      auto actual = rt.registry().find_object(*addr);
      if (!actual) {
        fail(ev, i, "pointer " + to_string(*addr) + " is outside every live object");
        continue;
      }
      auto matches = [&](const static_ref& r) {
        auto base = ev.resolve(r.object);
        return base && *base == actual->base && r.offset == actual->offset && r.size == actual->size;
      };
      if (const auto* r = std::get_if<static_ref>(&cls)) {
        if (!matches(*r)) fail(ev, i, "object differs from " + to_string(*r));
        continue;
      }
      const auto& d = std::get<dispatch_arg>(cls);
      ++rep.dispatch_checked;
      std::size_t hits = 0;
      for (const auto& c : d.candidates) hits += matches(c) ? 1 : 0;
      if (d.candidates.size() < 2) fail(ev, i, "dispatch with fewer than two candidates");
      if (hits != 1) fail(ev, i, std::to_string(hits) + " dispatch candidates match " + to_string(*addr));
    }
    return 0;
  });
  rt.run_main([&](runtime&) {
    interp.run("main");
    return 0;
  });
  return rep;
}

}  // namespace oracle
