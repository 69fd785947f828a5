#pragma once

#include <cstring>
#include <functional>
#include <memory>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gpufirst/analysis.hpp"
#include "gpufirst/mini_ir.hpp"
#include "gpufirst/multiteam.hpp"
#include "gpufirst/rpc.hpp"

namespace gpufirst::ir {

// One external call as the interpreter reaches it: the static plan of the
// site, the argument words and a resolver from plan objects to the
// addresses they have in the current activation.
struct call_event {
  const lowering_plan& plan;
  std::span<const std::uint64_t> args;
  const function& fn;
  const instruction& call;
  std::function<std::optional<sim_address>(const object_ref&)> resolve;
};

using external_hook = std::function<std::uint64_t(const call_event&)>;

// Executes a module on the simulated device. Globals are placed as static
// objects, every alloca and byval copy is a registered stack object, and
// external calls go through their lowering plan to the RPC channel.
class interpreter {
 public:
  static constexpr int max_depth = 256;

  interpreter(const module& m, runtime& rt) : m_(m), rt_(rt), analysis_(m), plans_(analysis_.lower_module()) {
    auto& dev = rt_.memory().device();
    for (const auto& g : m_.globals) {
      std::vector<std::byte> bytes(g.size);
      if (g.init) std::memcpy(bytes.data(), g.init->data(), std::min<std::size_t>(g.init->size(), g.size));
      globals_[g.name] = dev.place_static(bytes, g.constant);
    }
    stack_cursor_ = rt_.stack_region().offset;
    stack_end_ = stack_cursor_ + rt_.config().stack_size;
  }

  const analysis& static_analysis() const { return analysis_; }
  const std::vector<lowering_plan>& plans() const { return plans_; }
  sim_address global_address(const std::string& name) const { return globals_.at(name); }

  void set_external_hook(external_hook hook) { hook_ = std::move(hook); }

  // Default behavior of an external call: build the RPC request from the
  // plan and issue it.
  std::uint64_t issue(const call_event& ev) {
    plan_context ctx{ev.args, ev.resolve, &rt_.registry()};
    return rt_.rpc().issue_call(build_request(ev.plan, ctx));
  }

  std::uint64_t run(const std::string& entry = "main", std::vector<std::uint64_t> args = {}) {
    const auto* f = m_.find_function(entry);
    if (!f) throw error(errc::resolve, "no function '" + entry + "'");
    return call(*f, args);
  }

 private:
  struct frame {
    const function* fn = nullptr;
    std::map<std::string, std::uint64_t> values;
    std::map<std::string, sim_address> objects;
    std::vector<sim_address> owned;
  };

  struct flow {
    bool returned = false;
    std::uint64_t value = 0;
  };

  sim_address push_object(frame& fr, const std::string& name, std::uint64_t size) {
    auto base = align_up(stack_cursor_, 16);
    if (base + size > stack_end_) throw error(errc::fault, "device stack exhausted in " + fr.fn->name);
    stack_cursor_ = base + size;
    sim_address a{space_kind::device, base};
    rt_.memory().device().fill(a, size, std::byte{0});
    rt_.registry().register_stack(a, size);
    fr.objects[name] = a;
    fr.owned.push_back(a);
    return a;
  }

  // A byval argument word is the caller-side address of the object to copy.
  std::uint64_t call(const function& f, const std::vector<std::uint64_t>& args) {
    if (int(frames_.size()) >= max_depth) throw error(errc::fault, "call depth limit reached in " + f.name);
    if (args.size() != f.params.size())
      throw error(errc::internal_inconsistency, "function " + f.name + " called with wrong arity");
    auto saved_cursor = stack_cursor_;
    frames_.push_back(std::make_unique<frame>());
    auto& fr = *frames_.back();
    fr.fn = &f;
    struct unwind {
      interpreter& self;
      std::uint64_t cursor;
      ~unwind() {
        for (auto a : self.frames_.back()->owned) self.rt_.registry().unregister_stack(a);
        self.frames_.pop_back();
        self.stack_cursor_ = cursor;
      }
    } guard{*this, saved_cursor};
    for (std::size_t i = 0; i < f.params.size(); ++i) {
      const auto& p = f.params[i];
      if (p.byval) {
        auto src = pointer_of(args[i], "byval argument of " + f.name);
        auto dst = push_object(fr, p.name, *p.byval);
        rt_.memory().copy(dst, src, *p.byval);
        fr.values[p.name] = dst.encode();
      } else {
        fr.values[p.name] = args[i];
      }
    }
    auto r = exec(fr, f.body);
    return r.value;
  }

  sim_address pointer_of(std::uint64_t word, const std::string& what) const {
    auto a = sim_address::decode(word);
    if (!a) throw error(errc::fault, what + " is not a pointer");
    return *a;
  }

  std::uint64_t eval(const frame& fr, const operand& o) const {
    if (o.global) return globals_.at(o.name).encode();
    return fr.values.at(o.name);
  }

  std::optional<sim_address> resolve(const object_ref& o) const {
    if (o.where == object_ref::kind::global) {
      auto it = globals_.find(o.name);
      if (it == globals_.end()) return std::nullopt;
      return it->second;
    }
    for (auto it = frames_.rbegin(); it != frames_.rend(); ++it) {
      if ((*it)->fn->name != o.function) continue;
      auto obj = (*it)->objects.find(o.name);
      if (obj == (*it)->objects.end()) return std::nullopt;
      return obj->second;
    }
    return std::nullopt;
  }

  std::uint64_t load_word(sim_address a, std::uint64_t width) const {
    auto& mem = rt_.memory();
    switch (width) {
      case 1: return mem.load<std::uint8_t>(a);
      case 2: return mem.load<std::uint16_t>(a);
      case 4: return mem.load<std::uint32_t>(a);
      default: return mem.load<std::uint64_t>(a);
    }
  }

  void store_word(sim_address a, std::uint64_t v, std::uint64_t width) {
    auto& mem = rt_.memory();
    switch (width) {
      case 1: mem.store<std::uint8_t>(a, std::uint8_t(v)); break;
      case 2: mem.store<std::uint16_t>(a, std::uint16_t(v)); break;
      case 4: mem.store<std::uint32_t>(a, std::uint32_t(v)); break;
      default: mem.store<std::uint64_t>(a, v); break;
    }
  }

  flow exec(frame& fr, const std::vector<instruction>& body) {
    for (const auto& in : body) {
      std::uint64_t result = 0;
      switch (in.op) {
        case opcode::alloca_: result = push_object(fr, in.result, in.imm).encode(); break;
        case opcode::heapalloc: result = rt_.heap().allocate(0, 0, in.imm).encode(); break;
        case opcode::constant: result = in.imm; break;
        case opcode::fieldaddr: {
          auto base = pointer_of(eval(fr, in.operands[0]), "fieldaddr base");
          auto off = in.dynamic_offset ? eval(fr, in.operands[1]) : in.imm;
          result = (base + off).encode();
          break;
        }
        case opcode::select:
          result = eval(fr, in.operands[0]) != 0 ? eval(fr, in.operands[1]) : eval(fr, in.operands[2]);
          break;
        case opcode::load:
          result = load_word(pointer_of(eval(fr, in.operands[0]), "load address"), in.imm);
          break;
        case opcode::store:
          store_word(pointer_of(eval(fr, in.operands[0]), "store address"), eval(fr, in.operands[1]), in.imm);
          break;
        case opcode::call_local: {
          std::vector<std::uint64_t> args;
          for (const auto& a : in.operands) args.push_back(eval(fr, a));
          result = call(*m_.find_function(in.callee), args);
          break;
        }
        case opcode::call_ext: {
          std::vector<std::uint64_t> args;
          for (const auto& a : in.operands) args.push_back(eval(fr, a));
          call_event ev{plans_.at(in.site), args, *fr.fn, in, [this](const object_ref& o) { return resolve(o); }};
          result = hook_ ? hook_(ev) : issue(ev);
          break;
        }
        case opcode::loop:
          for (std::uint64_t k = 0; k < in.imm; ++k) {
            auto r = exec(fr, in.body);
            if (r.returned) return r;
          }
          break;
        case opcode::ret: return {true, in.operands.empty() ? 0 : eval(fr, in.operands[0])};
      }
      if (!in.result.empty()) fr.values[in.result] = result;
    }
    return {};
  }

  const module& m_;
  runtime& rt_;
  analysis analysis_;
  std::vector<lowering_plan> plans_;
  std::map<std::string, sim_address> globals_;
  std::vector<std::unique_ptr<frame>> frames_;
  std::uint64_t stack_cursor_ = 0;
  std::uint64_t stack_end_ = 0;
  external_hook hook_;
};

}  // namespace gpufirst::ir
