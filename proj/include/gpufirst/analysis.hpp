#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "gpufirst/mini_ir.hpp"
#include "gpufirst/plan.hpp"

namespace gpufirst::ir {

struct located {
  object_ref object;
  std::uint64_t offset = 0;
  friend bool operator==(const located&, const located&) = default;
};

struct underlying {
  enum class kind { unique, candidates, unknown };
  kind k = kind::unknown;
  std::vector<located> objects;  // enumeration order

  bool contains(const object_ref& o) const {
    for (const auto& l : objects)
      if (l.object == o) return true;
    return false;
  }
};

struct call_site_ref {
  const function* fn = nullptr;
  const instruction* call = nullptr;
  bool in_loop = false;
};

// Underlying-object analysis over one module. Parameters are resolved
// through their call sites with a call-string depth of one; anything beyond
// that, heap allocations, loop or recursion instantiated stack objects and
// loaded pointers are Unknown.
class analysis {
 public:
  static constexpr int max_call_depth = 1;

  explicit analysis(const module& m) : m_(m) {
    for (const auto& f : m.functions) {
      auto& defs = defs_[f.name];
      for (std::size_t i = 0; i < f.params.size(); ++i) defs[f.params[i].name] = {nullptr, false, int(i)};
      index_block(f, f.body, false, defs);
    }
    for (const auto& f : m.functions)
      if (reaches(f.name, f.name)) recursive_.insert(f.name);
    std::uint32_t next_id = 1;
    for (const auto& s : sites_) {
      auto pad = mangle(s.call->callee, s.call->sig);
      if (!pad_ids_.count(pad)) pad_ids_[pad] = next_id++;
    }
  }

  const module& ir() const { return m_; }
  const std::vector<call_site_ref>& call_sites() const { return sites_; }
  bool is_recursive(const std::string& fn) const { return recursive_.count(fn) != 0; }

  std::uint64_t object_size(const object_ref& o) const {
    if (o.where == object_ref::kind::global) return m_.find_global(o.name)->size;
    const auto& d = defs_.at(o.function).at(o.name);
    if (d.param_index >= 0) return *m_.find_function(o.function)->params[d.param_index].byval;
    return d.inst->imm;
  }

  bool object_constant(const object_ref& o) const {
    return o.where == object_ref::kind::global && m_.find_global(o.name)->constant;
  }

  bool is_pointer(const function& f, const operand& v) const {
    if (v.global) return true;
    const auto& d = defs_.at(f.name).at(v.name);
    if (d.param_index >= 0) return f.params[d.param_index].pointer;
    switch (d.inst->op) {
      case opcode::alloca_:
      case opcode::heapalloc:
      case opcode::fieldaddr: return true;
      case opcode::select: return is_pointer(f, d.inst->operands[1]);
      case opcode::load: return d.inst->pointer_access;
      case opcode::call_local: return m_.find_function(d.inst->callee)->returns_pointer;
      default: return false;
    }
  }

  underlying underlying_objects(const function& f, const operand& v) const { return walk(f, v, 0); }

  classification classify_arg(const call_site_ref& site, std::size_t index) const {
    const auto& call = *site.call;
    const auto* callee = m_.find_extern(call.callee);
    const auto& arg = call.operands.at(index);
    auto effect = index < callee->params.size() ? callee->params[index] : param_effect::read_write;
    if (effect == param_effect::opaque || effect == param_effect::value || !is_pointer(*site.fn, arg))
      return value_arg{};
    auto mode = effect == param_effect::read    ? access_mode::read
                : effect == param_effect::write ? access_mode::write
                                                : access_mode::read_write;
    auto u = underlying_objects(*site.fn, arg);
    auto make_ref = [&](const located& l) {
      return static_ref{l.object, l.offset, object_size(l.object), mode_for(l.object, mode, site)};
    };
    switch (u.k) {
      case underlying::kind::unique: return make_ref(u.objects.front());
      case underlying::kind::candidates: {
        dispatch_arg d;
        for (const auto& l : u.objects) d.candidates.push_back(make_ref(l));
        return d;
      }
      case underlying::kind::unknown: break;
    }
    return dynamic_lookup{mode == access_mode::read ? mode : access_mode::read_write};
  }

  lowering_plan lower_call_site(const call_site_ref& site) const {
    lowering_plan p;
    p.call_site = site.call->site;
    p.callee = site.call->callee;
    p.variadic_codes = site.call->sig;
    p.landing_pad = mangle(p.callee, p.variadic_codes);
    p.callee_id = pad_ids_.at(p.landing_pad);
    for (std::size_t i = 0; i < site.call->operands.size(); ++i) p.args.push_back(classify_arg(site, i));
    return p;
  }

  std::vector<lowering_plan> lower_module() const {
    std::vector<lowering_plan> out;
    for (const auto& s : sites_) out.push_back(lower_call_site(s));
    return out;
  }

 private:
  struct def_info {
    const instruction* inst = nullptr;
    bool in_loop = false;
    int param_index = -1;
  };

  void index_block(const function& f, const std::vector<instruction>& body, bool in_loop,
                   std::map<std::string, def_info>& defs) {
    for (const auto& in : body) {
      if (!in.result.empty()) defs[in.result] = {&in, in_loop, -1};
      if (in.op == opcode::call_ext) sites_.push_back({&f, &in, in_loop});
      if (in.op == opcode::call_local) callers_[in.callee].push_back({&f, &in});
      if (in.op == opcode::loop) index_block(f, in.body, true, defs);
    }
  }

  bool reaches(const std::string& from, const std::string& target) const {
    std::set<std::string> seen;
    std::vector<std::string> work{from};
    while (!work.empty()) {
      auto cur = work.back();
      work.pop_back();
      for (const auto& [callee, sites] : callers_)
        for (const auto& [caller, _] : sites)
          if (caller->name == cur) {
            if (callee == target) return true;
            if (seen.insert(callee).second) work.push_back(callee);
          }
    }
    return false;
  }

  static underlying unknown() { return {underlying::kind::unknown, {}}; }

  static underlying unite(underlying a, const underlying& b) {
    if (a.k == underlying::kind::unknown || b.k == underlying::kind::unknown) return unknown();
    for (const auto& l : b.objects)
      if (std::find(a.objects.begin(), a.objects.end(), l) == a.objects.end()) a.objects.push_back(l);
    a.k = a.objects.size() == 1 ? underlying::kind::unique : underlying::kind::candidates;
    return a;
  }

  underlying walk(const function& f, const operand& v, int depth) const {
    if (v.global) return {underlying::kind::unique, {{{object_ref::kind::global, "", v.name}, 0}}};
    const auto& d = defs_.at(f.name).at(v.name);
    if (d.param_index >= 0) {
      const auto& p = f.params[d.param_index];
      if (p.byval) {
        if (is_recursive(f.name)) return unknown();
        return {underlying::kind::unique, {{{object_ref::kind::local, f.name, p.name}, 0}}};
      }
      auto it = callers_.find(f.name);
      if (depth >= max_call_depth || it == callers_.end() || it->second.empty()) return unknown();
      std::optional<underlying> acc;
      for (const auto& [caller, call] : it->second) {
        auto r = walk(*caller, call->operands[d.param_index], depth + 1);
        acc = acc ? unite(*acc, r) : r;
        if (acc->k == underlying::kind::unknown) return *acc;
      }
      return *acc;
    }
    const auto& in = *d.inst;
    switch (in.op) {
      case opcode::alloca_:
        if (d.in_loop || is_recursive(f.name)) return unknown();
        return {underlying::kind::unique, {{{object_ref::kind::local, f.name, in.result}, 0}}};
      case opcode::fieldaddr: {
        if (in.dynamic_offset) return unknown();
        auto base = walk(f, in.operands[0], depth);
        if (base.k == underlying::kind::unknown) return base;
        underlying out{base.k, {}};
        for (auto l : base.objects) {
          l.offset += in.imm;
          if (l.offset >= object_size(l.object)) return unknown();
          out.objects.push_back(l);
        }
        return out;
      }
      case opcode::select: return unite(walk(f, in.operands[1], depth), walk(f, in.operands[2], depth));
      default: return unknown();
    }
  }

  // Write-only when the object is a non-escaping local alloca that no store
  // can have defined before this (non-looping) call site. A callee that only
  // writes still gets ReadWrite otherwise: copy-back covers the whole object
  // and must not wipe bytes the callee left alone.
  access_mode mode_for(const object_ref& o, access_mode mode, const call_site_ref& site) const {
    if (object_constant(o)) return access_mode::read;
    if (mode == access_mode::read) return mode;
    if (o.where != object_ref::kind::local || o.function != site.fn->name || site.in_loop)
      return access_mode::read_write;
    const auto& d = defs_.at(o.function).at(o.name);
    if (d.param_index >= 0) return access_mode::read_write;
    if (defined_or_escaping(*site.fn, site.fn->body, o, site.call)) return access_mode::read_write;
    return access_mode::write;
  }

  bool defined_or_escaping(const function& f, const std::vector<instruction>& body, const object_ref& o,
                           const instruction* site) const {
    auto touches = [&](const operand& v) { return is_pointer(f, v) && underlying_objects(f, v).contains(o); };
    for (const auto& in : body) {
      switch (in.op) {
        case opcode::store:
          if (touches(in.operands[0]) || touches(in.operands[1])) return true;
          break;
        case opcode::call_local:
        case opcode::call_ext:
          if (&in == site) break;
          for (const auto& a : in.operands)
            if (touches(a)) return true;
          break;
        case opcode::ret:
          if (!in.operands.empty() && touches(in.operands[0])) return true;
          break;
        case opcode::loop:
          if (defined_or_escaping(f, in.body, o, site)) return true;
          break;
        default: break;
      }
    }
    return false;
  }

  const module& m_;
  std::map<std::string, std::map<std::string, def_info>> defs_;
  std::map<std::string, std::vector<std::pair<const function*, const instruction*>>> callers_;
  std::set<std::string> recursive_;
  std::vector<call_site_ref> sites_;
  std::map<std::string, std::uint32_t> pad_ids_;
};

inline underlying underlying_objects(const module& m, const function& f, const operand& v) {
  return analysis(m).underlying_objects(f, v);
}

inline classification classify_arg(const module& m, const call_site_ref& site, std::size_t index) {
  return analysis(m).classify_arg(site, index);
}

inline lowering_plan lower_call_site(const module& m, const call_site_ref& site) {
  return analysis(m).lower_call_site(site);
}

inline std::vector<lowering_plan> lower_module(const module& m) { return analysis(m).lower_module(); }

}  // namespace gpufirst::ir
