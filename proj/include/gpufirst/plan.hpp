#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "gpufirst/error.hpp"

namespace gpufirst {

enum class access_mode : std::uint32_t { read = 0, write = 1, read_write = 2 };

inline std::string_view to_string(access_mode m) {
  switch (m) {
    case access_mode::read: return "Read";
    case access_mode::write: return "Write";
    case access_mode::read_write: return "ReadWrite";
  }
  return "?";
}

constexpr bool copies_in(access_mode m) { return m != access_mode::write; }
constexpr bool copies_back(access_mode m) { return m != access_mode::read; }

// Type codes for variadic landing-pad names: a base scalar code followed by
// one `p` per level of indirection ("ip" is int*, "fp" is float*).
inline bool valid_type_code(std::string_view code) {
  if (code.empty()) return false;
  constexpr std::string_view bases = "ifdlc";
  if (bases.find(code.front()) == std::string_view::npos) return false;
  for (auto ch : code.substr(1))
    if (ch != 'p') return false;
  return true;
}

inline bool is_pointer_code(std::string_view code) { return code.size() > 1; }

inline std::string mangle(std::string_view base_name, std::span<const std::string> variadic_codes) {
  std::string out = "__";
  out += base_name;
  for (const auto& code : variadic_codes) {
    if (!valid_type_code(code)) throw error(errc::mangling, "unknown type code '" + code + "'");
    out += '_';
    out += code;
  }
  return out;
}

// Identity of a statically known object: a global, or an alloca / by-value
// parameter of a given function.
struct object_ref {
  enum class kind { global, local };
  kind where = kind::global;
  std::string function;
  std::string name;

  friend bool operator==(const object_ref&, const object_ref&) = default;
};

struct static_ref {
  object_ref object;
  std::uint64_t offset = 0;
  std::uint64_t size = 0;
  access_mode mode = access_mode::read_write;

  friend bool operator==(const static_ref&, const static_ref&) = default;
};

struct value_arg {
  friend bool operator==(const value_arg&, const value_arg&) = default;
};

struct dispatch_arg {
  std::vector<static_ref> candidates;  // comparison order
  friend bool operator==(const dispatch_arg&, const dispatch_arg&) = default;
};

struct dynamic_lookup {
  access_mode mode = access_mode::read_write;
  friend bool operator==(const dynamic_lookup&, const dynamic_lookup&) = default;
};

using classification = std::variant<value_arg, static_ref, dispatch_arg, dynamic_lookup>;

inline std::string to_string(const static_ref& r, bool with_name = true) {
  std::string out = with_name ? "StaticRef(" : "(";
  out += r.object.name + "," + std::to_string(r.offset) + "," + std::to_string(r.size) + "," +
         std::string(to_string(r.mode)) + ")";
  return out;
}

inline std::string to_string(const classification& c) {
  struct visitor {
    std::string operator()(const value_arg&) const { return "Value"; }
    std::string operator()(const static_ref& r) const { return to_string(r); }
    std::string operator()(const dispatch_arg& d) const {
      std::string out = "Dispatch{";
      for (std::size_t i = 0; i < d.candidates.size(); ++i) {
        if (i) out += ",";
        out += to_string(d.candidates[i], false);
      }
      return out + "}";
    }
    std::string operator()(const dynamic_lookup& d) const {
      return "DynamicLookup(" + std::string(to_string(d.mode)) + ")";
    }
  };
  return std::visit(visitor{}, c);
}

struct lowering_plan {
  std::size_t call_site = 0;
  std::string callee;
  std::uint32_t callee_id = 0;
  std::string landing_pad;
  std::vector<std::string> variadic_codes;
  std::vector<classification> args;

  friend bool operator==(const lowering_plan&, const lowering_plan&) = default;
};

inline std::string to_string(const lowering_plan& p) {
  std::string out = "site " + std::to_string(p.call_site) + " pad=" + p.landing_pad +
                    " callee=" + std::to_string(p.callee_id) + " args=[";
  for (std::size_t i = 0; i < p.args.size(); ++i) {
    if (i) out += ", ";
    out += to_string(p.args[i]);
  }
  return out + "]";
}

}  // namespace gpufirst
