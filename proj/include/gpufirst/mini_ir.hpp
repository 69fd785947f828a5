#pragma once

// A small line-oriented IR for programs that call external (host) functions.
//
//   global @fmt size=8 const init="%f%d%d"
//   extern fscanf(params=[opaque read], variadic)
//   func example(%s: byval 12, %p: ptr) {
//     %i = alloca 4
//     %sf = fieldaddr %s + 8
//     %r = call ext fscanf(@fd, @fmt, %sf, %p) sig(fp, ip)
//     ret
//   }
//
// Values are untyped 8-byte words; the IR only distinguishes integers from
// pointers. The full grammar is documented in docs/mini_ir.md.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "gpufirst/error.hpp"
#include "gpufirst/plan.hpp"

namespace gpufirst::ir {

enum class param_effect { read, write, read_write, opaque, value };

inline std::string_view to_string(param_effect e) {
  switch (e) {
    case param_effect::read: return "read";
    case param_effect::write: return "write";
    case param_effect::read_write: return "readwrite";
    case param_effect::opaque: return "opaque";
    case param_effect::value: return "value";
  }
  return "?";
}

struct global_decl {
  std::string name;
  std::uint64_t size = 0;
  bool constant = false;
  std::optional<std::string> init;
  int line = 0;
};

struct extern_decl {
  std::string name;
  std::vector<param_effect> params;
  bool variadic = false;
  int line = 0;
};

struct operand {
  bool global = false;
  std::string name;

  friend bool operator==(const operand&, const operand&) = default;
};

inline std::string to_string(const operand& o) { return (o.global ? "@" : "%") + o.name; }

enum class opcode { alloca_, fieldaddr, select, heapalloc, constant, load, store, call_ext, call_local, loop, ret };

struct instruction {
  opcode op = opcode::ret;
  std::string result;             // empty when the instruction defines nothing
  std::vector<operand> operands;  // see the per-opcode notes below
  std::uint64_t imm = 0;          // alloca/heapalloc size, const value, field offset, access width, trip count
  bool dynamic_offset = false;    // fieldaddr with a value operand as offset
  bool pointer_access = false;    // load ptr / store ptr
  std::string callee;
  std::vector<std::string> sig;   // variadic type codes of call ext
  std::vector<instruction> body;  // loop
  int line = 0;
  std::size_t site = 0;           // dense call ext index in source order
};
// operands: fieldaddr {base[, offset]}, select {cond, a, b}, load {addr},
// store {addr, value}, call {args...}, ret {[value]}.

struct param {
  std::string name;
  bool pointer = false;
  std::optional<std::uint64_t> byval;
};

struct function {
  std::string name;
  std::vector<param> params;
  bool returns_pointer = false;
  std::vector<instruction> body;
  int line = 0;
};

struct module {
  std::vector<global_decl> globals;
  std::vector<extern_decl> externs;
  std::vector<function> functions;

  const global_decl* find_global(std::string_view n) const {
    for (const auto& g : globals)
      if (g.name == n) return &g;
    return nullptr;
  }
  const extern_decl* find_extern(std::string_view n) const {
    for (const auto& e : externs)
      if (e.name == n) return &e;
    return nullptr;
  }
  const function* find_function(std::string_view n) const {
    for (const auto& f : functions)
      if (f.name == n) return &f;
    return nullptr;
  }
};

namespace detail {

struct token {
  enum kind { ident, local, global, number, string, punct, end } k = end;
  std::string text;
  std::uint64_t value = 0;
  int col = 0;
};

class line_lexer {
 public:
  line_lexer(std::string_view line, int line_no) : line_no_(line_no) { lex(line); }

  const token& peek(std::size_t ahead = 0) const {
    return toks_[std::min(pos_ + ahead, toks_.size() - 1)];
  }
  token next() { return toks_[std::min(pos_++, toks_.size() - 1)]; }
  bool at_end() const { return peek().k == token::end; }

  [[noreturn]] void fail(const std::string& msg, const token& at) const {
    throw error(errc::parse, std::to_string(line_no_) + ":" + std::to_string(at.col) + ": " + msg);
  }
  [[noreturn]] void fail(const std::string& msg) const { fail(msg, peek()); }

  bool accept(std::string_view p) {
    if ((peek().k == token::punct || peek().k == token::ident) && peek().text == p) {
      ++pos_;
      return true;
    }
    return false;
  }
  void expect(std::string_view p) {
    if (!accept(p)) fail("expected '" + std::string(p) + "'");
  }
  std::string expect_ident() {
    if (peek().k != token::ident) fail("expected identifier");
    return next().text;
  }
  std::uint64_t expect_number() {
    if (peek().k != token::number) fail("expected number");
    return next().value;
  }
  std::string expect_local() {
    if (peek().k != token::local) fail("expected %value");
    return next().text;
  }
  operand expect_operand() {
    if (peek().k == token::local) return {false, next().text};
    if (peek().k == token::global) return {true, next().text};
    fail("expected %value or @global");
  }
  void expect_end() {
    if (!at_end()) fail("unexpected '" + peek().text + "'");
  }
  int line_no() const { return line_no_; }

 private:
  void lex(std::string_view s) {
    std::size_t i = 0;
    auto is_id = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.'; };
    while (i < s.size()) {
      char c = s[i];
      int col = static_cast<int>(i) + 1;
      if (c == '#') break;
      if (std::isspace(static_cast<unsigned char>(c))) {
        ++i;
        continue;
      }
      if (c == '%' || c == '@') {
        std::size_t j = i + 1;
        while (j < s.size() && is_id(s[j])) ++j;
        if (j == i + 1) fail_at(col, "empty name");
        toks_.push_back({c == '%' ? token::local : token::global, std::string(s.substr(i + 1, j - i - 1)), 0, col});
        i = j;
      } else if (std::isdigit(static_cast<unsigned char>(c))) {
        std::size_t j = i;
        int base = 10;
        if (c == '0' && i + 1 < s.size() && (s[i + 1] == 'x' || s[i + 1] == 'X')) {
          base = 16;
          j = i + 2;
        }
        std::uint64_t v = 0;
        auto [ptr, ec] = std::from_chars(s.data() + j, s.data() + s.size(), v, base);
        if (ec != std::errc{}) fail_at(col, "bad number");
        j = static_cast<std::size_t>(ptr - s.data());
        if (j < s.size() && is_id(s[j])) fail_at(col, "bad number");
        toks_.push_back({token::number, std::string(s.substr(i, j - i)), v, col});
        i = j;
      } else if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
        std::size_t j = i;
        while (j < s.size() && is_id(s[j])) ++j;
        toks_.push_back({token::ident, std::string(s.substr(i, j - i)), 0, col});
        i = j;
      } else if (c == '"') {
        std::string out;
        std::size_t j = i + 1;
        for (;; ++j) {
          if (j >= s.size()) fail_at(col, "unterminated string");
          if (s[j] == '"') break;
          if (s[j] == '\\') {
            if (++j >= s.size()) fail_at(col, "unterminated string");
            switch (s[j]) {
              case 'n': out += '\n'; break;
              case 't': out += '\t'; break;
              case '0': out += '\0'; break;
              case '\\': out += '\\'; break;
              case '"': out += '"'; break;
              default: fail_at(static_cast<int>(j) + 1, "bad escape");
            }
          } else {
            out += s[j];
          }
        }
        toks_.push_back({token::string, out, 0, col});
        i = j + 1;
      } else if (c == '-' && i + 1 < s.size() && s[i + 1] == '>') {
        toks_.push_back({token::punct, "->", 0, col});
        i += 2;
      } else if (std::string_view("=,()[]{}+:").find(c) != std::string_view::npos) {
        toks_.push_back({token::punct, std::string(1, c), 0, col});
        ++i;
      } else {
        fail_at(col, std::string("unexpected character '") + c + "'");
      }
    }
    toks_.push_back({token::end, "<end of line>", 0, static_cast<int>(s.size()) + 1});
  }

  [[noreturn]] void fail_at(int col, const std::string& msg) const {
    throw error(errc::parse, std::to_string(line_no_) + ":" + std::to_string(col) + ": " + msg);
  }

  int line_no_;
  std::vector<token> toks_;
  std::size_t pos_ = 0;
};

inline std::string escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '\0': out += "\\0"; break;
      case '\\': out += "\\\\"; break;
      case '"': out += "\\\""; break;
      default: out += c;
    }
  }
  return out;
}

class parser {
 public:
  explicit parser(std::string_view text) {
    std::size_t start = 0;
    while (start <= text.size()) {
      auto nl = text.find('\n', start);
      if (nl == std::string_view::npos) nl = text.size();
      lines_.push_back(text.substr(start, nl - start));
      start = nl + 1;
    }
  }

  module run() {
    module m;
    while (cur_ < lines_.size()) {
      line_lexer lx(lines_[cur_], static_cast<int>(cur_) + 1);
      ++cur_;
      if (lx.at_end()) continue;
      auto kw = lx.peek();
      if (kw.k != token::ident) lx.fail("expected 'global', 'extern' or 'func'");
      if (kw.text == "global")
        m.globals.push_back(parse_global(lx));
      else if (kw.text == "extern")
        m.externs.push_back(parse_extern(lx));
      else if (kw.text == "func")
        m.functions.push_back(parse_function(lx));
      else
        lx.fail("expected 'global', 'extern' or 'func'");
    }
    return m;
  }

 private:
  global_decl parse_global(line_lexer& lx) {
    global_decl g;
    g.line = lx.line_no();
    lx.next();
    if (lx.peek().k != token::global) lx.fail("expected @name");
    g.name = lx.next().text;
    bool has_size = false;
    while (!lx.at_end()) {
      auto key = lx.expect_ident();
      if (key == "size") {
        lx.expect("=");
        g.size = lx.expect_number();
        has_size = true;
      } else if (key == "const") {
        g.constant = true;
      } else if (key == "init") {
        lx.expect("=");
        if (lx.peek().k != token::string) lx.fail("expected string");
        g.init = lx.next().text;
      } else {
        lx.fail("unknown global attribute '" + key + "'");
      }
    }
    if (!has_size) {
      if (!g.init) lx.fail("global needs size=N");
      g.size = g.init->size() + 1;
    }
    if (g.size == 0) lx.fail("global size must be positive");
    if (g.init && g.init->size() > g.size) lx.fail("initializer larger than global");
    return g;
  }

  extern_decl parse_extern(line_lexer& lx) {
    extern_decl e;
    e.line = lx.line_no();
    lx.next();
    e.name = lx.expect_ident();
    lx.expect("(");
    bool first = true;
    while (!lx.accept(")")) {
      if (!first) lx.expect(",");
      first = false;
      auto key = lx.expect_ident();
      if (key == "variadic") {
        e.variadic = true;
      } else if (key == "params") {
        lx.expect("=");
        lx.expect("[");
        while (!lx.accept("]")) {
          auto tok = lx.peek();
          auto word = lx.expect_ident();
          if (word == "read")
            e.params.push_back(param_effect::read);
          else if (word == "write")
            e.params.push_back(param_effect::write);
          else if (word == "readwrite")
            e.params.push_back(param_effect::read_write);
          else if (word == "opaque")
            e.params.push_back(param_effect::opaque);
          else if (word == "value")
            e.params.push_back(param_effect::value);
          else
            lx.fail("unknown parameter effect '" + word + "'", tok);
        }
      } else {
        lx.fail("unknown extern attribute '" + key + "'");
      }
    }
    lx.expect_end();
    return e;
  }

  function parse_function(line_lexer& lx) {
    function f;
    f.line = lx.line_no();
    lx.next();
    f.name = lx.expect_ident();
    lx.expect("(");
    bool first = true;
    while (!lx.accept(")")) {
      if (!first) lx.expect(",");
      first = false;
      param p;
      p.name = lx.expect_local();
      if (lx.accept(":")) {
        auto ty = lx.expect_ident();
        if (ty == "ptr") {
          p.pointer = true;
        } else if (ty == "byval") {
          p.pointer = true;
          p.byval = lx.expect_number();
          if (*p.byval == 0) lx.fail("byval size must be positive");
        } else if (ty != "int") {
          lx.fail("unknown parameter type '" + ty + "'");
        }
      }
      f.params.push_back(std::move(p));
    }
    if (lx.accept("->")) {
      auto ty = lx.expect_ident();
      if (ty == "ptr")
        f.returns_pointer = true;
      else if (ty != "int")
        lx.fail("unknown return type '" + ty + "'");
    }
    lx.expect("{");
    lx.expect_end();
    f.body = parse_block(f.line);
    return f;
  }

  std::vector<instruction> parse_block(int opened_at) {
    std::vector<instruction> out;
    while (true) {
      if (cur_ >= lines_.size())
        throw error(errc::parse, std::to_string(opened_at) + ":1: unterminated block");
      line_lexer lx(lines_[cur_], static_cast<int>(cur_) + 1);
      ++cur_;
      if (lx.at_end()) continue;
      if (lx.accept("}")) {
        lx.expect_end();
        return out;
      }
      out.push_back(parse_instruction(lx));
    }
  }

  instruction parse_instruction(line_lexer& lx) {
    instruction in;
    in.line = lx.line_no();
    if (lx.peek().k == token::local && lx.peek(1).k == token::punct && lx.peek(1).text == "=") {
      in.result = lx.next().text;
      lx.next();
    }
    auto op_tok = lx.peek();
    auto op = lx.expect_ident();
    auto needs_result = [&](bool want) {
      if (want && in.result.empty()) lx.fail("'" + op + "' needs a result", op_tok);
      if (!want && !in.result.empty()) lx.fail("'" + op + "' defines no value", op_tok);
    };
    if (op == "alloca" || op == "heapalloc") {
      needs_result(true);
      in.op = op == "alloca" ? opcode::alloca_ : opcode::heapalloc;
      in.imm = lx.expect_number();
      if (in.imm == 0) lx.fail("allocation size must be positive");
    } else if (op == "fieldaddr") {
      needs_result(true);
      in.op = opcode::fieldaddr;
      in.operands.push_back(lx.expect_operand());
      lx.expect("+");
      if (lx.peek().k == token::number) {
        in.imm = lx.expect_number();
      } else {
        in.dynamic_offset = true;
        in.operands.push_back(lx.expect_operand());
      }
    } else if (op == "select") {
      needs_result(true);
      in.op = opcode::select;
      in.operands.push_back(lx.expect_operand());
      lx.expect(",");
      in.operands.push_back(lx.expect_operand());
      lx.expect(",");
      in.operands.push_back(lx.expect_operand());
    } else if (op == "const") {
      needs_result(true);
      in.op = opcode::constant;
      in.imm = lx.expect_number();
    } else if (op == "load") {
      needs_result(true);
      in.op = opcode::load;
      if (lx.accept("ptr")) {
        in.pointer_access = true;
        in.imm = 8;
        in.operands.push_back(lx.expect_operand());
      } else {
        in.operands.push_back(lx.expect_operand());
        in.imm = 8;
        if (lx.accept(",")) in.imm = lx.expect_number();
      }
    } else if (op == "store") {
      needs_result(false);
      in.op = opcode::store;
      in.pointer_access = lx.accept("ptr");
      in.operands.push_back(lx.expect_operand());
      lx.expect(",");
      in.operands.push_back(lx.expect_operand());
      in.imm = 8;
      if (!in.pointer_access && lx.accept(",")) in.imm = lx.expect_number();
    } else if (op == "call") {
      in.op = lx.accept("ext") ? opcode::call_ext : opcode::call_local;
      in.callee = lx.expect_ident();
      lx.expect("(");
      bool first = true;
      while (!lx.accept(")")) {
        if (!first) lx.expect(",");
        first = false;
        in.operands.push_back(lx.expect_operand());
      }
      if (in.op == opcode::call_ext && lx.accept("sig")) {
        lx.expect("(");
        bool first_code = true;
        while (!lx.accept(")")) {
          if (!first_code) lx.expect(",");
          first_code = false;
          auto tok = lx.peek();
          auto code = lx.expect_ident();
          if (!valid_type_code(code)) lx.fail("unknown type code '" + code + "'", tok);
          in.sig.push_back(code);
        }
      }
    } else if (op == "loop") {
      needs_result(false);
      in.op = opcode::loop;
      in.imm = lx.expect_number();
      lx.expect("{");
      lx.expect_end();
      in.body = parse_block(in.line);
      return in;
    } else if (op == "ret") {
      needs_result(false);
      in.op = opcode::ret;
      if (!lx.at_end()) in.operands.push_back(lx.expect_operand());
    } else {
      lx.fail("unknown instruction '" + op + "'", op_tok);
    }
    if (in.op == opcode::load || in.op == opcode::store) {
      if (in.imm != 1 && in.imm != 2 && in.imm != 4 && in.imm != 8) lx.fail("access width must be 1, 2, 4 or 8");
    }
    lx.expect_end();
    return in;
  }

  std::vector<std::string_view> lines_;
  std::size_t cur_ = 0;
};

// Name resolution, SSA and type checks.
class validator {
 public:
  explicit validator(module& m) : m_(m) {}

  void run() {
    std::set<std::string> seen;
    for (const auto& g : m_.globals)
      if (!seen.insert(g.name).second) fail(g.line, "duplicate global @" + g.name);
    seen.clear();
    for (const auto& e : m_.externs)
      if (!seen.insert(e.name).second) fail(e.line, "duplicate extern " + e.name);
    for (const auto& f : m_.functions) {
      if (!seen.insert(f.name).second) fail(f.line, "duplicate function " + f.name);
    }
    std::size_t site = 0;
    for (auto& f : m_.functions) {
      std::vector<std::map<std::string, bool>> scopes(1);
      std::set<std::string> defined;
      for (const auto& p : f.params) {
        if (!defined.insert(p.name).second) fail(f.line, "duplicate parameter %" + p.name);
        scopes.back()[p.name] = p.pointer;
      }
      check_block(f, f.body, scopes, defined, site);
    }
  }

 private:
  [[noreturn]] void fail(int line, const std::string& msg, errc code = errc::resolve) const {
    throw error(code, std::to_string(line) + ":1: " + msg);
  }

  bool type_of(const function& f, const instruction& in, const operand& o,
               const std::vector<std::map<std::string, bool>>& scopes) const {
    if (o.global) {
      if (!m_.find_global(o.name)) fail(in.line, "undefined global @" + o.name);
      return true;
    }
    for (auto it = scopes.rbegin(); it != scopes.rend(); ++it) {
      auto hit = it->find(o.name);
      if (hit != it->end()) return hit->second;
    }
    fail(in.line, "undefined value %" + o.name + " in " + f.name);
  }

  void check_block(const function& f, std::vector<instruction>& body, std::vector<std::map<std::string, bool>>& scopes,
                   std::set<std::string>& defined, std::size_t& site) {
    for (auto& in : body) {
      bool result_ptr = false;
      auto ty = [&](std::size_t i) { return type_of(f, in, in.operands.at(i), scopes); };
      switch (in.op) {
        case opcode::alloca_:
        case opcode::heapalloc: result_ptr = true; break;
        case opcode::constant: break;
        case opcode::fieldaddr:
          if (!ty(0)) fail(in.line, "fieldaddr base must be a pointer", errc::parse);
          if (in.dynamic_offset && ty(1)) fail(in.line, "fieldaddr offset must be an integer", errc::parse);
          result_ptr = true;
          break;
        case opcode::select: {
          if (ty(0)) fail(in.line, "select condition must be an integer", errc::parse);
          auto a = ty(1), b = ty(2);
          if (a != b) fail(in.line, "select operands disagree in type", errc::parse);
          result_ptr = a;
          break;
        }
        case opcode::load:
          if (!ty(0)) fail(in.line, "load address must be a pointer", errc::parse);
          result_ptr = in.pointer_access;
          break;
        case opcode::store:
          if (!ty(0)) fail(in.line, "store address must be a pointer", errc::parse);
          if (ty(1) != in.pointer_access) fail(in.line, "store value type mismatch", errc::parse);
          break;
        case opcode::call_ext: {
          const auto* e = m_.find_extern(in.callee);
          if (!e) fail(in.line, "undeclared callee " + in.callee);
          auto n = in.operands.size();
          if (n < e->params.size() || (!e->variadic && n != e->params.size()))
            fail(in.line, "wrong argument count for " + in.callee, errc::parse);
          auto n_var = n - e->params.size();
          if (!in.sig.empty() && !e->variadic) fail(in.line, "sig(...) on a non-variadic callee", errc::parse);
          if (n_var > 0 && in.sig.size() != n_var)
            fail(in.line, "variadic call needs sig(...) with one code per variadic argument", errc::parse);
          for (std::size_t i = 0; i < n; ++i) {
            bool ptr = ty(i);
            if (i >= e->params.size() && ptr != is_pointer_code(in.sig[i - e->params.size()]))
              fail(in.line, "sig code disagrees with argument " + std::to_string(i), errc::parse);
          }
          in.site = site++;
          break;
        }
        case opcode::call_local: {
          const auto* callee = m_.find_function(in.callee);
          if (!callee) fail(in.line, "undefined function " + in.callee);
          if (callee->params.size() != in.operands.size())
            fail(in.line, "wrong argument count for " + in.callee, errc::parse);
          for (std::size_t i = 0; i < in.operands.size(); ++i)
            if (ty(i) != callee->params[i].pointer)
              fail(in.line, "argument " + std::to_string(i) + " type mismatch for " + in.callee, errc::parse);
          result_ptr = callee->returns_pointer;
          break;
        }
        case opcode::loop:
          scopes.emplace_back();
          check_block(f, in.body, scopes, defined, site);
          scopes.pop_back();
          break;
        case opcode::ret:
          if (!in.operands.empty() && ty(0) != f.returns_pointer)
            fail(in.line, "return type mismatch", errc::parse);
          break;
      }
      if (!in.result.empty()) {
        if (!defined.insert(in.result).second) fail(in.line, "value %" + in.result + " defined twice", errc::parse);
        scopes.back()[in.result] = result_ptr;
      }
    }
  }

  module& m_;
};

inline void print_block(std::ostringstream& os, const std::vector<instruction>& body, int depth) {
  std::string pad(2 * depth, ' ');
  for (const auto& in : body) {
    os << pad;
    if (!in.result.empty()) os << '%' << in.result << " = ";
    switch (in.op) {
      case opcode::alloca_: os << "alloca " << in.imm; break;
      case opcode::heapalloc: os << "heapalloc " << in.imm; break;
      case opcode::constant: os << "const " << in.imm; break;
      case opcode::fieldaddr:
        os << "fieldaddr " << to_string(in.operands[0]) << " + ";
        if (in.dynamic_offset)
          os << to_string(in.operands[1]);
        else
          os << in.imm;
        break;
      case opcode::select:
        os << "select " << to_string(in.operands[0]) << ", " << to_string(in.operands[1]) << ", "
           << to_string(in.operands[2]);
        break;
      case opcode::load:
        if (in.pointer_access)
          os << "load ptr " << to_string(in.operands[0]);
        else
          os << "load " << to_string(in.operands[0]) << ", " << in.imm;
        break;
      case opcode::store:
        if (in.pointer_access)
          os << "store ptr " << to_string(in.operands[0]) << ", " << to_string(in.operands[1]);
        else
          os << "store " << to_string(in.operands[0]) << ", " << to_string(in.operands[1]) << ", " << in.imm;
        break;
      case opcode::call_ext:
      case opcode::call_local: {
        os << "call " << (in.op == opcode::call_ext ? "ext " : "") << in.callee << "(";
        for (std::size_t i = 0; i < in.operands.size(); ++i) os << (i ? ", " : "") << to_string(in.operands[i]);
        os << ")";
        if (!in.sig.empty()) {
          os << " sig(";
          for (std::size_t i = 0; i < in.sig.size(); ++i) os << (i ? ", " : "") << in.sig[i];
          os << ")";
        }
        break;
      }
      case opcode::loop:
        os << "loop " << in.imm << " {\n";
        print_block(os, in.body, depth + 1);
        os << pad << "}";
        break;
      case opcode::ret:
        os << "ret";
        if (!in.operands.empty()) os << " " << to_string(in.operands[0]);
        break;
    }
    os << "\n";
  }
}

}  // namespace detail

inline module parse(std::string_view text) {
  auto m = detail::parser(text).run();
  detail::validator(m).run();
  return m;
}

inline std::string print(const module& m) {
  std::ostringstream os;
  for (const auto& g : m.globals) {
    os << "global @" << g.name << " size=" << g.size;
    if (g.constant) os << " const";
    if (g.init) os << " init=\"" << detail::escape(*g.init) << "\"";
    os << "\n";
  }
  for (const auto& e : m.externs) {
    os << "extern " << e.name << "(params=[";
    for (std::size_t i = 0; i < e.params.size(); ++i) os << (i ? " " : "") << to_string(e.params[i]);
    os << "]" << (e.variadic ? ", variadic" : "") << ")\n";
  }
  for (const auto& f : m.functions) {
    os << "func " << f.name << "(";
    for (std::size_t i = 0; i < f.params.size(); ++i) {
      const auto& p = f.params[i];
      os << (i ? ", " : "") << '%' << p.name;
      if (p.byval)
        os << ": byval " << *p.byval;
      else if (p.pointer)
        os << ": ptr";
    }
    os << ")" << (f.returns_pointer ? " -> ptr" : "") << " {\n";
    detail::print_block(os, f.body, 1);
    os << "}\n";
  }
  return os.str();
}

}  // namespace gpufirst::ir
