#pragma once

#include <bit>
#include <cctype>
#include <chrono>
#include <cstdio>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "gpufirst/error.hpp"
#include "gpufirst/plan.hpp"
#include "gpufirst/rpc.hpp"
#include "gpufirst/sim_memory.hpp"

namespace gpufirst {

// A FILE lives in host memory as [u64 size][u64 cursor][u64 capacity][u64 0]
// followed by its data. The device only ever holds its address, as an
// opaque value.
struct host_file {
  static constexpr std::uint64_t header = 32;

  static sim_address create(memory_space& host, std::string_view content, std::uint64_t capacity = 0) {
    capacity = std::max<std::uint64_t>({capacity, content.size(), 1});
    auto base = host.reserve_region(header + capacity, 16);
    host.store<std::uint64_t>(base, content.size());
    host.store<std::uint64_t>(base + 8, 0);
    host.store<std::uint64_t>(base + 16, capacity);
    host.store<std::uint64_t>(base + 24, 0);
    if (!content.empty()) host.write_bytes(base + header, to_bytes(content, false));
    return base;
  }

  static std::string remaining(const sim_memory& mem, sim_address f) {
    auto size = mem.load<std::uint64_t>(f);
    auto cursor = mem.load<std::uint64_t>(f + 8);
    if (cursor >= size) return {};
    auto raw = mem.read_bytes(f + header + cursor, size - cursor);
    return {reinterpret_cast<const char*>(raw.data()), raw.size()};
  }

  static void advance(sim_memory& mem, sim_address f, std::uint64_t n) {
    mem.store<std::uint64_t>(f + 8, mem.load<std::uint64_t>(f + 8) + n);
  }

  static std::string contents(const sim_memory& mem, sim_address f) {
    auto size = mem.load<std::uint64_t>(f);
    if (size == 0) return {};
    auto raw = mem.read_bytes(f + header, size);
    return {reinterpret_cast<const char*>(raw.data()), raw.size()};
  }

  // Appends at the end, truncating at capacity.
  static void append(sim_memory& mem, sim_address f, std::string_view text) {
    auto size = mem.load<std::uint64_t>(f);
    auto cap = mem.load<std::uint64_t>(f + 16);
    auto n = std::min<std::uint64_t>(text.size(), cap - size);
    if (n == 0) return;
    mem.write_bytes(f + header + size, to_bytes(text.substr(0, n), false));
    mem.store<std::uint64_t>(f, size + n);
  }
};

inline std::string read_cstring(const sim_memory& mem, sim_address a, std::uint64_t limit = 1 << 16) {
  std::string out;
  for (std::uint64_t i = 0; i < limit; ++i) {
    auto c = mem.load<std::uint8_t>(a + i);
    if (c == 0) return out;
    out.push_back(char(c));
  }
  throw error(errc::fault, "unterminated string at " + to_string(a));
}

// Minimal scanf family over a host file: %d %ld %f %lf %s, whitespace in the
// format skips input whitespace. Returns the number of assigned conversions,
// or -1 when input ends before the first one.
inline std::int64_t host_fscanf(sim_memory& mem, sim_address file, std::string_view fmt,
                                std::span<const sim_address> outs) {
  auto text = host_file::remaining(mem, file);
  const char* begin = text.c_str();
  const char* cur = begin;
  std::int64_t assigned = 0;
  std::size_t next = 0;
  auto skip_ws = [&] {
    while (*cur && std::isspace(static_cast<unsigned char>(*cur))) ++cur;
  };
  auto finish = [&](std::int64_t r) {
    host_file::advance(mem, file, std::uint64_t(cur - begin));
    return r;
  };
  for (std::size_t i = 0; i < fmt.size(); ++i) {
    char c = fmt[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      skip_ws();
      continue;
    }
    if (c != '%') {
      if (*cur != c) return finish(assigned);
      ++cur;
      continue;
    }
    bool wide = false;
    if (i + 1 < fmt.size() && fmt[i + 1] == 'l') {
      wide = true;
      ++i;
    }
    if (i + 1 >= fmt.size()) throw error(errc::fault, "truncated conversion in format");
    char conv = fmt[++i];
    skip_ws();
    if (!*cur) return finish(assigned == 0 ? -1 : assigned);
    if (next >= outs.size()) throw error(errc::fault, "format has more conversions than arguments");
    auto dst = outs[next++];
    char* end = nullptr;
    switch (conv) {
      case 'd': {
        auto v = std::strtol(cur, &end, 10);
        if (end == cur) return finish(assigned);
        if (wide) mem.store<std::int64_t>(dst, v);
        else mem.store<std::int32_t>(dst, std::int32_t(v));
        break;
      }
      case 'f': {
        if (wide) {
          auto v = std::strtod(cur, &end);
          if (end == cur) return finish(assigned);
          mem.store<double>(dst, v);
        } else {
          auto v = std::strtof(cur, &end);
          if (end == cur) return finish(assigned);
          mem.store<float>(dst, v);
        }
        break;
      }
      case 's': {
        end = const_cast<char*>(cur);
        while (*end && !std::isspace(static_cast<unsigned char>(*end))) ++end;
        mem.write_bytes(dst, to_bytes(std::string_view(cur, std::size_t(end - cur)), true));
        break;
      }
      default: throw error(errc::fault, std::string("unsupported conversion %") + conv);
    }
    cur = end;
    ++assigned;
  }
  return finish(assigned);
}

// Minimal printf family: %d %ld %f %s %c %%. Integer and character
// arguments are value words, %s reads a string through its pointer and %f
// takes the bit pattern of a double.
inline std::string host_format(const sim_memory& mem, std::string_view fmt, std::span<const std::uint64_t> words) {
  std::string out;
  std::size_t next = 0;
  auto arg = [&] {
    if (next >= words.size()) throw error(errc::fault, "format has more conversions than arguments");
    return words[next++];
  };
  char buf[64];
  for (std::size_t i = 0; i < fmt.size(); ++i) {
    if (fmt[i] != '%') {
      out.push_back(fmt[i]);
      continue;
    }
    bool wide = i + 1 < fmt.size() && fmt[i + 1] == 'l';
    if (wide) ++i;
    if (i + 1 >= fmt.size()) throw error(errc::fault, "truncated conversion in format");
    switch (char conv = fmt[++i]) {
      case '%': out.push_back('%'); break;
      case 'd':
        std::snprintf(buf, sizeof buf, "%lld", wide ? (long long)std::int64_t(arg()) : (long long)std::int32_t(arg()));
        out += buf;
        break;
      case 'c': out.push_back(char(arg())); break;
      case 'f':
        std::snprintf(buf, sizeof buf, "%f", std::bit_cast<double>(arg()));
        out += buf;
        break;
      case 's': {
        auto a = sim_address::decode(arg());
        if (!a) throw error(errc::fault, "%s argument is not a pointer");
        out += read_cstring(mem, *a);
        break;
      }
      default: throw error(errc::fault, std::string("unsupported conversion %") + conv);
    }
  }
  return out;
}

// Landing pad bodies. Argument 0 is the FILE handle, 1 the format string,
// the rest are the variadic arguments.
inline landing_handler fscanf_pad() {
  return [](landing_context& ctx) -> std::uint64_t {
    auto file = ctx.pointer(0);
    auto fmt = read_cstring(ctx.memory, ctx.pointer(1));
    std::vector<sim_address> outs;
    for (std::size_t i = 2; i < ctx.size(); ++i) outs.push_back(ctx.pointer(i));
    return std::uint64_t(host_fscanf(ctx.memory, file, fmt, outs));
  };
}

inline landing_handler fprintf_pad(std::chrono::nanoseconds delay = {}) {
  return [delay](landing_context& ctx) -> std::uint64_t {
    auto file = ctx.pointer(0);
    auto fmt = read_cstring(ctx.memory, ctx.pointer(1));
    auto text = host_format(ctx.memory, fmt, ctx.args.subspan(2));
    host_file::append(ctx.memory, file, text);
    if (delay.count() > 0) std::this_thread::sleep_for(delay);
    return text.size();
  };
}

// Registers a landing pad for every distinct pad of the plans whose callee
// the host library implements.
inline std::size_t register_host_pads(rpc_channel& ch, const std::vector<lowering_plan>& plans,
                                      std::chrono::nanoseconds fprintf_delay = {}) {
  std::size_t n = 0;
  for (const auto& p : plans) {
    if (ch.pad_name(p.callee_id)) continue;
    landing_handler h;
    if (p.callee == "fscanf") h = fscanf_pad();
    else if (p.callee == "fprintf") h = fprintf_pad(fprintf_delay);
    else continue;
    ch.register_pad({p.landing_pad, p.callee_id, std::move(h), {}});
    ++n;
  }
  return n;
}

}  // namespace gpufirst
