#pragma once

#include <algorithm>
#include <atomic>
#include <bit>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "gpufirst/error.hpp"

namespace gpufirst {

enum class space_kind : std::uint8_t { device = 1, host = 2, shared = 3 };

inline std::string_view to_string(space_kind k) {
  switch (k) {
    case space_kind::device: return "device";
    case space_kind::host: return "host";
    case space_kind::shared: return "shared";
  }
  return "?";
}

// A pointer of the simulated program. Device and host addresses never
// compare equal because the space is part of the value.
struct sim_address {
  space_kind space = space_kind::device;
  std::uint64_t offset = 0;

  friend constexpr auto operator<=>(const sim_address&, const sim_address&) = default;

  constexpr sim_address operator+(std::uint64_t delta) const { return {space, offset + delta}; }

  // Pointers travel through simulated memory and RPC value slots as 8 bytes:
  // the space tag lives in the top byte, 0 is the null pointer.
  static constexpr unsigned tag_shift = 56;
  static constexpr std::uint64_t offset_mask = (std::uint64_t{1} << tag_shift) - 1;

  constexpr std::uint64_t encode() const {
    return (static_cast<std::uint64_t>(space) << tag_shift) | (offset & offset_mask);
  }

  static constexpr std::optional<sim_address> decode(std::uint64_t raw) {
    auto tag = raw >> tag_shift;
    if (tag < 1 || tag > 3) return std::nullopt;
    return sim_address{static_cast<space_kind>(tag), raw & offset_mask};
  }
};

inline std::string to_string(const sim_address& a) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "(%s,0x%llx)", std::string(to_string(a.space)).c_str(),
                static_cast<unsigned long long>(a.offset));
  return buf;
}

constexpr std::uint64_t align_up(std::uint64_t v, std::uint64_t a) { return (v + a - 1) / a * a; }
constexpr std::uint64_t align_down(std::uint64_t v, std::uint64_t a) { return v / a * a; }

enum class object_origin { heap, static_object, stack };

struct object_record {
  sim_address base;
  std::uint64_t size = 0;
  bool live = true;
  object_origin origin = object_origin::heap;
  bool constant = false;
};

// Result of an interior-address lookup.
struct object_span {
  sim_address base;
  std::uint64_t size = 0;
  std::uint64_t offset = 0;
  bool constant = false;

  friend bool operator==(const object_span&, const object_span&) = default;
};

// Record layout model: declared field order, natural alignment, size rounded
// up to the largest member alignment.
struct record_layout {
  std::vector<std::uint64_t> offsets;
  std::uint64_t size = 0;
  std::uint64_t alignment = 1;
};

inline record_layout layout_record(std::span<const std::uint64_t> field_sizes) {
  record_layout out;
  std::uint64_t cursor = 0;
  for (auto sz : field_sizes) {
    auto a = std::max<std::uint64_t>(1, sz);
    cursor = align_up(cursor, a);
    out.offsets.push_back(cursor);
    cursor += sz;
    out.alignment = std::max(out.alignment, a);
  }
  out.size = align_up(cursor, out.alignment);
  return out;
}

template <typename T>
  requires std::is_trivially_copyable_v<T>
void encode_le(T value, std::byte* out) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
            std::conditional_t<sizeof(T) == 4, std::uint32_t,
            std::conditional_t<sizeof(T) == 2, std::uint16_t, std::uint8_t>>>;
  static_assert(sizeof(U) == sizeof(T));
  auto bits = std::bit_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) out[i] = static_cast<std::byte>((bits >> (8 * i)) & 0xff);
}

template <typename T>
  requires std::is_trivially_copyable_v<T>
T decode_le(const std::byte* in) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
            std::conditional_t<sizeof(T) == 4, std::uint32_t,
            std::conditional_t<sizeof(T) == 2, std::uint16_t, std::uint8_t>>>;
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<U>(std::to_integer<U>(in[i])) << (8 * i);
  return std::bit_cast<T>(bits);
}

inline std::vector<std::byte> to_bytes(std::string_view s, bool nul_terminate = true) {
  std::vector<std::byte> out(s.size() + (nul_terminate ? 1 : 0));
  std::memcpy(out.data(), s.data(), s.size());
  return out;
}

// One byte-addressable arena. Static objects grow upward from offset 0,
// reserved regions (heap, stacks, mailbox) are carved downward from the end.
class memory_space {
 public:
  static constexpr std::uint64_t static_alignment = 16;

  memory_space(space_kind kind, std::uint64_t capacity)
      : kind_(kind), capacity_(capacity), words_((capacity + 7) / 8), low_cursor_(0), high_cursor_(capacity) {}

  memory_space(const memory_space&) = delete;
  memory_space& operator=(const memory_space&) = delete;

  space_kind kind() const { return kind_; }
  std::uint64_t capacity() const { return capacity_; }

  sim_address place_static(std::span<const std::byte> bytes, bool constant) {
    sim_address base;
    {
      std::unique_lock lock(registry_mutex_);
      auto start = align_up(low_cursor_, static_alignment);
      auto size = std::max<std::uint64_t>(bytes.size(), 1);
      if (start > high_cursor_ || size > high_cursor_ - start)
        throw error(errc::out_of_memory, "static placement of " + std::to_string(bytes.size()) + " bytes in " +
                                             std::string(to_string(kind_)) + " space");
      low_cursor_ = start + size;
      static_end_.store(low_cursor_, std::memory_order_release);
      base = {kind_, start};
      std::memcpy(data() + start, bytes.data(), bytes.size());
      statics_.emplace(start, object_record{base, size, true, object_origin::static_object, constant});
    }
    return base;
  }

  sim_address reserve_region(std::uint64_t size, std::uint64_t alignment = static_alignment) {
    std::unique_lock lock(registry_mutex_);
    if (size > high_cursor_) throw error(errc::out_of_memory, "region reservation");
    auto start = align_down(high_cursor_ - size, alignment);
    if (start < low_cursor_) throw error(errc::out_of_memory, "region reservation");
    high_cursor_ = start;
    return {kind_, start};
  }

  void read(sim_address addr, std::span<std::byte> out) const {
    check(addr, out.size());
    std::memcpy(out.data(), data() + addr.offset, out.size());
  }

  std::vector<std::byte> read_bytes(sim_address addr, std::uint64_t len) const {
    std::vector<std::byte> out(len);
    read(addr, out);
    return out;
  }

  void write_bytes(sim_address addr, std::span<const std::byte> bytes) {
    check(addr, bytes.size());
    check_writable(addr, bytes.size());
    std::memcpy(data() + addr.offset, bytes.data(), bytes.size());
  }

  void fill(sim_address addr, std::uint64_t len, std::byte value) {
    check(addr, len);
    check_writable(addr, len);
    std::memset(data() + addr.offset, std::to_integer<int>(value), len);
  }

  template <typename T>
  T load(sim_address addr) const {
    check(addr, sizeof(T));
    return decode_le<T>(data() + addr.offset);
  }

  template <typename T>
  void store(sim_address addr, T value) {
    check(addr, sizeof(T));
    check_writable(addr, sizeof(T));
    encode_le(value, data() + addr.offset);
  }

  // Atomic cells for flags and counters shared between agents.
  std::atomic_ref<std::uint32_t> cell32(sim_address addr) {
    check(addr, 4);
    if (addr.offset % 4 != 0) throw error(errc::fault, "misaligned atomic cell " + to_string(addr));
    return std::atomic_ref<std::uint32_t>(*reinterpret_cast<std::uint32_t*>(data() + addr.offset));
  }

  std::atomic_ref<std::uint64_t> cell64(sim_address addr) {
    check(addr, 8);
    if (addr.offset % 8 != 0) throw error(errc::fault, "misaligned atomic cell " + to_string(addr));
    return std::atomic_ref<std::uint64_t>(*reinterpret_cast<std::uint64_t*>(data() + addr.offset));
  }

  std::optional<object_span> find_static(sim_address addr) const {
    if (addr.space != kind_) return std::nullopt;
    std::shared_lock lock(registry_mutex_);
    auto it = statics_.upper_bound(addr.offset);
    if (it == statics_.begin()) return std::nullopt;
    --it;
    const auto& rec = it->second;
    if (addr.offset >= rec.base.offset + rec.size) return std::nullopt;
    return object_span{rec.base, rec.size, addr.offset - rec.base.offset, rec.constant};
  }

  std::vector<object_record> static_objects() const {
    std::shared_lock lock(registry_mutex_);
    std::vector<object_record> out;
    for (const auto& [_, rec] : statics_) out.push_back(rec);
    return out;
  }

 private:
  std::byte* data() { return reinterpret_cast<std::byte*>(words_.data()); }
  const std::byte* data() const { return reinterpret_cast<const std::byte*>(words_.data()); }

  void check(sim_address addr, std::uint64_t len) const {
    if (addr.space != kind_)
      throw error(errc::fault, "address " + to_string(addr) + " used in " + std::string(to_string(kind_)) + " space");
    if (addr.offset >= capacity_ || len > capacity_ - addr.offset)
      throw error(errc::fault, "access of " + std::to_string(len) + " bytes at " + to_string(addr));
  }

  void check_writable(sim_address addr, std::uint64_t len) const {
    if (addr.offset >= static_end_.load(std::memory_order_acquire)) return;
    std::shared_lock lock(registry_mutex_);
    auto it = statics_.upper_bound(addr.offset + len - (len ? 1 : 0));
    while (it != statics_.begin()) {
      --it;
      const auto& rec = it->second;
      if (rec.base.offset + rec.size <= addr.offset) break;
      if (rec.constant && len > 0)
        throw error(errc::constness_violation, "write to constant object at " + to_string(rec.base));
    }
  }

  space_kind kind_;
  std::uint64_t capacity_;
  std::vector<std::uint64_t> words_;

  mutable std::shared_mutex registry_mutex_;
  std::uint64_t low_cursor_;
  std::uint64_t high_cursor_;
  std::atomic<std::uint64_t> static_end_{0};
  std::map<std::uint64_t, object_record> statics_;
};

struct memory_config {
  std::uint64_t device_capacity = 64ull << 20;
  std::uint64_t host_capacity = 64ull << 20;
  std::uint64_t shared_capacity = 64ull << 10;
};

// The device/host pair plus the shared mailbox region.
class sim_memory {
 public:
  explicit sim_memory(const memory_config& cfg = {})
      : device_(space_kind::device, cfg.device_capacity),
        host_(space_kind::host, cfg.host_capacity),
        shared_(space_kind::shared, cfg.shared_capacity) {}

  memory_space& space(space_kind k) {
    switch (k) {
      case space_kind::device: return device_;
      case space_kind::host: return host_;
      case space_kind::shared: return shared_;
    }
    throw error(errc::fault, "bad space");
  }
  const memory_space& space(space_kind k) const { return const_cast<sim_memory*>(this)->space(k); }

  memory_space& device() { return device_; }
  memory_space& host() { return host_; }
  memory_space& shared() { return shared_; }

  std::vector<std::byte> read_bytes(sim_address a, std::uint64_t len) const { return space(a.space).read_bytes(a, len); }
  void write_bytes(sim_address a, std::span<const std::byte> bytes) { space(a.space).write_bytes(a, bytes); }

  template <typename T>
  T load(sim_address a) const { return space(a.space).template load<T>(a); }
  template <typename T>
  void store(sim_address a, T v) { space(a.space).store(a, v); }

  void copy(sim_address dst, sim_address src, std::uint64_t len) {
    if (len == 0) return;
    auto tmp = read_bytes(src, len);
    write_bytes(dst, tmp);
  }

 private:
  memory_space device_;
  memory_space host_;
  memory_space shared_;
};

struct translation {
  sim_address source_base;
  sim_address dest_base;
  std::uint64_t length = 0;
};

// Maps an address inside a source object to the same offset in its copy.
inline sim_address translate(sim_address addr, const translation& t) {
  if (addr.space != t.source_base.space || addr.offset < t.source_base.offset ||
      addr.offset - t.source_base.offset >= t.length)
    throw error(errc::translation_miss, to_string(addr) + " outside source range");
  return t.dest_base + (addr.offset - t.source_base.offset);
}

}  // namespace gpufirst
