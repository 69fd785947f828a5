#pragma once

#include <charconv>
#include <cstdint>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include "gpufirst/error.hpp"
#include "gpufirst/sim_memory.hpp"

namespace gpufirst {

enum class allocator_kind { generic, balanced };

struct allocator_config {
  allocator_kind kind = allocator_kind::balanced;
  std::uint32_t n_thread_slots = 32;
  std::uint32_t m_team_slots = 16;
  std::uint32_t first_chunk_ratio = 4;
  sim_address heap_base{space_kind::device, 0};
  std::uint64_t heap_size = 0;
  std::uint64_t alignment = 16;
};

inline std::string to_string(const allocator_config& cfg) {
  if (cfg.kind == allocator_kind::generic) return "generic";
  return "balanced:" + std::to_string(cfg.n_thread_slots) + "," + std::to_string(cfg.m_team_slots) + "," +
         std::to_string(cfg.first_chunk_ratio);
}

// `generic` | `balanced:N,M[,ratio]`. Heap placement fields are left untouched.
inline allocator_config parse_allocator_config(std::string_view text, allocator_config base = {}) {
  auto fail = [&] { return error(errc::config, "bad allocator config '" + std::string(text) + "'"); };
  if (text == "generic") {
    base.kind = allocator_kind::generic;
    return base;
  }
  constexpr std::string_view prefix = "balanced:";
  if (!text.starts_with(prefix)) throw fail();
  std::vector<std::uint32_t> nums;
  auto rest = text.substr(prefix.size());
  while (true) {
    std::uint32_t v = 0;
    auto [ptr, ec] = std::from_chars(rest.data(), rest.data() + rest.size(), v);
    if (ec != std::errc{} || ptr == rest.data()) throw fail();
    nums.push_back(v);
    rest.remove_prefix(ptr - rest.data());
    if (rest.empty()) break;
    if (rest.front() != ',') throw fail();
    rest.remove_prefix(1);
  }
  if (nums.size() < 2 || nums.size() > 3) throw fail();
  if (nums[0] < 1 || nums[1] < 1 || (nums.size() == 3 && nums[2] < 1)) throw fail();
  base.kind = allocator_kind::balanced;
  base.n_thread_slots = nums[0];
  base.m_team_slots = nums[1];
  base.first_chunk_ratio = nums.size() == 3 ? nums[2] : 4;
  return base;
}

struct chunk_coord {
  std::uint32_t n = 0;
  std::uint32_t m = 0;
  friend bool operator==(const chunk_coord&, const chunk_coord&) = default;
};

inline chunk_coord chunk_index(std::uint64_t thread_id, std::uint64_t team_id, const allocator_config& cfg) {
  return {static_cast<std::uint32_t>(thread_id % cfg.n_thread_slots),
          static_cast<std::uint32_t>(team_id % cfg.m_team_slots)};
}

class heap_allocator {
 public:
  explicit heap_allocator(memory_space& space, const allocator_config& cfg) : space_(space), cfg_(cfg) {
    if (cfg.alignment == 0 || (cfg.alignment & (cfg.alignment - 1)) != 0)
      throw error(errc::config, "alignment must be a power of two");
    if (cfg.heap_base.space != space.kind()) throw error(errc::config, "heap base outside its space");
  }
  virtual ~heap_allocator() = default;

  virtual sim_address allocate(std::uint64_t thread_id, std::uint64_t team_id, std::uint64_t size) = 0;
  virtual void deallocate(sim_address addr) = 0;
  virtual std::optional<object_span> find_object(sim_address addr) const = 0;
  virtual std::vector<object_record> live_objects() const = 0;

  const allocator_config& config() const { return cfg_; }
  memory_space& space() const { return space_; }

  bool contains(sim_address a) const {
    return a.space == cfg_.heap_base.space && a.offset >= cfg_.heap_base.offset &&
           a.offset - cfg_.heap_base.offset < cfg_.heap_size;
  }

 protected:
  memory_space& space_;
  allocator_config cfg_;
};

// One heap, one lock, an allocation list and an address-ordered free list.
class generic_allocator final : public heap_allocator {
 public:
  generic_allocator(memory_space& space, const allocator_config& cfg) : heap_allocator(space, cfg) {
    auto start = align_up(cfg.heap_base.offset, cfg.alignment);
    auto end = cfg.heap_base.offset + cfg.heap_size;
    if (end > start) free_list_.push_back({start, align_down(end - start, cfg.alignment)});
  }

  sim_address allocate(std::uint64_t, std::uint64_t, std::uint64_t size) override {
    if (size == 0) throw error(errc::config, "allocation size must be positive");
    auto span = align_up(size, cfg_.alignment);
    std::lock_guard lock(mutex_);
    for (auto it = free_list_.begin(); it != free_list_.end(); ++it) {
      if (it->size < span) continue;
      auto base = it->offset;
      it->offset += span;
      it->size -= span;
      if (it->size == 0) free_list_.erase(it);
      allocated_.push_back({base, size, span});
      return {space_.kind(), base};
    }
    throw error(errc::out_of_memory, "generic heap cannot serve " + std::to_string(size) + " bytes");
  }

  void deallocate(sim_address addr) override {
    std::lock_guard lock(mutex_);
    auto it = allocated_.begin();
    for (; it != allocated_.end(); ++it)
      if (it->offset == addr.offset && addr.space == space_.kind()) break;
    if (it == allocated_.end()) throw error(errc::invalid_free, "not a live allocation " + to_string(addr));
    free_block freed{it->offset, it->span};
    allocated_.erase(it);

    auto pos = free_list_.begin();
    while (pos != free_list_.end() && pos->offset < freed.offset) ++pos;
    auto inserted = free_list_.insert(pos, freed);
    auto next = std::next(inserted);
    if (next != free_list_.end() && inserted->offset + inserted->size == next->offset) {
      inserted->size += next->size;
      free_list_.erase(next);
    }
    if (inserted != free_list_.begin()) {
      auto prev = std::prev(inserted);
      if (prev->offset + prev->size == inserted->offset) {
        prev->size += inserted->size;
        free_list_.erase(inserted);
      }
    }
  }

  std::optional<object_span> find_object(sim_address addr) const override {
    if (!contains(addr)) return std::nullopt;
    std::lock_guard lock(mutex_);
    for (const auto& b : allocated_)
      if (addr.offset >= b.offset && addr.offset < b.offset + b.user_size)
        return object_span{{space_.kind(), b.offset}, b.user_size, addr.offset - b.offset};
    return std::nullopt;
  }

  std::vector<object_record> live_objects() const override {
    std::lock_guard lock(mutex_);
    std::vector<object_record> out;
    for (const auto& b : allocated_) out.push_back({{space_.kind(), b.offset}, b.user_size, true, object_origin::heap});
    return out;
  }

 private:
  struct block {
    std::uint64_t offset;
    std::uint64_t user_size;
    std::uint64_t span;
  };
  struct free_block {
    std::uint64_t offset;
    std::uint64_t size;
  };

  mutable std::mutex mutex_;
  std::list<block> allocated_;
  std::list<free_block> free_list_;
};

// N x M independent chunks, each a bump region whose entries carry their own
// metadata in a 16-byte header directly below the user data:
//   [0,4)  user_size   [4,8)  capacity (user data start to entry end)
//   [8,12) prev header offset within the chunk   [12,16) flags
class balanced_allocator final : public heap_allocator {
 public:
  static constexpr std::uint64_t header_size = 16;
  static constexpr std::uint32_t flag_in_use = 1u << 0;
  static constexpr std::uint32_t flag_has_prev = 1u << 1;
  static constexpr std::uint32_t header_magic = 0x6f1a0000u;
  static constexpr std::uint32_t magic_mask = 0xffff0000u;

  struct entry_info {
    std::uint64_t header;  // chunk-relative
    std::uint64_t user;    // chunk-relative
    std::uint64_t user_size;
    std::uint64_t capacity;
    bool in_use;
  };

  balanced_allocator(memory_space& space, const allocator_config& cfg) : heap_allocator(space, cfg) {
    if (cfg.n_thread_slots < 1 || cfg.m_team_slots < 1 || cfg.first_chunk_ratio < 1)
      throw error(errc::config, "balanced allocator needs N, M, ratio >= 1");
    if (cfg.heap_base.offset % cfg.alignment != 0) throw error(errc::config, "heap base must be aligned");
    std::uint64_t units = std::uint64_t(cfg.n_thread_slots - 1 + cfg.first_chunk_ratio) * cfg.m_team_slots;
    unit_ = align_down(cfg.heap_size / units, cfg.alignment);
    if (unit_ < header_size + cfg.alignment) throw error(errc::config, "heap too small for " + to_string(cfg));
    if (unit_ > 0xffffffffull / cfg.first_chunk_ratio) throw error(errc::config, "chunk exceeds 32-bit offsets");
    group_ = unit_ * (cfg.n_thread_slots - 1 + cfg.first_chunk_ratio);
    chunks_.reserve(std::size_t(cfg.n_thread_slots) * cfg.m_team_slots);
    for (std::uint32_t m = 0; m < cfg.m_team_slots; ++m)
      for (std::uint32_t n = 0; n < cfg.n_thread_slots; ++n) chunks_.push_back(std::make_unique<chunk_state>());
  }

  std::uint64_t unit_size() const { return unit_; }

  std::uint64_t chunk_size(chunk_coord c) const {
    return c.n == 0 ? unit_ * cfg_.first_chunk_ratio : unit_;
  }

  sim_address chunk_base(chunk_coord c) const {
    auto off = std::uint64_t(c.m) * group_ + (c.n == 0 ? 0 : (cfg_.first_chunk_ratio + c.n - 1) * unit_);
    return cfg_.heap_base + off;
  }

  std::uint64_t chunk_bottom(chunk_coord) const { return 0; }

  std::uint64_t chunk_top(chunk_coord c) const {
    auto& st = state(c);
    std::lock_guard lock(st.mutex);
    return st.top;
  }

  // Entries from the top entry down to the bottom one, following prev links.
  std::vector<entry_info> chain(chunk_coord c) const {
    auto& st = state(c);
    std::lock_guard lock(st.mutex);
    std::vector<entry_info> out;
    walk(c, st, [&](const entry_info& e) {
      out.push_back(e);
      return false;
    });
    return out;
  }

  sim_address allocate(std::uint64_t thread_id, std::uint64_t team_id, std::uint64_t size) override {
    if (size == 0) throw error(errc::config, "allocation size must be positive");
    if (size > 0xffffffffull) throw error(errc::out_of_memory, "allocation exceeds chunk range");
    auto c = chunk_index(thread_id, team_id, cfg_);
    auto& st = state(c);
    auto base = chunk_base(c);
    auto limit = chunk_size(c);
    auto capacity = align_up(size, cfg_.alignment);

    std::lock_guard lock(st.mutex);
    auto header = align_up(st.top + header_size, cfg_.alignment) - header_size;
    if (header + header_size + capacity <= limit) {
      std::uint32_t flags = header_magic | flag_in_use;
      std::uint32_t prev = 0;
      if (st.top_header) {
        flags |= flag_has_prev;
        prev = static_cast<std::uint32_t>(*st.top_header);
      }
      write_header(base, header, static_cast<std::uint32_t>(size), static_cast<std::uint32_t>(capacity), prev, flags);
      st.top_header = header;
      st.top = header + header_size + capacity;
      return base + (header + header_size);
    }

    // Out of bump space: first fit among dead entries, top-down.
    std::optional<entry_info> hit;
    walk(c, st, [&](const entry_info& e) {
      if (!e.in_use && e.capacity >= capacity) {
        hit = e;
        return true;
      }
      return false;
    });
    if (!hit)
      throw error(errc::out_of_memory, "chunk (" + std::to_string(c.n) + "," + std::to_string(c.m) +
                                           ") cannot serve " + std::to_string(size) + " bytes");
    auto hdr = base + hit->header;
    space_.store<std::uint32_t>(hdr, static_cast<std::uint32_t>(size));
    space_.store<std::uint32_t>(hdr + 12, space_.load<std::uint32_t>(hdr + 12) | flag_in_use);
    return base + hit->user;
  }

  void deallocate(sim_address addr) override {
    auto c = locate(addr);
    if (!c) throw error(errc::invalid_free, "address outside heap " + to_string(addr));
    auto& st = state(*c);
    auto base = chunk_base(*c);
    auto rel = addr.offset - base.offset;

    std::lock_guard lock(st.mutex);
    std::optional<entry_info> hit;
    walk(*c, st, [&](const entry_info& e) {
      if (e.user == rel) {
        hit = e;
        return true;
      }
      return e.header < rel;
    });
    if (!hit || !hit->in_use) throw error(errc::invalid_free, "not a live allocation " + to_string(addr));
    auto hdr = base + hit->header;
    space_.store<std::uint32_t>(hdr + 12, space_.load<std::uint32_t>(hdr + 12) & ~flag_in_use);

    // Reclaim the top entry and any dead entries that become the new top.
    while (st.top_header) {
      auto h = read_header(base, *st.top_header);
      if (h.in_use) break;
      auto flags = space_.load<std::uint32_t>(base + *st.top_header + 12);
      if (flags & flag_has_prev) {
        auto prev = read_header(base, space_.load<std::uint32_t>(base + *st.top_header + 8));
        st.top = prev.user + prev.capacity;
        st.top_header = prev.header;
      } else {
        st.top = 0;
        st.top_header.reset();
      }
    }
  }

  std::optional<object_span> find_object(sim_address addr) const override {
    auto c = locate(addr);
    if (!c) return std::nullopt;
    auto& st = state(*c);
    auto base = chunk_base(*c);
    auto rel = addr.offset - base.offset;
    std::lock_guard lock(st.mutex);
    std::optional<object_span> out;
    walk(*c, st, [&](const entry_info& e) {
      if (rel >= e.user && rel < e.user + e.user_size) {
        if (e.in_use) out = object_span{base + e.user, e.user_size, rel - e.user};
        return true;
      }
      return e.header + header_size + e.capacity <= rel;
    });
    return out;
  }

  std::vector<object_record> live_objects() const override {
    std::vector<object_record> out;
    for (std::uint32_t m = 0; m < cfg_.m_team_slots; ++m)
      for (std::uint32_t n = 0; n < cfg_.n_thread_slots; ++n) {
        chunk_coord c{n, m};
        auto base = chunk_base(c);
        for (const auto& e : chain(c))
          if (e.in_use) out.push_back({base + e.user, e.user_size, true, object_origin::heap});
      }
    return out;
  }

  std::optional<chunk_coord> locate(sim_address addr) const {
    if (!contains(addr)) return std::nullopt;
    auto rel = addr.offset - cfg_.heap_base.offset;
    auto m = rel / group_;
    if (m >= cfg_.m_team_slots) return std::nullopt;
    auto in_group = rel % group_;
    auto first = unit_ * cfg_.first_chunk_ratio;
    std::uint32_t n = in_group < first ? 0 : static_cast<std::uint32_t>(1 + (in_group - first) / unit_);
    return chunk_coord{n, static_cast<std::uint32_t>(m)};
  }

 private:
  struct chunk_state {
    mutable std::mutex mutex;
    std::uint64_t top = 0;
    std::optional<std::uint64_t> top_header;
  };

  chunk_state& state(chunk_coord c) const { return *chunks_[std::size_t(c.m) * cfg_.n_thread_slots + c.n]; }

  void write_header(sim_address base, std::uint64_t header, std::uint32_t user_size, std::uint32_t capacity,
                    std::uint32_t prev, std::uint32_t flags) {
    std::byte raw[header_size];
    encode_le(user_size, raw);
    encode_le(capacity, raw + 4);
    encode_le(prev, raw + 8);
    encode_le(flags, raw + 12);
    space_.write_bytes(base + header, raw);
  }

  entry_info read_header(sim_address base, std::uint64_t header) const {
    std::byte raw[header_size];
    space_.read(base + header, raw);
    auto flags = decode_le<std::uint32_t>(raw + 12);
    if ((flags & magic_mask) != header_magic)
      throw error(errc::internal_inconsistency, "corrupt allocation header at " + to_string(base + header));
    return {header, header + header_size, decode_le<std::uint32_t>(raw), decode_le<std::uint32_t>(raw + 4),
            (flags & flag_in_use) != 0};
  }

  // Visits entries top-down until `visit` returns true. Caller holds the lock.
  template <typename Visit>
  void walk(chunk_coord c, const chunk_state& st, Visit&& visit) const {
    auto base = chunk_base(c);
    auto cur = st.top_header;
    while (cur) {
      auto e = read_header(base, *cur);
      if (visit(e)) return;
      auto flags = space_.load<std::uint32_t>(base + *cur + 12);
      if (!(flags & flag_has_prev)) return;
      cur = space_.load<std::uint32_t>(base + *cur + 8);
    }
  }

  std::uint64_t unit_ = 0;
  std::uint64_t group_ = 0;
  std::vector<std::unique_ptr<chunk_state>> chunks_;
};

inline std::unique_ptr<heap_allocator> make_allocator(memory_space& space, const allocator_config& cfg) {
  if (cfg.kind == allocator_kind::generic) return std::make_unique<generic_allocator>(space, cfg);
  return std::make_unique<balanced_allocator>(space, cfg);
}

// Answers "which object does this address point into" for the device space:
// heap records first, then static objects, then live stack frames.
class object_registry {
 public:
  object_registry(memory_space& space, const heap_allocator* heap = nullptr) : space_(space), heap_(heap) {}

  void set_heap(const heap_allocator* heap) { heap_ = heap; }

  void register_stack(sim_address base, std::uint64_t size) {
    std::unique_lock lock(mutex_);
    stack_[base.offset] = size;
  }

  void unregister_stack(sim_address base) {
    std::unique_lock lock(mutex_);
    stack_.erase(base.offset);
  }

  std::optional<object_span> find_object(sim_address addr) const {
    if (addr.space != space_.kind()) return std::nullopt;
    if (heap_ && heap_->contains(addr)) return heap_->find_object(addr);
    if (auto s = space_.find_static(addr)) return s;
    std::shared_lock lock(mutex_);
    auto it = stack_.upper_bound(addr.offset);
    if (it == stack_.begin()) return std::nullopt;
    --it;
    if (addr.offset >= it->first + it->second) return std::nullopt;
    return object_span{{space_.kind(), it->first}, it->second, addr.offset - it->first};
  }

 private:
  memory_space& space_;
  const heap_allocator* heap_;
  mutable std::shared_mutex mutex_;
  std::map<std::uint64_t, std::uint64_t> stack_;
};

}  // namespace gpufirst
