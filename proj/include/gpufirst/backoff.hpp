#pragma once

#include <chrono>
#include <cstdint>
#include <thread>

namespace gpufirst {

inline std::uint64_t now_ns() {
  return static_cast<std::uint64_t>(
      std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now().time_since_epoch())
          .count());
}

// Bounded polling back-off: a few spins, then yields, then short sleeps.
class backoff {
 public:
  void pause() {
    if (rounds_ < spin_rounds) {
      ++rounds_;
    } else if (rounds_ < spin_rounds + yield_rounds) {
      ++rounds_;
      std::this_thread::yield();
    } else {
      std::this_thread::sleep_for(std::chrono::microseconds(sleep_us_));
      if (sleep_us_ < max_sleep_us) sleep_us_ *= 2;
    }
  }

  void reset() {
    rounds_ = 0;
    sleep_us_ = 1;
  }

 private:
  static constexpr unsigned spin_rounds = 16;
  static constexpr unsigned yield_rounds = 64;
  static constexpr unsigned max_sleep_us = 64;
  unsigned rounds_ = 0;
  unsigned sleep_us_ = 1;
};

// Deadline for blocking waits; expiry is reported as a structured deadlock.
class watchdog {
 public:
  explicit watchdog(std::chrono::milliseconds limit) : deadline_(std::chrono::steady_clock::now() + limit) {}
  bool expired() const { return std::chrono::steady_clock::now() >= deadline_; }

 private:
  std::chrono::steady_clock::time_point deadline_;
};

}  // namespace gpufirst
