#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace gpufirst {

enum class errc {
  out_of_memory,
  fault,
  constness_violation,
  translation_miss,
  invalid_free,
  mangling,
  payload_overflow,
  dispatch,
  internal_inconsistency,
  parse,
  resolve,
  launch_rejected,
  timeout,
  config,
};

inline std::string_view to_string(errc code) {
  switch (code) {
    case errc::out_of_memory: return "out-of-memory";
    case errc::fault: return "fault";
    case errc::constness_violation: return "constness-violation";
    case errc::translation_miss: return "translation-miss";
    case errc::invalid_free: return "invalid-free";
    case errc::mangling: return "mangling";
    case errc::payload_overflow: return "payload-overflow";
    case errc::dispatch: return "dispatch";
    case errc::internal_inconsistency: return "internal-inconsistency";
    case errc::parse: return "parse";
    case errc::resolve: return "resolve";
    case errc::launch_rejected: return "launch-rejected";
    case errc::timeout: return "timeout";
    case errc::config: return "config";
  }
  return "unknown";
}

// Every recoverable simulator failure is reported through this type; a
// simulated segfault is an `errc::fault`, never a crash of the process.
class error : public std::runtime_error {
 public:
  error(errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code), detail_(what) {}

  errc code() const noexcept { return code_; }
  // The message without the code prefix, for re-wrapping with more context.
  const std::string& detail() const noexcept { return detail_; }

 private:
  errc code_;
  std::string detail_;
};

}  // namespace gpufirst
