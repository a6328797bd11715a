#pragma once

#include <cstdint>
#include <map>
#include <string>

namespace msw {

/// Multiply-accumulate tally, one MAC per scalar multiply inside matmul
/// and bmm forward passes, split by the phase label active at the time.
struct MacTally {
  std::map<std::string, std::uint64_t> by_phase;
  std::uint64_t total = 0;

  std::uint64_t phase(const std::string& name) const;
};

// Installs `tally` as the counting hook for the current thread. Scopes
// nest; the previous hook is restored on destruction.
class MacCountScope {
 public:
  explicit MacCountScope(MacTally& tally);
  ~MacCountScope();
  MacCountScope(const MacCountScope&) = delete;
  MacCountScope& operator=(const MacCountScope&) = delete;

 private:
  MacTally* previous_;
};

// Labels MACs recorded while alive. Unlabelled work goes to "other".
class MacPhase {
 public:
  explicit MacPhase(const char* name);
  ~MacPhase();
  MacPhase(const MacPhase&) = delete;
  MacPhase& operator=(const MacPhase&) = delete;

 private:
  const char* previous_;
};

namespace detail {
void record_macs(std::uint64_t count);
}

}  // namespace msw
