#include "msw/mac_counter.hpp"

#include "msw/errors.hpp"

namespace msw {
namespace {

thread_local MacTally* active_tally = nullptr;
thread_local const char* active_phase = "other";

void checked_add(std::uint64_t& target, std::uint64_t amount) {
  if (__builtin_add_overflow(target, amount, &target)) {
    throw NumericError("multiply-accumulate counter overflow");
  }
}

}  // namespace

std::uint64_t MacTally::phase(const std::string& name) const {
  auto it = by_phase.find(name);
  return it == by_phase.end() ? 0 : it->second;
}

MacCountScope::MacCountScope(MacTally& tally) : previous_(active_tally) {
  active_tally = &tally;
}

MacCountScope::~MacCountScope() { active_tally = previous_; }

MacPhase::MacPhase(const char* name) : previous_(active_phase) { active_phase = name; }

MacPhase::~MacPhase() { active_phase = previous_; }

namespace detail {

void record_macs(std::uint64_t count) {
  if (active_tally == nullptr) return;
  checked_add(active_tally->by_phase[active_phase], count);
  checked_add(active_tally->total, count);
}

}  // namespace detail
}  // namespace msw
