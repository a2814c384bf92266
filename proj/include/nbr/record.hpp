#pragma once

#include <atomic>
#include <cstdint>
#include <string>

#include "nbr/errors.hpp"

namespace nbr {

/// Five-state record lifecycle. Transitions are strictly forward, one
/// state at a time: allocated -> reachable -> unlinked -> safe -> reclaimed.
enum class Lifecycle : std::uint8_t {
  allocated = 0,  // obtained from the heap, not yet linked
  reachable = 1,  // reachable from the structure root
  unlinked = 2,   // not reachable, but threads may still hold references
  safe = 3,       // unlinked and provably reference-free
  reclaimed = 4,  // handed back to the allocator
};

inline const char* to_string(Lifecycle s) {
  switch (s) {
    case Lifecycle::allocated: return "allocated";
    case Lifecycle::reachable: return "reachable";
    case Lifecycle::unlinked:  return "unlinked";
    case Lifecycle::safe:      return "safe";
    case Lifecycle::reclaimed: return "reclaimed";
  }
  return "?";
}

/// Magic word stamped into every live record header. The quarantine
/// allocator overwrites it when a record is reclaimed, so a guarded
/// access can tell live records from freed ones.
inline constexpr std::uint64_t kLiveMagic = 0x4c49564552454331ull;  // "LIVEREC1"
inline constexpr std::uint64_t kPoisonMagic = 0xdeadbeefdeadbeefull;

/// Common header for every shared record managed by a reclaimer.
/// Carries identity and lifecycle state only; no per-scheme metadata
/// (no birth/retire epochs) lives here.
struct RecordBase {
  std::uint64_t magic = kLiveMagic;
  std::uint64_t id = 0;
  std::atomic<std::uint8_t> state{static_cast<std::uint8_t>(Lifecycle::allocated)};
  std::uint32_t payload_size = 0;

  Lifecycle lifecycle() const {
    return static_cast<Lifecycle>(state.load(std::memory_order_acquire));
  }
  bool poisoned() const { return magic != kLiveMagic; }
};

/// Advances a record one lifecycle state forward. Throws
/// illegal_lifecycle_transition on a skip or a backward move; a
/// reachable->safe attempt, for instance, indicates a retire-before-unlink
/// bug in the data structure.
inline void lifecycle_advance(RecordBase& rec, Lifecycle to) {
  auto cur = rec.state.load(std::memory_order_acquire);
  auto want = static_cast<std::uint8_t>(to);
  if (want != cur + 1) {
    throw illegal_lifecycle_transition(
        std::string("illegal lifecycle transition ") +
        to_string(static_cast<Lifecycle>(cur)) + " -> " + to_string(to) +
        " (record " + std::to_string(rec.id) + ")");
  }
  rec.state.store(want, std::memory_order_release);
}

inline std::uint64_t next_record_id() {
  static std::atomic<std::uint64_t> counter{0};
  return counter.fetch_add(1, std::memory_order_relaxed) + 1;
}

}  // namespace nbr
