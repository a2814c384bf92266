#pragma once

#include <atomic>
#include <csetjmp>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <pthread.h>
#include <string>
#include <vector>

#include "nbr/errors.hpp"
#include "nbr/record.hpp"

namespace nbr {

/// Per-thread execution phase. An operation runs
/// quiescent -> preamble -> (read -> write)+ -> quiescent; the repeated
/// read/write pairs are what multi-phase (k-NBR) operations use.
enum class Phase : std::uint8_t { quiescent, preamble, read, write };

inline const char* to_string(Phase p) {
  switch (p) {
    case Phase::quiescent: return "quiescent";
    case Phase::preamble:  return "preamble";
    case Phase::read:      return "read";
    case Phase::write:     return "write";
  }
  return "?";
}

class ThreadContext;

namespace detail {
inline thread_local ThreadContext* tls_context = nullptr;
}

/// Per-thread state: phase, restartable flag, checkpoint buffer,
/// neutralization rounds and counters. Phase and restartable are written
/// only by the owning thread (and its signal handler); any thread may
/// read them with acquire ordering.
class ThreadContext {
 public:
  enum class Route { direct, via_begin_read, via_end_read };

  unsigned tid() const { return tid_; }
  Phase phase() const { return phase_.load(std::memory_order_acquire); }
  bool restartable() const { return restartable_.load(std::memory_order_acquire); }
  bool registered() const { return registered_.load(std::memory_order_acquire); }

  /// Moves the phase state machine. Entering read or write directly is
  /// illegal: those edges exist only through begin_read_phase /
  /// end_read_phase, which pass the matching Route.
  void transition(Phase to, Route route = Route::direct) {
    const Phase from = phase();
    bool ok = false;
    switch (route) {
      case Route::direct:
        ok = (from == Phase::quiescent && to == Phase::preamble) ||
             (from == Phase::write && to == Phase::quiescent);
        break;
      case Route::via_begin_read:
        ok = to == Phase::read &&
             (from == Phase::preamble || from == Phase::write || from == Phase::read);
        break;
      case Route::via_end_read:
        ok = from == Phase::read && to == Phase::write;
        break;
    }
    if (!ok)
      throw illegal_transition(std::string("illegal phase transition ") +
                               to_string(from) + " -> " + to_string(to) +
                               (route == Route::direct ? "" : " (guarded route)"));
    phase_.store(to, std::memory_order_release);
  }

  sigjmp_buf& checkpoint_env() { return env_; }

  /// Called at the landing site of a non-local restart.
  void note_restart() {
    restart_count_.fetch_add(1, std::memory_order_relaxed);
    arriving_from_restart = true;
  }

  /// True when the current read-phase entry is a neutralization restart
  /// rather than a fresh entry; consumed by on_read_phase_entry.
  bool take_restart_arrival() {
    const bool r = arriving_from_restart;
    arriving_from_restart = false;
    return r;
  }

  std::uint64_t restart_count() const {
    return restart_count_.load(std::memory_order_relaxed);
  }

  // -- neutralization rounds (cooperative backend) --------------------
  std::atomic<std::uint64_t>& pending_round() { return pending_round_; }
  std::atomic<std::uint64_t>& ack_round() { return ack_round_; }

  /// Consumes any pending neutralization round. Safe at read-phase entry
  /// and registration: at both points the thread holds no references.
  void consume_pending() {
    auto p = pending_round_.load(std::memory_order_acquire);
    if (p > ack_round_.load(std::memory_order_relaxed))
      ack_round_.store(p, std::memory_order_seq_cst);
  }

  std::atomic<bool>& restartable_flag() { return restartable_; }

  // -- counters -------------------------------------------------------
  std::atomic<std::uint64_t> broadcasts_sent{0};
  std::atomic<std::uint64_t> handler_skips{0};  // deliveries while non-restartable

  // -- per-read-phase bookkeeping (owner thread only) -----------------
  std::uint64_t read_phase_generation = 0;  // bumped at every read-phase entry
  std::uint64_t derefs_this_phase = 0;
  unsigned read_phase_index = 0;      // index within the current operation
  bool arriving_from_restart = false;  // set by note_restart, cleared at entry

  /// Root sentinel for the restart-from-root validation check; set by
  /// data structures whose read phases must start at the root.
  const RecordBase* expected_root = nullptr;

  /// Records this thread unlinked in its current write phase. They
  /// cannot be freed concurrently (only this thread can retire them),
  /// so the strict reservation check admits them.
  std::vector<const RecordBase*> self_unlinked;

  /// Strict write-phase reservation checking (validation mode). The
  /// interleaving runner switches it off to let deliberately broken
  /// traces reach the poison detector instead of an assertion.
  bool strict_reservation_check = true;

  /// Test-only injection hook, invoked after every read-phase entry with
  /// the entry's index within the current operation.
  std::function<void(ThreadContext&, unsigned)> read_phase_hook;

  pthread_t os_handle() const { return os_handle_; }

 private:
  friend class ThreadRegistry;

  unsigned tid_ = 0;
  std::atomic<Phase> phase_{Phase::quiescent};
  std::atomic<bool> restartable_{false};
  std::atomic<bool> registered_{false};
  std::atomic<std::uint64_t> pending_round_{0};
  std::atomic<std::uint64_t> ack_round_{0};
  std::atomic<std::uint64_t> restart_count_{0};
  sigjmp_buf env_;
  pthread_t os_handle_{};
};

/// Fixed-capacity thread registry. Each registered thread owns exactly
/// one slot; slots are reusable after unregister. Registration is not on
/// the hot path and takes a coarse lock.
class ThreadRegistry {
 public:
  explicit ThreadRegistry(std::size_t capacity) : slots_(capacity) {
    for (auto& s : slots_) s = std::make_unique<ThreadContext>();
  }

  /// Registers the calling thread. Throws capacity_exceeded when all
  /// slots are taken.
  ThreadContext& register_thread() {
    std::lock_guard lock(mu_);
    for (std::size_t i = 0; i < slots_.size(); ++i) {
      ThreadContext& ctx = *slots_[i];
      if (ctx.registered()) continue;
      ctx.tid_ = static_cast<unsigned>(i);
      ctx.phase_.store(Phase::quiescent, std::memory_order_release);
      ctx.restartable_.store(false, std::memory_order_release);
      ctx.restart_count_.store(0, std::memory_order_relaxed);
      ctx.broadcasts_sent.store(0, std::memory_order_relaxed);
      ctx.handler_skips.store(0, std::memory_order_relaxed);
      ctx.read_phase_generation = 0;
      ctx.derefs_this_phase = 0;
      ctx.read_phase_index = 0;
      ctx.arriving_from_restart = false;
      ctx.expected_root = nullptr;
      ctx.self_unlinked.clear();
      ctx.strict_reservation_check = true;
      ctx.read_phase_hook = nullptr;
      ctx.os_handle_ = pthread_self();
      ctx.consume_pending();  // rounds aimed at a prior occupant
      ctx.registered_.store(true, std::memory_order_seq_cst);
      ++active_;
      detail::tls_context = &ctx;
      return ctx;
    }
    throw capacity_exceeded("thread registry full (capacity " +
                            std::to_string(slots_.size()) + ")");
  }

  /// Releases the slot. The caller (normally SmrDomain) must have
  /// drained the thread's limbo bag first so slot reuse cannot leak.
  void unregister_thread(ThreadContext& ctx) {
    std::lock_guard lock(mu_);
    ctx.registered_.store(false, std::memory_order_seq_cst);
    ctx.phase_.store(Phase::quiescent, std::memory_order_release);
    ctx.restartable_.store(false, std::memory_order_release);
    --active_;
    if (detail::tls_context == &ctx) detail::tls_context = nullptr;
  }

  std::size_t capacity() const { return slots_.size(); }

  std::size_t active_count() const {
    std::lock_guard lock(mu_);
    return active_;
  }

  /// Slot access for reservation scans and broadcasts. Slots are stable
  /// objects; check registered() before trusting a context's state.
  ThreadContext& slot(std::size_t i) { return *slots_[i]; }
  const ThreadContext& slot(std::size_t i) const { return *slots_[i]; }

  template <typename F>
  void for_each_registered(F&& f) {
    for (auto& s : slots_)
      if (s->registered()) f(*s);
  }

  static ThreadContext* current() { return detail::tls_context; }

 private:
  mutable std::mutex mu_;
  std::vector<std::unique_ptr<ThreadContext>> slots_;
  std::size_t active_ = 0;
};

}  // namespace nbr

/// Captures a read-phase checkpoint and enters the read phase. Must be
/// placed in a stack frame that stays live for the rest of the data
/// structure operation: a neutralization restart jumps back here.
/// Re-invoking it (k-NBR) retargets the checkpoint to the newest capture.
#define NBR_READ_PHASE_BEGIN(reclaimer, ctx)                      \
  do {                                                            \
    if (sigsetjmp((ctx).checkpoint_env(), 1) != 0)                \
      (ctx).note_restart();                                       \
    (reclaimer).on_read_phase_entry(ctx);                         \
  } while (0)

/// Bare checkpoint capture; evaluates to true when control arrived via a
/// restart rather than fall-through.
#define NBR_CAPTURE_CHECKPOINT(ctx) \
  (sigsetjmp((ctx).checkpoint_env(), 1) != 0 ? ((ctx).note_restart(), true) : false)
