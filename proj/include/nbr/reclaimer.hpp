#pragma once

#include <atomic>
#include <cstdint>
#include <span>

#include "nbr/domain.hpp"
#include "nbr/record.hpp"
#include "nbr/registry.hpp"

namespace nbr {

/// Uniform reclaimer contract. Data structures are written once against
/// this interface; the neutralization-based schemes, the epoch and
/// hazard-pointer baselines and the leaky no-op all implement it.
///
/// Read phases are entered through the NBR_READ_PHASE_BEGIN macro (the
/// checkpoint must live in the operation's stack frame); every shared
/// pointer load inside an operation goes through load_field, and every
/// other record access is preceded by check_access.
class Reclaimer {
 public:
  explicit Reclaimer(SmrDomain& dom) : dom_(dom) {}
  virtual ~Reclaimer() = default;

  Reclaimer(const Reclaimer&) = delete;
  Reclaimer& operator=(const Reclaimer&) = delete;

  virtual const char* name() const = 0;
  SmrDomain& domain() { return dom_; }

  /// True when the scheme is only safe if every traversal step can be
  /// revalidated after protection (hazard pointers). Structures that
  /// cannot provide that reject such reclaimers at construction.
  virtual bool requires_validated_traversal() const { return false; }

  virtual void begin_op(ThreadContext& ctx) {
    ctx.transition(Phase::preamble);
    ctx.read_phase_index = 0;
  }

  /// After end_op the calling thread holds no usable references to
  /// shared records.
  virtual void end_op(ThreadContext& ctx) {
    ctx.transition(Phase::quiescent);
    ctx.self_unlinked.clear();
  }

  /// Body of the read-phase entry, invoked by NBR_READ_PHASE_BEGIN after
  /// the checkpoint capture (and after every restart).
  virtual void on_read_phase_entry(ThreadContext& ctx) {
    ctx.transition(Phase::read, ThreadContext::Route::via_begin_read);
    ++ctx.read_phase_generation;
    // A restart re-enters the same logical phase of the operation; only
    // fresh entries advance the per-operation index.
    if (!ctx.take_restart_arrival()) ++ctx.read_phase_index;
    ctx.derefs_this_phase = 0;
    ctx.self_unlinked.clear();
    ctx.consume_pending();
    // The read-modify-write keeps later shared loads from being
    // reordered before the thread becomes restartable.
    ctx.restartable_flag().exchange(true, std::memory_order_seq_cst);
    if (ctx.read_phase_hook) ctx.read_phase_hook(ctx, ctx.read_phase_index);
  }

  /// Publishes the write-phase reservation set and leaves the read
  /// phase. The reservation-publishing schemes override this; the base
  /// handles the restartable flip and the phase move. The RMW implies a
  /// full fence: all reservations are globally visible before
  /// restartable reads false.
  virtual void end_read_phase(ThreadContext& ctx, std::span<RecordBase* const> recs) {
    (void)recs;
    ctx.restartable_flag().exchange(false, std::memory_order_seq_cst);
    ctx.transition(Phase::write, ThreadContext::Route::via_end_read);
  }

  /// Hands an unlinked record to the reclaimer. Caller must be in a
  /// write phase and the record must be in state unlinked.
  virtual void retire(ThreadContext& ctx, RecordBase* rec) = 0;

  /// Guarded access to a record this thread is about to read. In a read
  /// phase under the cooperative backend this is the neutralization
  /// point: a pending broadcast is acknowledged here and the read phase
  /// restarted (the call does not return). In validation mode it is also
  /// the use-after-free detector.
  virtual void check_access(ThreadContext& ctx, const RecordBase* rec) {
    if (rec == nullptr) return;
    const Phase phase = ctx.phase();
    if (phase == Phase::read && dom_.backend().cooperative())
      CooperativeBackend::poll(ctx);  // may not return
    if (!dom_.validation()) return;
    if (rec->poisoned()) {
      dom_.note_poison();
      throw poison_error("guarded access touched a reclaimed record (id unknown: "
                         "header poisoned)");
    }
    if (phase == Phase::read) {
      if (ctx.derefs_this_phase++ == 0 && ctx.expected_root != nullptr &&
          rec != ctx.expected_root)
        throw error("restart-from-root violated: first read-phase access is not the root");
    } else if (phase == Phase::write && ctx.strict_reservation_check) {
      if (!write_phase_access_ok(ctx, rec))
        throw error("write phase accessed a record outside its reservation set");
    }
  }

  /// Loads a shared pointer-sized field of `owner`. Returns false when
  /// the scheme needs the whole traversal restarted (hazard-pointer
  /// validation failure); the neutralization schemes never fail here.
  /// `slot` is a per-operation protection-slot hint and `owner_ok` an
  /// optional structure-specific revalidation of the owner.
  virtual bool load_field(ThreadContext& ctx, const RecordBase* owner,
                          const std::atomic<std::uintptr_t>& field, unsigned slot,
                          std::uintptr_t& out,
                          bool (*owner_ok)(const RecordBase*) = nullptr) {
    (void)slot;
    (void)owner_ok;
    check_access(ctx, owner);
    out = field.load(std::memory_order_acquire);
    return true;
  }

  /// Advances a record to unlinked and remembers it as unlinked-by-us
  /// for the current write phase (such records cannot be reclaimed
  /// concurrently, because only this thread may retire them).
  void mark_unlinked(ThreadContext& ctx, RecordBase* rec) {
    lifecycle_advance(*rec, Lifecycle::unlinked);
    if (dom_.validation()) ctx.self_unlinked.push_back(rec);
  }

  /// Flushes the thread's retired records before its slot is released.
  virtual void unregister_drain(ThreadContext& ctx) { (void)ctx; }

 protected:
  /// Write-phase access predicate for the strict validation check.
  /// Non-reserving schemes place no restriction.
  virtual bool write_phase_access_ok(ThreadContext& ctx, const RecordBase* rec) {
    (void)ctx;
    (void)rec;
    return true;
  }

  /// Completes the lifecycle of a batch entry and releases it.
  void free_record(RecordBase* rec) {
    lifecycle_advance(*rec, Lifecycle::safe);
    lifecycle_advance(*rec, Lifecycle::reclaimed);
    dom_.allocator().release(rec);
  }

  SmrDomain& dom_;
};

}  // namespace nbr
