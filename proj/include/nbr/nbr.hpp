#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <mutex>
#include <span>
#include <vector>

#include "nbr/monitor.hpp"
#include "nbr/reclaimer.hpp"

namespace nbr {

/// Per-thread bag of retired records awaiting reclamation, in retire
/// order. Owner-thread-only except during the final drain. Supports the
/// tail bookmark used by the watermark scheme: a reclaim can stop at the
/// position the bag had when the bookmark was taken.
class LimboBag {
 public:
  void push(RecordBase* rec) { entries_.push_back(rec); }

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  bool has_bookmark() const { return bookmark_ != kNoBookmark; }
  std::size_t bookmark() const { return bookmark_; }
  void set_bookmark() { bookmark_ = entries_.size(); }
  void clear_bookmark() { bookmark_ = kNoBookmark; }

  /// Frees every entry in [0, upto) that is not in `reserved_sorted`
  /// (a sorted pointer list), keeps the rest, and compacts the bag.
  /// Any bookmark is consumed. Returns the number of records freed.
  template <typename FreeFn>
  std::size_t reclaim_prefix(std::size_t upto,
                             const std::vector<const RecordBase*>& reserved_sorted,
                             FreeFn&& free_fn) {
    upto = std::min(upto, entries_.size());
    std::size_t kept = 0;
    std::size_t freed = 0;
    for (std::size_t i = 0; i < upto; ++i) {
      RecordBase* rec = entries_[i];
      if (std::binary_search(reserved_sorted.begin(), reserved_sorted.end(),
                             static_cast<const RecordBase*>(rec))) {
        entries_[kept++] = rec;
      } else {
        free_fn(rec);
        ++freed;
      }
    }
    // Slide the untouched tail down over the freed gap.
    for (std::size_t i = upto; i < entries_.size(); ++i) entries_[kept++] = entries_[i];
    entries_.resize(kept);
    bookmark_ = kNoBookmark;
    return freed;
  }

  const std::vector<RecordBase*>& entries() const { return entries_; }

 private:
  static constexpr std::size_t kNoBookmark = static_cast<std::size_t>(-1);
  std::vector<RecordBase*> entries_;
  std::size_t bookmark_ = kNoBookmark;
};

/// N x R table of published reservations. Each row is single-writer
/// (the owning thread); reclaimers read all rows when computing the
/// freeable set.
class ReservationTable {
 public:
  ReservationTable(std::size_t threads, std::size_t slots_per_thread)
      : slots_(slots_per_thread), cells_(threads * slots_per_thread) {}

  std::size_t slots_per_thread() const { return slots_; }

  /// Publishes a thread's reservation set; unused slots become null.
  /// The caller issues the fence (the restartable RMW) that orders the
  /// publication before the thread stops being restartable.
  void publish(unsigned tid, std::span<RecordBase* const> recs) {
    for (std::size_t j = 0; j < slots_; ++j)
      cell(tid, j).store(j < recs.size() ? recs[j] : nullptr,
                         std::memory_order_release);
  }

  void clear(unsigned tid) {
    for (std::size_t j = 0; j < slots_; ++j)
      cell(tid, j).store(nullptr, std::memory_order_release);
  }

  const RecordBase* get(unsigned tid, std::size_t j) const {
    return cell(tid, j).load(std::memory_order_acquire);
  }

  bool row_contains(unsigned tid, const RecordBase* rec) const {
    for (std::size_t j = 0; j < slots_; ++j)
      if (get(tid, j) == rec) return true;
    return false;
  }

  /// Snapshots every other thread's row into `out`, sorted for binary
  /// search. Rows of unregistered slots are skipped.
  void collect_others(const ThreadRegistry& reg, unsigned self,
                      std::vector<const RecordBase*>& out) const {
    out.clear();
    for (std::size_t i = 0; i < reg.capacity(); ++i) {
      if (i == self || !reg.slot(i).registered()) continue;
      for (std::size_t j = 0; j < slots_; ++j)
        if (const RecordBase* r = get(static_cast<unsigned>(i), j)) out.push_back(r);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
  }

 private:
  std::atomic<const RecordBase*>& cell(unsigned tid, std::size_t j) {
    return cells_[tid * slots_ + j];
  }
  const std::atomic<const RecordBase*>& cell(unsigned tid, std::size_t j) const {
    return cells_[tid * slots_ + j];
  }

  std::size_t slots_;
  std::vector<std::atomic<const RecordBase*>> cells_;
};

/// Neutralization-based reclaimer. Retired records collect in a
/// per-thread limbo bag; when the bag reaches the threshold the thread
/// broadcasts a neutralize event, snapshots all published reservations
/// and frees everything in the bag that is not reserved. Correctness
/// rests on the delivery contract: after the broadcast, no thread holds
/// an unpublished reference to anything retired before it.
class NbrReclaimer : public Reclaimer {
 public:
  explicit NbrReclaimer(SmrDomain& dom)
      : Reclaimer(dom),
        bags_(dom.config().max_threads),
        reservations_(dom.config().max_threads, dom.config().max_reservations),
        retire_ticks_(dom.config().max_threads),
        scratch_(dom.config().max_threads) {}

  ~NbrReclaimer() override { release_all_remaining(); }

  const char* name() const override { return "nbr"; }

  void attach_monitor(BoundMonitor* m) { monitor_ = m; }
  BoundMonitor* monitor() const { return monitor_; }

  /// Read-phase entry clears the thread's reservation row before the
  /// thread becomes restartable: stale reservations from the previous
  /// write phase must not pin garbage across the new phase.
  void on_read_phase_entry(ThreadContext& ctx) override {
    reservations_.clear(ctx.tid());
    Reclaimer::on_read_phase_entry(ctx);
  }

  void end_read_phase(ThreadContext& ctx, std::span<RecordBase* const> recs) override {
    if (recs.size() > reservations_.slots_per_thread())
      throw too_many_reservations(
          "end_read_phase got " + std::to_string(recs.size()) + " records, row holds " +
          std::to_string(reservations_.slots_per_thread()));
    reservations_.publish(ctx.tid(), recs);
    // Base flips restartable with a seq_cst RMW, ordering the row
    // publication before any observer can see restartable == false.
    Reclaimer::end_read_phase(ctx, recs);
  }

  void end_op(ThreadContext& ctx) override {
    if (dom_.config().clear_reservations_at_end_op) reservations_.clear(ctx.tid());
    Reclaimer::end_op(ctx);
  }

  void retire(ThreadContext& ctx, RecordBase* rec) override {
    LimboBag& bag = bags_[ctx.tid()];
    maybe_reclaim(ctx, bag);
    dom_.note_retired(*rec);
    bag.push(rec);
    if (monitor_ && (++retire_ticks_[ctx.tid()].v % BoundMonitor::kSampleInterval) == 0)
      monitor_->sample_steady(ctx.tid(), bag.size());
  }

  /// Forces a full reclamation event for the calling thread regardless
  /// of the bag size (used by the drain path and by scripted tests).
  virtual std::size_t reclaim_now(ThreadContext& ctx) {
    LimboBag& bag = bags_[ctx.tid()];
    dom_.backend().broadcast(dom_.registry(), ctx);
    return reclaim_freeable(ctx, bag, bag.size(), /*full_tail=*/true);
  }

  /// Script/test hook: the set-difference sweep alone, without the
  /// preceding broadcast handshake. The caller is responsible for
  /// having delivered (or scripted) the neutralize events.
  std::size_t sweep_full_tail(ThreadContext& ctx) {
    LimboBag& bag = bags_[ctx.tid()];
    return reclaim_freeable(ctx, bag, bag.size(), /*full_tail=*/true);
  }

  const LimboBag& limbo_bag(unsigned tid) const { return bags_[tid]; }
  const ReservationTable& reservations() const { return reservations_; }
  ReservationTable& reservations() { return reservations_; }

  /// Before the slot is released, flush this thread's bag. Anything
  /// still reserved by others is parked on the orphan list and freed
  /// when the reclaimer is destroyed.
  void unregister_drain(ThreadContext& ctx) override {
    LimboBag& bag = bags_[ctx.tid()];
    if (!bag.empty()) reclaim_now(ctx);
    if (!bag.empty()) {
      std::lock_guard lock(orphans_mu_);
      for (RecordBase* rec : bag.entries()) orphans_.push_back(rec);
      bag.reclaim_prefix(bag.size(), {}, [](RecordBase*) {});  // moved, not freed
    }
  }

 protected:
  /// Triggers the reclamation event when the bag has reached the
  /// threshold. The watermark scheme overrides this with its two-level
  /// policy.
  virtual void maybe_reclaim(ThreadContext& ctx, LimboBag& bag) {
    if (bag.size() >= dom_.config().limbo_threshold) reclaim_now(ctx);
  }

  /// Set-difference reclamation: frees every bag entry in [0, upto)
  /// not present in the current reservation snapshot. Must run after a
  /// completed broadcast. Returns the number freed.
  std::size_t reclaim_freeable(ThreadContext& ctx, LimboBag& bag, std::size_t upto,
                               bool full_tail) {
    reservations_.collect_others(dom_.registry(), ctx.tid(), scratch_[ctx.tid()].v);
    const std::size_t freed =
        bag.reclaim_prefix(upto, scratch_[ctx.tid()].v,
                           [this](RecordBase* rec) { free_record(rec); });
    if (freed) dom_.note_freed(freed);
    if (monitor_) {
      if (full_tail)
        monitor_->sample_post_event(ctx.tid(), bag.size());
      else
        monitor_->sample_steady(ctx.tid(), bag.size());
    }
    return freed;
  }

  bool write_phase_access_ok(ThreadContext& ctx, const RecordBase* rec) override {
    if (rec->lifecycle() == Lifecycle::allocated) return true;  // private node
    if (reservations_.row_contains(ctx.tid(), rec)) return true;
    for (const RecordBase* u : ctx.self_unlinked)
      if (u == rec) return true;
    return false;
  }

  void release_all_remaining() {
    // Destruction-time cleanup: no threads are active, everything left
    // in bags or the orphan list is unreachable and safe to free.
    for (LimboBag& bag : bags_) {
      std::size_t n = bag.size();
      bag.reclaim_prefix(bag.size(), {}, [this](RecordBase* rec) { free_record(rec); });
      if (n) dom_.note_freed(n);
    }
    std::lock_guard lock(orphans_mu_);
    for (RecordBase* rec : orphans_) free_record(rec);
    if (!orphans_.empty()) dom_.note_freed(orphans_.size());
    orphans_.clear();
  }

  // Cache-line padded per-thread scalars; plain vectors would put
  // adjacent threads' counters on one line.
  struct alignas(64) PaddedCounter {
    std::uint64_t v = 0;
  };
  struct alignas(64) PaddedScratch {
    std::vector<const RecordBase*> v;
  };

  std::vector<LimboBag> bags_;
  ReservationTable reservations_;
  std::vector<PaddedCounter> retire_ticks_;
  std::vector<PaddedScratch> scratch_;
  BoundMonitor* monitor_ = nullptr;

  std::mutex orphans_mu_;
  std::vector<RecordBase*> orphans_;
};

}  // namespace nbr
