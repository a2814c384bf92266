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

/// No-reclamation baseline: retired records are kept forever (freed only
/// when the reclaimer itself is destroyed). Upper bound on throughput,
/// unbounded memory.
class LeakyReclaimer : public Reclaimer {
 public:
  explicit LeakyReclaimer(SmrDomain& dom)
      : Reclaimer(dom), bags_(dom.config().max_threads) {}

  ~LeakyReclaimer() override {
    for (auto& bag : bags_) {
      for (RecordBase* rec : bag.v) free_record(rec);
      if (!bag.v.empty()) dom_.note_freed(bag.v.size());
    }
    std::lock_guard lock(orphans_mu_);
    for (RecordBase* rec : orphans_) free_record(rec);
    if (!orphans_.empty()) dom_.note_freed(orphans_.size());
  }

  const char* name() const override { return "leaky"; }

  void attach_monitor(BoundMonitor* m) { monitor_ = m; }

  void retire(ThreadContext& ctx, RecordBase* rec) override {
    dom_.note_retired(*rec);
    auto& bag = bags_[ctx.tid()].v;
    bag.push_back(rec);
    if (monitor_) monitor_->sample_steady(ctx.tid(), bag.size());
  }

  void unregister_drain(ThreadContext& ctx) override {
    auto& bag = bags_[ctx.tid()].v;
    std::lock_guard lock(orphans_mu_);
    orphans_.insert(orphans_.end(), bag.begin(), bag.end());
    bag.clear();
  }

 private:
  struct alignas(64) Bag {
    std::vector<RecordBase*> v;
  };
  std::vector<Bag> bags_;
  BoundMonitor* monitor_ = nullptr;
  std::mutex orphans_mu_;
  std::vector<RecordBase*> orphans_;
};

/// Classic three-bag epoch-based reclamation. Threads announce the
/// global epoch while active; the epoch advances only when every active
/// thread has announced the current one, so a single stalled reader
/// blocks reclamation for everybody (the unbounded-garbage failure mode
/// the neutralization schemes exist to avoid).
class EbrReclaimer : public Reclaimer {
 public:
  explicit EbrReclaimer(SmrDomain& dom)
      : Reclaimer(dom), slots_(dom.config().max_threads) {}

  ~EbrReclaimer() override {
    for (auto& s : slots_) {
      for (auto& bag : s.bags) {
        for (RecordBase* rec : bag) free_record(rec);
        if (!bag.empty()) dom_.note_freed(bag.size());
        bag.clear();
      }
    }
    std::lock_guard lock(orphans_mu_);
    for (RecordBase* rec : orphans_) free_record(rec);
    if (!orphans_.empty()) dom_.note_freed(orphans_.size());
  }

  const char* name() const override { return "ebr"; }

  void attach_monitor(BoundMonitor* m) { monitor_ = m; }

  void begin_op(ThreadContext& ctx) override {
    Reclaimer::begin_op(ctx);
    Slot& s = slots_[ctx.tid()];
    const std::uint64_t e = global_epoch_.load(std::memory_order_seq_cst);
    s.announced.store(e, std::memory_order_seq_cst);
    s.active.store(true, std::memory_order_seq_cst);
    observe_epoch(ctx, s, e);
  }

  void end_op(ThreadContext& ctx) override {
    slots_[ctx.tid()].active.store(false, std::memory_order_seq_cst);
    Reclaimer::end_op(ctx);
  }

  void retire(ThreadContext& ctx, RecordBase* rec) override {
    dom_.note_retired(*rec);
    Slot& s = slots_[ctx.tid()];
    // Bin by the global epoch read after the unlink, not by the epoch
    // announced at begin_op: the record may have been unlinked while
    // the global epoch was already ahead of our announcement, and the
    // two-epoch delay counts from the unlink.
    const std::uint64_t g = global_epoch_.load(std::memory_order_seq_cst);
    s.bags[g % 3].push_back(rec);
    if (monitor_) monitor_->sample_steady(ctx.tid(), garbage_size(s));
    if (++s.retire_ticks % dom_.config().ebr_advance_interval == 0) try_advance(ctx);
  }

  std::uint64_t global_epoch() const {
    return global_epoch_.load(std::memory_order_seq_cst);
  }

  /// Advances the global epoch iff every active thread has announced the
  /// current one. Exposed for unit tests.
  bool try_advance(ThreadContext& ctx) {
    (void)ctx;
    std::uint64_t e = global_epoch_.load(std::memory_order_seq_cst);
    ThreadRegistry& reg = dom_.registry();
    for (std::size_t i = 0; i < reg.capacity(); ++i) {
      const ThreadContext& t = reg.slot(i);
      if (!t.registered()) continue;
      const Slot& s = slots_[i];
      if (s.active.load(std::memory_order_seq_cst) &&
          s.announced.load(std::memory_order_seq_cst) != e)
        return false;
    }
    // Only the global epoch moves here. Re-announcing our own slot
    // mid-operation would let our stale bag be freed while we still
    // hold references from the epoch we announced at begin_op; the new
    // epoch takes effect for us at the next begin_op.
    return global_epoch_.compare_exchange_strong(e, e + 1, std::memory_order_seq_cst);
  }

  std::size_t garbage_size(unsigned tid) const { return garbage_size(slots_[tid]); }

  void unregister_drain(ThreadContext& ctx) override {
    Slot& s = slots_[ctx.tid()];
    std::lock_guard lock(orphans_mu_);
    for (auto& bag : s.bags) {
      orphans_.insert(orphans_.end(), bag.begin(), bag.end());
      bag.clear();
    }
  }

 private:
  struct alignas(64) Slot {
    std::atomic<std::uint64_t> announced{0};
    std::atomic<bool> active{false};
    std::uint64_t local_epoch = 0;
    std::uint64_t retire_ticks = 0;
    std::vector<RecordBase*> bags[3];
  };

  static std::size_t garbage_size(const Slot& s) {
    return s.bags[0].size() + s.bags[1].size() + s.bags[2].size();
  }

  /// On first seeing epoch e, the bag that last collected garbage in
  /// epoch e-2 is reference-free and can be emptied.
  void observe_epoch(ThreadContext& ctx, Slot& s, std::uint64_t e) {
    if (e == s.local_epoch) return;
    s.local_epoch = e;
    auto& stale = s.bags[(e + 1) % 3];
    if (stale.empty()) return;
    for (RecordBase* rec : stale) free_record(rec);
    dom_.note_freed(stale.size());
    stale.clear();
    if (monitor_) monitor_->sample_steady(ctx.tid(), garbage_size(s));
  }

  std::atomic<std::uint64_t> global_epoch_{2};
  std::vector<Slot> slots_;
  BoundMonitor* monitor_ = nullptr;
  std::mutex orphans_mu_;
  std::vector<RecordBase*> orphans_;
};

/// Hazard-pointer reclamation. Every shared load publishes the target in
/// a per-thread slot and revalidates the source field (and the owner)
/// afterwards; a failed revalidation makes load_field return false and
/// the data structure restarts its traversal. Works only for structures
/// whose traversal can validate each hand-over-hand step.
class HpReclaimer : public Reclaimer {
 public:
  explicit HpReclaimer(SmrDomain& dom)
      : Reclaimer(dom),
        slots_per_thread_(dom.config().max_reservations),
        rows_(dom.config().max_threads),
        retired_(dom.config().max_threads) {
    for (auto& row : rows_)
      row.v = std::vector<std::atomic<const RecordBase*>>(slots_per_thread_);
  }

  ~HpReclaimer() override {
    for (auto& r : retired_) {
      for (RecordBase* rec : r.v) free_record(rec);
      if (!r.v.empty()) dom_.note_freed(r.v.size());
    }
    std::lock_guard lock(orphans_mu_);
    for (RecordBase* rec : orphans_) free_record(rec);
    if (!orphans_.empty()) dom_.note_freed(orphans_.size());
  }

  const char* name() const override { return "hp"; }
  bool requires_validated_traversal() const override { return true; }

  void attach_monitor(BoundMonitor* m) { monitor_ = m; }
  std::size_t slots_per_thread() const { return slots_per_thread_; }

  /// Publishes `rec` in the given slot. Exposed for unit tests; the
  /// normal path is load_field.
  void protect(ThreadContext& ctx, unsigned slot, const RecordBase* rec) {
    rows_[ctx.tid()].v[slot].store(rec, std::memory_order_seq_cst);
  }

  const RecordBase* protected_at(unsigned tid, unsigned slot) const {
    return rows_[tid].v[slot].load(std::memory_order_acquire);
  }

  void clear_slots(ThreadContext& ctx) {
    for (auto& s : rows_[ctx.tid()].v) s.store(nullptr, std::memory_order_release);
  }

  void end_op(ThreadContext& ctx) override {
    clear_slots(ctx);
    Reclaimer::end_op(ctx);
  }

  bool load_field(ThreadContext& ctx, const RecordBase* owner,
                  const std::atomic<std::uintptr_t>& field, unsigned slot,
                  std::uintptr_t& out,
                  bool (*owner_ok)(const RecordBase*) = nullptr) override {
    check_access(ctx, owner);
    std::uintptr_t p = field.load(std::memory_order_acquire);
    for (;;) {
      protect(ctx, slot, reinterpret_cast<const RecordBase*>(p));
      std::atomic_thread_fence(std::memory_order_seq_cst);
      if (owner_ok && !owner_ok(owner)) return false;  // owner unlinked: full retry
      const std::uintptr_t again = field.load(std::memory_order_seq_cst);
      if (again == p) {
        out = p;
        return true;
      }
      p = again;
    }
  }

  void retire(ThreadContext& ctx, RecordBase* rec) override {
    dom_.note_retired(*rec);
    auto& r = retired_[ctx.tid()].v;
    r.push_back(rec);
    if (monitor_) monitor_->sample_steady(ctx.tid(), r.size());
    if (r.size() >= dom_.config().hp_scan_threshold) scan(ctx);
  }

  /// Frees every retired record not currently protected by any thread.
  std::size_t scan(ThreadContext& ctx) {
    std::vector<const RecordBase*> prot;
    ThreadRegistry& reg = dom_.registry();
    for (std::size_t i = 0; i < reg.capacity(); ++i) {
      if (!reg.slot(i).registered()) continue;
      for (const auto& s : rows_[i].v)
        if (const RecordBase* r = s.load(std::memory_order_seq_cst)) prot.push_back(r);
    }
    std::sort(prot.begin(), prot.end());

    auto& r = retired_[ctx.tid()].v;
    std::size_t kept = 0;
    std::size_t freed = 0;
    for (RecordBase* rec : r) {
      if (std::binary_search(prot.begin(), prot.end(),
                             static_cast<const RecordBase*>(rec))) {
        r[kept++] = rec;
      } else {
        free_record(rec);
        ++freed;
      }
    }
    r.resize(kept);
    if (freed) dom_.note_freed(freed);
    if (monitor_) monitor_->sample_steady(ctx.tid(), r.size());
    return freed;
  }

  void unregister_drain(ThreadContext& ctx) override {
    clear_slots(ctx);
    scan(ctx);
    auto& r = retired_[ctx.tid()].v;
    std::lock_guard lock(orphans_mu_);
    orphans_.insert(orphans_.end(), r.begin(), r.end());
    r.clear();
  }

 private:
  struct alignas(64) Row {
    std::vector<std::atomic<const RecordBase*>> v;
  };
  struct alignas(64) Retired {
    std::vector<RecordBase*> v;
  };

  std::size_t slots_per_thread_;
  std::vector<Row> rows_;
  std::vector<Retired> retired_;
  BoundMonitor* monitor_ = nullptr;
  std::mutex orphans_mu_;
  std::vector<RecordBase*> orphans_;
};

}  // namespace nbr
