#pragma once

#include <atomic>
#include <climits>
#include <cstdint>
#include <vector>

#include "nbr/reclaimer.hpp"

namespace nbr {

/// Node of the lazy list. Trivially destructible (plain atomics only) so
/// reclaimers can release nodes without running destructors.
struct LazyNode : RecordBase {
  long long key = 0;
  std::atomic<std::uintptr_t> next{0};
  std::atomic<bool> marked{false};
  std::atomic<std::uint32_t> lock_word{0};

  void lock() {
    std::uint32_t expect = 0;
    while (!lock_word.compare_exchange_weak(expect, 1, std::memory_order_acquire)) {
      expect = 0;
    }
  }
  void unlock() { lock_word.store(0, std::memory_order_release); }
};
static_assert(std::is_trivially_destructible_v<LazyNode>);

/// Lock-based sorted-set list with wait-free traversal and lazy
/// (mark-then-unlink) deletion. Each operation runs one read phase (the
/// traversal) and one write phase (lock, validate, mutate); a failed
/// validation re-enters a fresh read phase. Works with every reclaimer,
/// including hazard pointers: traversal steps are revalidated through
/// load_field.
class LazyList {
 public:
  explicit LazyList(Reclaimer& r) : r_(r) {
    auto& alloc = r_.domain().allocator();
    head_ = alloc.create<LazyNode>();
    tail_ = alloc.create<LazyNode>();
    head_->key = LLONG_MIN;
    tail_->key = LLONG_MAX;
    head_->next.store(reinterpret_cast<std::uintptr_t>(tail_),
                      std::memory_order_release);
    lifecycle_advance(*head_, Lifecycle::reachable);
    lifecycle_advance(*tail_, Lifecycle::reachable);
  }

  ~LazyList() {
    auto& alloc = r_.domain().allocator();
    LazyNode* n = head_;
    while (n) {
      LazyNode* next = reinterpret_cast<LazyNode*>(n->next.load(std::memory_order_relaxed));
      alloc.discard(n);
      n = next;
    }
  }

  LazyList(const LazyList&) = delete;
  LazyList& operator=(const LazyList&) = delete;

  bool contains(ThreadContext& ctx, long long key) {
    r_.begin_op(ctx);
    ctx.expected_root = head_;
    bool found = false;
    for (;;) {
      NBR_READ_PHASE_BEGIN(r_, ctx);
      LazyNode* pred;
      LazyNode* curr;
      if (!traverse(ctx, key, pred, curr)) continue;
      found = curr->key == key && !curr->marked.load(std::memory_order_acquire);
      r_.end_read_phase(ctx, {});
      break;
    }
    finish(ctx);
    return found;
  }

  bool insert(ThreadContext& ctx, long long key) {
    r_.begin_op(ctx);
    ctx.expected_root = head_;
    // Allocated before the checkpoint: locals written after sigsetjmp
    // and read after a restart have indeterminate values.
    LazyNode* fresh = r_.domain().allocator().create<LazyNode>();
    fresh->key = key;
    bool linked = false;
    bool result;
    for (;;) {
      NBR_READ_PHASE_BEGIN(r_, ctx);
      LazyNode* pred;
      LazyNode* curr;
      if (!traverse(ctx, key, pred, curr)) continue;
      RecordBase* resv[2] = {pred, curr};
      r_.end_read_phase(ctx, resv);

      pred->lock();
      curr->lock();
      if (!validate(ctx, pred, curr)) {
        curr->unlock();
        pred->unlock();
        continue;  // fresh read phase at the top of the loop
      }
      if (curr->key == key) {
        result = false;
      } else {
        fresh->next.store(reinterpret_cast<std::uintptr_t>(curr),
                          std::memory_order_relaxed);
        lifecycle_advance(*fresh, Lifecycle::reachable);
        pred->next.store(reinterpret_cast<std::uintptr_t>(fresh),
                         std::memory_order_release);
        linked = true;
        result = true;
      }
      curr->unlock();
      pred->unlock();
      break;
    }
    if (!linked) r_.domain().allocator().discard(fresh);  // key was present
    finish(ctx);
    return result;
  }

  bool erase(ThreadContext& ctx, long long key) {
    r_.begin_op(ctx);
    ctx.expected_root = head_;
    bool result;
    for (;;) {
      NBR_READ_PHASE_BEGIN(r_, ctx);
      LazyNode* pred;
      LazyNode* curr;
      if (!traverse(ctx, key, pred, curr)) continue;
      RecordBase* resv[2] = {pred, curr};
      r_.end_read_phase(ctx, resv);

      pred->lock();
      curr->lock();
      if (!validate(ctx, pred, curr)) {
        curr->unlock();
        pred->unlock();
        continue;
      }
      if (curr->key != key) {
        result = false;
        curr->unlock();
        pred->unlock();
      } else {
        curr->marked.store(true, std::memory_order_release);  // logical delete
        pred->next.store(curr->next.load(std::memory_order_relaxed),
                         std::memory_order_release);
        r_.mark_unlinked(ctx, curr);
        curr->unlock();
        pred->unlock();
        r_.retire(ctx, curr);
        result = true;
      }
      break;
    }
    finish(ctx);
    return result;
  }

  /// Key snapshot for oracle checks; caller must have quiesced all
  /// threads.
  std::vector<long long> unsafe_keys() const {
    std::vector<long long> out;
    auto* n = reinterpret_cast<LazyNode*>(head_->next.load(std::memory_order_acquire));
    while (n != tail_) {
      out.push_back(n->key);
      n = reinterpret_cast<LazyNode*>(n->next.load(std::memory_order_acquire));
    }
    return out;
  }

  LazyNode* head() { return head_; }

 private:
  /// Hand-over-hand traversal to the first node with key >= `key`.
  /// Returns false when the reclaimer demands a full restart
  /// (hazard-pointer revalidation failure).
  bool traverse(ThreadContext& ctx, long long key, LazyNode*& pred, LazyNode*& curr) {
    pred = head_;
    std::uintptr_t p;
    unsigned slot = 0;
    if (!r_.load_field(ctx, pred, pred->next, slot, p, &owner_live)) return false;
    curr = reinterpret_cast<LazyNode*>(p);
    r_.check_access(ctx, curr);
    while (curr->key < key) {
      pred = curr;
      slot ^= 1;  // pred stays protected in the other slot
      if (!r_.load_field(ctx, pred, pred->next, slot, p, &owner_live)) return false;
      curr = reinterpret_cast<LazyNode*>(p);
      r_.check_access(ctx, curr);
    }
    return true;
  }

  /// Owner revalidation for hazard-pointer traversal: an unmarked node
  /// is still reachable, so its successor cannot have been retired
  /// before we protected it.
  static bool owner_live(const RecordBase* rec) {
    return !static_cast<const LazyNode*>(rec)->marked.load(std::memory_order_acquire);
  }

  /// Write-phase validation under both locks.
  bool validate(ThreadContext& ctx, LazyNode* pred, LazyNode* curr) {
    r_.check_access(ctx, pred);
    r_.check_access(ctx, curr);
    return !pred->marked.load(std::memory_order_acquire) &&
           !curr->marked.load(std::memory_order_acquire) &&
           pred->next.load(std::memory_order_acquire) ==
               reinterpret_cast<std::uintptr_t>(curr);
  }

  void finish(ThreadContext& ctx) {
    ctx.expected_root = nullptr;
    r_.end_op(ctx);
  }

  Reclaimer& r_;
  LazyNode* head_;
  LazyNode* tail_;
};

}  // namespace nbr
