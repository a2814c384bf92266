#pragma once

#include <atomic>
#include <climits>
#include <cstdint>
#include <vector>

#include "nbr/reclaimer.hpp"

namespace nbr {

/// Node of the lock-free list. The deletion mark lives in the low bit of
/// the successor pointer, so marking a node atomically freezes its
/// outgoing edge.
struct HarrisNode : RecordBase {
  long long key = 0;
  std::atomic<std::uintptr_t> next{0};
};
static_assert(std::is_trivially_destructible_v<HarrisNode>);

inline bool harris_marked(std::uintptr_t p) { return p & 1u; }
inline std::uintptr_t harris_mark(std::uintptr_t p) { return p | 1u; }
inline HarrisNode* harris_ref(std::uintptr_t p) {
  return reinterpret_cast<HarrisNode*>(p & ~std::uintptr_t(1));
}

/// Lock-free sorted-set list with marked-pointer deletion and segment
/// unlinking. Operations are multi-phase: every traversal is its own
/// read phase starting from the head, and each physical unlink or link
/// happens in a short write phase that reserves at most three nodes.
/// The traversal cannot revalidate individual steps, so hazard-pointer
/// reclamation is rejected up front.
class HarrisList {
 public:
  explicit HarrisList(Reclaimer& r) : r_(r) {
    if (r_.requires_validated_traversal())
      throw unsupported_combination(
          std::string(r_.name()) +
          " cannot protect this traversal: marked segments are reachable only "
          "through nodes that fail step revalidation");
    auto& alloc = r_.domain().allocator();
    head_ = alloc.create<HarrisNode>();
    tail_ = alloc.create<HarrisNode>();
    head_->key = LLONG_MIN;
    tail_->key = LLONG_MAX;
    head_->next.store(reinterpret_cast<std::uintptr_t>(tail_),
                      std::memory_order_release);
    lifecycle_advance(*head_, Lifecycle::reachable);
    lifecycle_advance(*tail_, Lifecycle::reachable);
  }

  ~HarrisList() {
    auto& alloc = r_.domain().allocator();
    HarrisNode* n = head_;
    while (n) {
      HarrisNode* next = harris_ref(n->next.load(std::memory_order_relaxed));
      alloc.discard(n);
      n = next;
    }
  }

  HarrisList(const HarrisList&) = delete;
  HarrisList& operator=(const HarrisList&) = delete;

  bool contains(ThreadContext& ctx, long long key) {
    r_.begin_op(ctx);
    ctx.expected_root = head_;
    bool found;
    for (;;) {
      NBR_READ_PHASE_BEGIN(r_, ctx);
      Window w = search(ctx, key);
      if (w.left_next != reinterpret_cast<std::uintptr_t>(w.right)) {
        unlink_segment(ctx, w);  // help, then re-search
        continue;
      }
      found = w.right != tail_ && w.right->key == key;
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
    HarrisNode* fresh = r_.domain().allocator().create<HarrisNode>();
    fresh->key = key;
    bool linked = false;
    bool result;
    for (;;) {
      NBR_READ_PHASE_BEGIN(r_, ctx);
      Window w = search(ctx, key);
      if (w.left_next != reinterpret_cast<std::uintptr_t>(w.right)) {
        unlink_segment(ctx, w);
        continue;
      }
      if (w.right != tail_ && w.right->key == key) {
        r_.end_read_phase(ctx, {});
        result = false;
        break;
      }
      RecordBase* resv[3] = {w.left, w.right, fresh};
      r_.end_read_phase(ctx, resv);
      fresh->next.store(reinterpret_cast<std::uintptr_t>(w.right),
                        std::memory_order_relaxed);
      // The node must be in state reachable before it is published: the
      // instant the swap succeeds another thread may unlink it.
      if (fresh->lifecycle() == Lifecycle::allocated)
        lifecycle_advance(*fresh, Lifecycle::reachable);
      std::uintptr_t expect = reinterpret_cast<std::uintptr_t>(w.right);
      if (w.left->next.compare_exchange_strong(
              expect, reinterpret_cast<std::uintptr_t>(fresh),
              std::memory_order_seq_cst)) {
        linked = true;
        result = true;
        break;
      }
      // Swap lost; the still-private node is reused on the next attempt.
    }
    if (!linked) r_.domain().allocator().discard(fresh);
    finish(ctx);
    return result;
  }

  bool erase(ThreadContext& ctx, long long key) {
    r_.begin_op(ctx);
    ctx.expected_root = head_;
    bool result;
    for (;;) {
      NBR_READ_PHASE_BEGIN(r_, ctx);
      Window w = search(ctx, key);
      if (w.left_next != reinterpret_cast<std::uintptr_t>(w.right)) {
        unlink_segment(ctx, w);
        continue;
      }
      if (w.right == tail_ || w.right->key != key) {
        r_.end_read_phase(ctx, {});
        result = false;
        break;
      }
      std::uintptr_t right_next;
      if (!r_.load_field(ctx, w.right, w.right->next, 2, right_next)) continue;
      if (harris_marked(right_next)) continue;  // already being deleted

      RecordBase* resv[3] = {w.left, w.right, harris_ref(right_next)};
      r_.end_read_phase(ctx, resv);

      // Logical delete: freeze right's outgoing edge.
      std::uintptr_t expect = right_next;
      if (!w.right->next.compare_exchange_strong(expect, harris_mark(right_next),
                                                 std::memory_order_seq_cst))
        continue;
      result = true;
      // Physical unlink; on failure some later search unlinks (and
      // retires) the node for us.
      expect = reinterpret_cast<std::uintptr_t>(w.right);
      if (w.left->next.compare_exchange_strong(expect, right_next,
                                               std::memory_order_seq_cst)) {
        r_.mark_unlinked(ctx, w.right);
        r_.retire(ctx, w.right);
      }
      break;
    }
    finish(ctx);
    return result;
  }

  /// Key snapshot for oracle checks; caller must have quiesced all
  /// threads. Marked nodes are logically absent.
  std::vector<long long> unsafe_keys() const {
    std::vector<long long> out;
    const HarrisNode* n = harris_ref(head_->next.load(std::memory_order_acquire));
    while (n != tail_) {
      const std::uintptr_t next = n->next.load(std::memory_order_acquire);
      if (!harris_marked(next)) out.push_back(n->key);
      n = harris_ref(next);
    }
    return out;
  }

  HarrisNode* head() { return head_; }
  HarrisNode* tail() { return tail_; }

 private:
  struct Window {
    HarrisNode* left = nullptr;
    std::uintptr_t left_next = 0;  // what left->next held when last unmarked
    HarrisNode* right = nullptr;
  };

  /// Read-phase traversal from the head to the first live node with
  /// key >= `key`. Stops at the first marked (logically deleted) run it
  /// meets and reports it as the window instead: the caller unlinks the
  /// segment in its own write phase and re-traverses from the head.
  /// Cutting the traversal there keeps the reservation set at three
  /// nodes no matter how long the deleted run is. No setjmp here: the
  /// checkpoint lives in the caller's frame and a neutralization restart
  /// re-enters the caller's loop.
  Window search(ThreadContext& ctx, long long key) {
    Window w;
    w.left = head_;
    r_.load_field(ctx, head_, head_->next, 0, w.left_next);
    for (;;) {
      HarrisNode* n = harris_ref(w.left_next);
      if (n == tail_) {
        w.right = n;
        return w;
      }
      std::uintptr_t n_next;
      r_.load_field(ctx, n, n->next, 1, n_next);
      if (harris_marked(n_next)) {
        // n starts a deleted run; right becomes the first live node
        // after it, so left_next != right and the caller unlinks.
        for (;;) {
          HarrisNode* after = harris_ref(n_next);
          if (after == tail_) {
            w.right = after;
            return w;
          }
          r_.load_field(ctx, after, after->next, 2, n_next);
          if (!harris_marked(n_next)) {
            w.right = after;
            return w;
          }
        }
      }
      if (n->key >= key) {
        w.right = n;
        return w;
      }
      w.left = n;
      w.left_next = n_next;
    }
  }

  /// Write-phase segment unlink: detaches the marked run between
  /// left_next and right and retires its nodes. Only the thread whose
  /// compare-and-swap detaches the segment retires them; a successful
  /// swap proves the run was still exclusively reachable through left.
  bool unlink_segment(ThreadContext& ctx, Window& w) {
    RecordBase* resv[3] = {w.left, harris_ref(w.left_next), w.right};
    r_.end_read_phase(ctx, resv);
    std::uintptr_t expect = w.left_next;
    if (!w.left->next.compare_exchange_strong(
            expect, reinterpret_cast<std::uintptr_t>(w.right),
            std::memory_order_seq_cst))
      return false;
    HarrisNode* m = harris_ref(w.left_next);
    while (m != w.right) {
      r_.mark_unlinked(ctx, m);
      // The successor must be read before retire: retiring may trigger
      // a reclamation event that frees m itself.
      r_.check_access(ctx, m);
      HarrisNode* next = harris_ref(m->next.load(std::memory_order_acquire));
      r_.retire(ctx, m);
      m = next;
    }
    return true;
  }

  void finish(ThreadContext& ctx) {
    ctx.expected_root = nullptr;
    r_.end_op(ctx);
  }

  Reclaimer& r_;
  HarrisNode* head_;
  HarrisNode* tail_;
};

}  // namespace nbr
