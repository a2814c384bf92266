#pragma once

#include <atomic>
#include <cstdint>
#include <span>
#include <thread>
#include <vector>

#include "nbr/nbr.hpp"

namespace nbr {

/// Reclamation-guarantee predicate. `scan` is a raw snapshot of the
/// per-thread announce clocks taken at bookmark time, `current` their
/// values now, `self` the scanning thread (excluded; pass an
/// out-of-range index to exclude nobody).
///
/// A clock is odd while its owner's broadcast is in flight and even
/// between broadcasts. An odd snapshot value is normalized up to the
/// next even value: the in-flight broadcast cannot be credited, so the
/// baseline is the state after it ends. The guarantee holds as soon as
/// any other thread's clock advanced by two or more past that baseline,
/// i.e. at least one full broadcast began and ended after the snapshot.
inline bool rgp_detected(std::span<const std::uint64_t> scan,
                         std::span<const std::uint64_t> current, std::size_t self) {
  for (std::size_t i = 0; i < scan.size() && i < current.size(); ++i) {
    if (i == self) continue;
    const std::uint64_t baseline = scan[i] + (scan[i] & 1);
    if (current[i] >= baseline + 2) return true;
  }
  return false;
}

/// Watermark extension of the neutralization reclaimer. Past a low
/// watermark a thread bookmarks its limbo bag and snapshots everyone's
/// announce clocks; once the reclamation-guarantee predicate shows that
/// some other thread ran a complete broadcast after the snapshot, the
/// bookmarked prefix is reclaimed without a broadcast of our own. Only
/// at the full threshold does the thread broadcast itself. Under load
/// this trades most broadcasts for piggybacking on other threads'.
class NbrPlusReclaimer : public NbrReclaimer {
 public:
  explicit NbrPlusReclaimer(SmrDomain& dom)
      : NbrReclaimer(dom),
        clocks_(dom.config().max_threads),
        lo_(dom.config().max_threads) {}

  const char* name() const override { return "nbrplus"; }

  std::uint64_t announce_clock(unsigned tid) const {
    return clocks_[tid].v.load(std::memory_order_acquire);
  }

  // -- scripted step methods (also used internally) -------------------

  /// Marks this thread's broadcast as in flight (clock becomes odd).
  void announce_begin(ThreadContext& ctx) {
    clocks_[ctx.tid()].v.fetch_add(1, std::memory_order_seq_cst);
  }

  /// Marks this thread's broadcast as complete (clock becomes even).
  void announce_end(ThreadContext& ctx) {
    clocks_[ctx.tid()].v.fetch_add(1, std::memory_order_seq_cst);
  }

  /// Starts a low-watermark episode: bookmark the bag tail and snapshot
  /// the announce clocks. No-op if an episode is already active.
  void begin_lo_episode(ThreadContext& ctx) {
    LoState& st = lo_[ctx.tid()];
    if (st.active) return;
    bags_[ctx.tid()].set_bookmark();
    snapshot_clocks(st.scan);
    st.ticks_since_scan = 0;
    st.active = true;
  }

  bool lo_episode_active(unsigned tid) const { return lo_[tid].active; }
  std::span<const std::uint64_t> lo_snapshot(unsigned tid) const {
    return lo_[tid].scan;
  }

  /// Evaluates the guarantee predicate against the episode snapshot.
  bool guarantee_holds(ThreadContext& ctx) const {
    const LoState& st = lo_[ctx.tid()];
    if (!st.active) return false;
    std::vector<std::uint64_t> current;
    snapshot_clocks(current);
    return rgp_detected(st.scan, current, ctx.tid());
  }

  /// Reclaims the bookmarked prefix (set-difference against the current
  /// reservation snapshot) and closes the episode. The caller must have
  /// established the guarantee; scripted tests may call it regardless.
  std::size_t reclaim_bookmark(ThreadContext& ctx) {
    LimboBag& bag = bags_[ctx.tid()];
    LoState& st = lo_[ctx.tid()];
    const std::size_t upto = bag.has_bookmark() ? bag.bookmark() : bag.size();
    const std::size_t freed = reclaim_freeable(ctx, bag, upto, /*full_tail=*/false);
    st.active = false;
    return freed;
  }

  /// Full broadcast event with announce-clock bracketing.
  std::size_t hi_event(ThreadContext& ctx) {
    announce_begin(ctx);
    dom_.backend().broadcast(dom_.registry(), ctx);
    announce_end(ctx);
    LimboBag& bag = bags_[ctx.tid()];
    const std::size_t freed = reclaim_freeable(ctx, bag, bag.size(), /*full_tail=*/true);
    lo_[ctx.tid()].active = false;  // a fresh episode may start over
    return freed;
  }

  /// Forced events go through the clock-bracketed path so other
  /// threads' watermark episodes can credit them.
  std::size_t reclaim_now(ThreadContext& ctx) override { return hi_event(ctx); }

 protected:
  void maybe_reclaim(ThreadContext& ctx, LimboBag& bag) override {
    const Config& cfg = dom_.config();
    LoState& st = lo_[ctx.tid()];
    if (bag.size() >= cfg.limbo_threshold) {
      // Threads tend to hit the threshold in lockstep, typically while
      // the first one's broadcast is still in flight (its clock is
      // odd). Before paying for a broadcast of our own, wait briefly
      // for such a broadcast to complete and harvest it.
      if (st.active && await_foreign_broadcast(ctx)) reclaim_bookmark(ctx);
      if (bag.size() >= cfg.limbo_threshold) hi_event(ctx);
      return;
    }
    if (bag.size() < cfg.effective_lo()) return;
    if (!st.active) {
      begin_lo_episode(ctx);
      return;
    }
    // Re-checking the clocks on every retire would defeat the point;
    // amortize the scan.
    if (++st.ticks_since_scan < cfg.scan_amortization) return;
    st.ticks_since_scan = 0;
    if (guarantee_holds(ctx)) reclaim_bookmark(ctx);
  }

 private:
  /// Returns true once the episode guarantee holds, waiting out any
  /// foreign broadcast currently in flight (odd clock). The wait is
  /// bounded: a broadcast stuck behind a stalled reader must not stall
  /// us in turn, since we can fall back to broadcasting ourselves
  /// (which blocks on the same reader, but caps our limbo growth).
  bool await_foreign_broadcast(ThreadContext& ctx) {
    for (unsigned spins = 0; spins < 100000; ++spins) {
      if (guarantee_holds(ctx)) return true;
      bool odd = false;
      for (std::size_t i = 0; i < clocks_.size() && !odd; ++i)
        odd = i != ctx.tid() &&
              (clocks_[i].v.load(std::memory_order_acquire) & 1) != 0;
      if (!odd) return guarantee_holds(ctx);
      std::this_thread::yield();
    }
    return guarantee_holds(ctx);
  }

  struct alignas(64) PaddedClock {
    std::atomic<std::uint64_t> v{0};
  };

  struct alignas(64) LoState {
    bool active = false;
    std::size_t ticks_since_scan = 0;
    std::vector<std::uint64_t> scan;
  };

  void snapshot_clocks(std::vector<std::uint64_t>& out) const {
    out.resize(clocks_.size());
    for (std::size_t i = 0; i < clocks_.size(); ++i)
      out[i] = clocks_[i].v.load(std::memory_order_seq_cst);
  }

  std::vector<PaddedClock> clocks_;
  std::vector<LoState> lo_;
};

}  // namespace nbr
