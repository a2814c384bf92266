#pragma once

#include <atomic>
#include <cstdint>
#include <vector>

namespace nbr {

/// Tracks per-thread unreclaimed-garbage peaks so the bounded-garbage
/// property can be checked after a run. Reclaimers feed it two kinds of
/// samples:
///   - steady: the limbo/retired-set size, sampled at every reclamation
///     event and every 2^16 retires;
///   - post_event: the limbo size immediately after a full-tail
///     reclamation event (NBR-family only; watermark bookmark reclaims
///     legitimately leave newer entries behind).
class BoundMonitor {
 public:
  struct Bounds {
    std::size_t threads = 0;           // p
    std::size_t limbo_threshold = 0;   // S
    std::size_t max_reservations = 0;  // k (== R)
    // Worst case leftovers after a full reclamation event: one reserved
    // record per slot per other thread, plus the record whose retire
    // triggered the event.
    std::size_t post_event_bound() const {
      return max_reservations * (threads - 1) + 1;
    }
    std::size_t steady_bound() const { return limbo_threshold + post_event_bound(); }
    std::size_t global_bound() const { return threads * steady_bound(); }
  };

  BoundMonitor(std::size_t max_threads, Bounds bounds)
      : bounds_(bounds), peak_(max_threads), post_event_peak_(max_threads) {}

  static constexpr std::uint64_t kSampleInterval = 1u << 16;

  void sample_steady(unsigned tid, std::size_t size) {
    update_max(peak_[tid], size);
  }

  void sample_post_event(unsigned tid, std::size_t size) {
    update_max(post_event_peak_[tid], size);
    update_max(peak_[tid], size);
  }

  std::size_t peak(unsigned tid) const {
    return peak_[tid].load(std::memory_order_relaxed);
  }
  std::size_t post_event_peak(unsigned tid) const {
    return post_event_peak_[tid].load(std::memory_order_relaxed);
  }

  std::size_t max_peak() const {
    std::size_t m = 0;
    for (auto& a : peak_) m = std::max(m, a.load(std::memory_order_relaxed));
    return m;
  }

  const Bounds& bounds() const { return bounds_; }

 private:
  static void update_max(std::atomic<std::size_t>& slot, std::size_t v) {
    auto cur = slot.load(std::memory_order_relaxed);
    while (v > cur && !slot.compare_exchange_weak(cur, v, std::memory_order_relaxed)) {
    }
  }

  Bounds bounds_;
  std::vector<std::atomic<std::size_t>> peak_;
  std::vector<std::atomic<std::size_t>> post_event_peak_;
};

/// Evaluates the bounded-garbage lemma against a finished run: every
/// post-event limbo size within k(p-1)+1 and every steady-state size
/// within S + k(p-1) + 1.
inline bool check_garbage_bound(const BoundMonitor& monitor) {
  const auto& b = monitor.bounds();
  for (unsigned tid = 0; tid < b.threads; ++tid) {
    if (monitor.post_event_peak(tid) > b.post_event_bound()) return false;
    if (monitor.peak(tid) > b.steady_bound()) return false;
  }
  return true;
}

}  // namespace nbr
