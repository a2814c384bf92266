#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <mutex>
#include <unordered_set>

#include "nbr/allocator.hpp"
#include "nbr/backend.hpp"
#include "nbr/config.hpp"
#include "nbr/registry.hpp"

namespace nbr {

/// Everything a reclaimer and its data structures share: configuration,
/// thread registry, record allocator, neutralization backend and the
/// global accounting used by validation and the benchmark harness.
class SmrDomain {
 public:
  explicit SmrDomain(Config cfg = {})
      : cfg_(std::move(cfg)),
        registry_(cfg_.max_threads),
        allocator_(cfg_.validation, cfg_.quarantine_capacity),
        backend_(make_backend(cfg_)) {
    cfg_.validate();
  }

  const Config& config() const { return cfg_; }
  ThreadRegistry& registry() { return registry_; }
  RecordAllocator& allocator() { return allocator_; }
  NeutralizeBackend& backend() { return *backend_; }
  bool validation() const { return cfg_.validation; }

  // -- retire/free accounting ----------------------------------------
  void note_retired(const RecordBase& rec) {
    retired_total_.fetch_add(1, std::memory_order_relaxed);
    auto cur = unreclaimed_.fetch_add(1, std::memory_order_relaxed) + 1;
    update_peak(cur);
    if (cfg_.validation) {
      std::lock_guard lock(retired_mu_);
      if (!retired_ids_.insert(rec.id).second)
        throw double_retire("record " + std::to_string(rec.id) + " retired twice");
    }
  }

  void note_freed(std::uint64_t n) {
    freed_total_.fetch_add(n, std::memory_order_relaxed);
    unreclaimed_.fetch_sub(static_cast<std::int64_t>(n), std::memory_order_relaxed);
  }

  void note_poison() { poison_detections_.fetch_add(1, std::memory_order_relaxed); }

  std::uint64_t retired_total() const { return retired_total_.load(std::memory_order_relaxed); }
  std::uint64_t freed_total() const { return freed_total_.load(std::memory_order_relaxed); }
  std::int64_t unreclaimed() const { return unreclaimed_.load(std::memory_order_relaxed); }
  std::int64_t peak_unreclaimed() const { return peak_unreclaimed_.load(std::memory_order_relaxed); }
  std::uint64_t poison_detections() const {
    return poison_detections_.load(std::memory_order_relaxed);
  }

  /// Test support: forget retire-once history (e.g. between scripted runs).
  void reset_retire_history() {
    std::lock_guard lock(retired_mu_);
    retired_ids_.clear();
  }

 private:
  void update_peak(std::int64_t cur) {
    auto peak = peak_unreclaimed_.load(std::memory_order_relaxed);
    while (cur > peak &&
           !peak_unreclaimed_.compare_exchange_weak(peak, cur, std::memory_order_relaxed)) {
    }
  }

  Config cfg_;
  ThreadRegistry registry_;
  RecordAllocator allocator_;
  std::unique_ptr<NeutralizeBackend> backend_;

  std::atomic<std::uint64_t> retired_total_{0};
  std::atomic<std::uint64_t> freed_total_{0};
  std::atomic<std::int64_t> unreclaimed_{0};
  std::atomic<std::int64_t> peak_unreclaimed_{0};
  std::atomic<std::uint64_t> poison_detections_{0};

  std::mutex retired_mu_;
  std::unordered_set<std::uint64_t> retired_ids_;
};

}  // namespace nbr
