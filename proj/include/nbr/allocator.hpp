#pragma once

#include <atomic>
#include <cstdint>
#include <cstring>
#include <deque>
#include <mutex>
#include <new>

#include "nbr/record.hpp"

namespace nbr {

/// Allocator for shared records. In validation mode freed blocks are
/// poisoned and parked in a FIFO quarantine before the real release, so
/// a use-after-free shows up as a magic-word mismatch instead of heap
/// corruption. Without validation it is a thin wrapper over operator new.
///
/// Internally synchronized; callable from all threads.
class RecordAllocator {
 public:
  explicit RecordAllocator(bool quarantine_enabled = false,
                           std::size_t quarantine_capacity = 1u << 20)
      : quarantine_enabled_(quarantine_enabled),
        quarantine_capacity_(quarantine_capacity) {}

  ~RecordAllocator() { drain_quarantine(); }

  RecordAllocator(const RecordAllocator&) = delete;
  RecordAllocator& operator=(const RecordAllocator&) = delete;

  /// Allocates and header-initializes a record of concrete type T.
  template <typename T, typename... Args>
  T* create(Args&&... args) {
    static_assert(std::is_base_of_v<RecordBase, T>);
    static_assert(std::is_trivially_destructible_v<T>,
                  "records must be trivially discardable");
    T* rec = new T(std::forward<Args>(args)...);
    rec->magic = kLiveMagic;
    rec->id = next_record_id();
    rec->payload_size = sizeof(T);
    rec->state.store(static_cast<std::uint8_t>(Lifecycle::allocated),
                     std::memory_order_release);
    allocated_.fetch_add(1, std::memory_order_relaxed);
    return rec;
  }

  /// Releases a record that completed the full lifecycle (state must
  /// already be `reclaimed`). Poisons and quarantines in validation mode.
  void release(RecordBase* rec) {
    freed_.fetch_add(1, std::memory_order_relaxed);
    if (!quarantine_enabled_) {
      ::operator delete(static_cast<void*>(rec));
      return;
    }
    poison(rec);
    std::lock_guard lock(mu_);
    quarantine_.push_back(rec);
    while (quarantine_.size() > quarantine_capacity_) {
      ::operator delete(static_cast<void*>(quarantine_.front()));
      quarantine_.pop_front();
    }
  }

  /// Discards a record that was never linked into the structure
  /// (e.g. a node built for a CAS that lost). Bypasses the lifecycle.
  void discard(RecordBase* rec) {
    rec->magic = 0;
    ::operator delete(static_cast<void*>(rec));
    allocated_.fetch_sub(1, std::memory_order_relaxed);
  }

  bool quarantine_enabled() const { return quarantine_enabled_; }
  std::uint64_t allocated_count() const { return allocated_.load(std::memory_order_relaxed); }
  std::uint64_t freed_count() const { return freed_.load(std::memory_order_relaxed); }

  std::size_t quarantine_size() const {
    std::lock_guard lock(mu_);
    return quarantine_.size();
  }

 private:
  static void poison(RecordBase* rec) {
    const auto size = rec->payload_size ? rec->payload_size : sizeof(RecordBase);
    rec->magic = kPoisonMagic;
    // Fill everything past the header so stale next-pointers are garbage too.
    auto* bytes = reinterpret_cast<unsigned char*>(rec);
    for (std::size_t i = sizeof(RecordBase); i < size; ++i) bytes[i] = 0xef;
  }

  void drain_quarantine() {
    std::lock_guard lock(mu_);
    for (RecordBase* rec : quarantine_) ::operator delete(static_cast<void*>(rec));
    quarantine_.clear();
  }

  const bool quarantine_enabled_;
  const std::size_t quarantine_capacity_;
  mutable std::mutex mu_;
  std::deque<RecordBase*> quarantine_;
  std::atomic<std::uint64_t> allocated_{0};
  std::atomic<std::uint64_t> freed_{0};
};

}  // namespace nbr
