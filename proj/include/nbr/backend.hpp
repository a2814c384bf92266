#pragma once

#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <csetjmp>
#include <csignal>
#include <memory>
#include <mutex>
#include <thread>

#include "nbr/config.hpp"
#include "nbr/registry.hpp"

namespace nbr {

/// Delivery mechanism for neutralization events. Both backends satisfy
/// the same delivery contract: once a broadcast completes, every thread
/// that was in a read phase during it has either restarted that phase or
/// entered a write phase whose reservations were published before its
/// restartable flag went observably false.
class NeutralizeBackend {
 public:
  virtual ~NeutralizeBackend() = default;
  virtual BackendKind kind() const = 0;

  /// Broadcasts a neutralize event to every registered thread except
  /// `from`. Blocking behaviour depends on the backend.
  virtual void broadcast(ThreadRegistry& reg, ThreadContext& from) = 0;

  /// Delivers a neutralize event to a single thread. Used by the
  /// interleaving runner and by self-neutralization tests; a full
  /// broadcast is post_one over all targets plus the completion wait.
  virtual void post_one(ThreadContext& target) = 0;

  bool cooperative() const { return kind() == BackendKind::cooperative; }
};

/// Flag-based backend. The broadcaster bumps a round counter, publishes
/// it to every target, then waits until each target has either
/// acknowledged the round (which implies it restarted) or been observed
/// non-restartable after the round began. Targets check their pending
/// round before every guarded load.
class CooperativeBackend final : public NeutralizeBackend {
 public:
  BackendKind kind() const override { return BackendKind::cooperative; }

  void broadcast(ThreadRegistry& reg, ThreadContext& from) override {
    const std::uint64_t round = round_.fetch_add(1, std::memory_order_seq_cst) + 1;
    const std::size_t n = reg.capacity();
    for (std::size_t i = 0; i < n; ++i) {
      ThreadContext& t = reg.slot(i);
      if (&t == &from || !t.registered()) continue;
      publish_round(t, round);
    }
    for (std::size_t i = 0; i < n; ++i) {
      ThreadContext& t = reg.slot(i);
      if (&t == &from) continue;
      wait_for(t, round);
    }
    from.broadcasts_sent.fetch_add(1, std::memory_order_relaxed);
  }

  void post_one(ThreadContext& target) override {
    const std::uint64_t round = round_.fetch_add(1, std::memory_order_seq_cst) + 1;
    publish_round(target, round);
  }

  /// Target-side check, called before every guarded load in a read
  /// phase. Acknowledges the newest pending round and restarts the read
  /// phase via the checkpoint. Does not return when a restart happens.
  static void poll(ThreadContext& ctx) {
    const auto pending = ctx.pending_round().load(std::memory_order_acquire);
    if (pending <= ctx.ack_round().load(std::memory_order_relaxed)) return;
    ctx.ack_round().store(pending, std::memory_order_seq_cst);
    siglongjmp(ctx.checkpoint_env(), 1);
  }

  std::uint64_t current_round() const { return round_.load(std::memory_order_relaxed); }

 private:
  static void publish_round(ThreadContext& t, std::uint64_t round) {
    auto& pending = t.pending_round();
    std::uint64_t cur = pending.load(std::memory_order_relaxed);
    while (cur < round &&
           !pending.compare_exchange_weak(cur, round, std::memory_order_seq_cst)) {
    }
  }

  static void wait_for(ThreadContext& t, std::uint64_t round) {
    unsigned spins = 0;
    for (;;) {
      if (!t.registered()) return;
      if (t.ack_round().load(std::memory_order_acquire) >= round) return;
      // Non-restartable after the round began: either in a write phase
      // with reservations already published, or holding no references.
      if (!t.restartable()) return;
      if (++spins < 64)
        ;
      else if (spins < 4096)
        std::this_thread::yield();
      else
        std::this_thread::sleep_for(std::chrono::microseconds(100));
    }
  }

  std::atomic<std::uint64_t> round_{0};
};

namespace detail {

inline void async_signal_handler(int) {
  ThreadContext* ctx = tls_context;
  if (ctx == nullptr) return;
  if (ctx->restartable())
    siglongjmp(ctx->checkpoint_env(), 1);  // restart the read phase
  ctx->handler_skips.fetch_add(1, std::memory_order_relaxed);
}

}  // namespace detail

/// POSIX-signal backend matching the original design: SIGUSR1 plus a
/// non-local jump out of the handler. Relies on the platform delivering
/// the signal before the target dereferences anything the broadcaster
/// frees; the cooperative backend is the verified path.
class AsyncSignalBackend final : public NeutralizeBackend {
 public:
  AsyncSignalBackend() { install_handler(); }

  BackendKind kind() const override { return BackendKind::async_interrupt; }

  void broadcast(ThreadRegistry& reg, ThreadContext& from) override {
    const std::size_t n = reg.capacity();
    for (std::size_t i = 0; i < n; ++i) {
      ThreadContext& t = reg.slot(i);
      if (&t == &from || !t.registered()) continue;
      post_one(t);
    }
    from.broadcasts_sent.fetch_add(1, std::memory_order_relaxed);
  }

  void post_one(ThreadContext& target) override {
    // Delivery to a thread that unregistered (and possibly exited)
    // between the registered() check and here is benign: an exiting
    // thread holds no references.
    if (pthread_kill(target.os_handle(), kSignal) != 0)
      delivery_failures_.fetch_add(1, std::memory_order_relaxed);
  }

  std::uint64_t delivery_failures() const {
    return delivery_failures_.load(std::memory_order_relaxed);
  }

  static constexpr int kSignal = SIGUSR1;

  static void install_handler() {
    static std::once_flag once;
    std::call_once(once, [] {
      struct sigaction sa {};
      sa.sa_handler = detail::async_signal_handler;
      sigemptyset(&sa.sa_mask);
      sa.sa_flags = 0;  // no SA_RESTART: a stalled syscall must wake up
      sigaction(kSignal, &sa, nullptr);
    });
  }

 private:
  std::atomic<std::uint64_t> delivery_failures_{0};
};

inline std::unique_ptr<NeutralizeBackend> make_backend(const Config& cfg) {
  switch (Config::backend_from_env(cfg.backend)) {
    case BackendKind::cooperative:
      return std::make_unique<CooperativeBackend>();
    case BackendKind::async_interrupt:
      return std::make_unique<AsyncSignalBackend>();
  }
  return nullptr;
}

}  // namespace nbr
