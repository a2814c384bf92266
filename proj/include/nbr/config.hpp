#pragma once

#include <cstdlib>
#include <cstddef>
#include <string>

#include "nbr/errors.hpp"

namespace nbr {

enum class BackendKind {
  cooperative,     // pending-flag + ack handshake checked on every guarded load
  async_interrupt, // POSIX signal + non-local jump
};

inline const char* to_string(BackendKind k) {
  return k == BackendKind::cooperative ? "cooperative" : "async-interrupt";
}

inline BackendKind backend_from_string(const std::string& s) {
  if (s == "cooperative") return BackendKind::cooperative;
  if (s == "async-interrupt" || s == "async") return BackendKind::async_interrupt;
  throw invalid_spec("unknown backend: " + s);
}

/// Tunables shared by the reclaimers. Defaults follow the reference
/// configuration: limbo threshold 32768 records, at most 3 reservations
/// per operation, lo watermark at half the threshold.
struct Config {
  std::size_t max_threads = 64;        // registry capacity N
  std::size_t limbo_threshold = 32768; // S, counted in records
  std::size_t max_reservations = 3;    // R, strictly less than S
  std::size_t lo_watermark = 0;        // 0 means limbo_threshold / 2
  std::size_t scan_amortization = 64;  // announce-clock rescan interval on the lo path
  std::size_t hp_scan_threshold = 64;  // retired-set size that triggers an HP scan
  std::size_t ebr_advance_interval = 64;
  BackendKind backend = BackendKind::cooperative;

  /// Validation machinery: quarantine/poison allocator, retire-once
  /// bookkeeping, strict write-phase reservation checks. Off by default;
  /// the benchmark hot path pays only a relaxed flag load when off.
  bool validation = false;
  std::size_t quarantine_capacity = 1u << 20;  // blocks held before real release
  /// When true, clears a thread's reservation row at end_op instead of
  /// leaving it published until the next begin_read_phase.
  bool clear_reservations_at_end_op = false;

  std::size_t effective_lo() const {
    return lo_watermark ? lo_watermark : limbo_threshold / 2;
  }

  void validate() const {
    if (max_reservations >= limbo_threshold)
      throw invalid_spec("max_reservations must be strictly less than limbo_threshold");
    if (max_threads == 0) throw invalid_spec("max_threads must be positive");
    if (effective_lo() > limbo_threshold)
      throw invalid_spec("lo_watermark must not exceed limbo_threshold");
  }

  /// Applies the NBR_BACKEND environment override, if set.
  static BackendKind backend_from_env(BackendKind fallback) {
    if (const char* env = std::getenv("NBR_BACKEND")) return backend_from_string(env);
    return fallback;
  }
};

}  // namespace nbr
