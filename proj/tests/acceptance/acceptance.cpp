// Acceptance gate: eight end-to-end criteria, each printing exactly one
// PASS/FAIL line on stdout. Run all with no arguments or one with
// --criterion N. Progress notes go to stderr.

#include <algorithm>
#include <atomic>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <random>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "nbr/bench.hpp"
#include "nbr/interleave.hpp"

using namespace nbr;

namespace {

void note(const char* fmt, ...) {
  va_list ap;
  va_start(ap, fmt);
  std::vfprintf(stderr, fmt, ap);
  va_end(ap);
  std::fputc('\n', stderr);
  std::fflush(stderr);
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// -- 1: safety stress --------------------------------------------------
// Quarantine-backed stress over every supported (structure, scheme)
// pair, 8 threads, update-intensive, cooperative delivery: zero poison
// detections.
bool criterion1(std::string& detail) {
  const std::pair<const char*, const char*> combos[] = {
      {"lazylist", "nbr"},    {"lazylist", "nbrplus"}, {"lazylist", "ebr"},
      {"lazylist", "hp"},     {"harrislist", "nbr"},   {"harrislist", "nbrplus"},
      {"harrislist", "ebr"}};
  std::uint64_t poison = 0;
  for (const auto& [ds, smr] : combos) {
    WorkloadSpec spec;
    spec.ds = ds;
    spec.smr = smr;
    spec.threads = 8;
    spec.duration_ms = 10000;
    spec.key_range = 2048;
    spec.mix = OpMix{50, 50, 0};
    spec.seed = 42;
    spec.config.limbo_threshold = 1024;
    spec.config.validation = true;
    spec.config.backend = BackendKind::cooperative;

    try {
      const TrialMetrics m = run_trial(spec);
      note("  c1 %s/%s: %.0f ops/s, retired=%llu freed=%llu poison=%llu", ds, smr,
           m.throughput, (unsigned long long)m.retired_total,
           (unsigned long long)m.freed_total, (unsigned long long)m.poison);
      poison += m.poison;
      if (m.retired_total != m.freed_total + (std::uint64_t)m.unreclaimed) {
        detail = std::string(ds) + "/" + smr + ": accounting imbalance";
        return false;
      }
    } catch (const std::exception& e) {
      detail = std::string(ds) + "/" + smr + ": " + e.what();
      return false;
    }
  }
  detail = "7 combos x 10 s, 8 threads, quarantine on: zero poison detections";
  return poison == 0;
}

// -- 2: detector power -------------------------------------------------
bool criterion2(std::string& detail) {
  std::uint64_t unreserved_poison = 0, watermark_poison = 0;
  {
    Config cfg;
    cfg.max_threads = 8;
    cfg.limbo_threshold = 1u << 20;
    cfg.validation = true;
    SmrDomain dom(cfg);
    NbrReclaimer r(dom);
    InterleaveRunner runner(dom, r);
    const ScriptVerdict v = runner.run(R"(
      0 alloc x
      0 link x
      1 begin_op
      1 begin_read
      1 deref x
      1 end_read        # x deliberately not reserved
      2 begin_op
      2 begin_read
      2 end_read
      2 unlink x
      2 retire x
      2 reclaim
      1 deref x         # write-phase access to the freed record
      1 end_op
      2 end_op
    )", 3);
    unreserved_poison = v.poison_detections;
  }
  {
    Config cfg;
    cfg.max_threads = 8;
    cfg.limbo_threshold = 1u << 20;
    cfg.validation = true;
    SmrDomain dom(cfg);
    NbrPlusReclaimer r(dom);
    InterleaveRunner runner(dom, r);
    const ScriptVerdict v = runner.run(R"(
      0 alloc x
      0 link x
      2 begin_op
      2 begin_read
      2 deref x
      1 begin_op
      1 begin_read
      1 end_read
      1 unlink x
      1 retire x
      1 lo_enter
      1 force_lo        # unsafe: no guarantee established
      2 deref x         # must hit poison
      1 end_op
    )", 3);
    watermark_poison = v.poison_detections;
  }
  detail = "unreserved-access trace: " + std::to_string(unreserved_poison) +
           " detection(s); premature watermark free: " +
           std::to_string(watermark_poison) + " detection(s)";
  return unreserved_poison >= 1 && watermark_poison >= 1;
}

// -- 3: bounded garbage under a stalled reader -------------------------
bool criterion3(std::string& detail) {
  const std::size_t S = 1024, R = 3, p = 8;
  const std::size_t bound = p * (S + R * (p - 1) + 1);  // 8 * 1046 = 8368
  auto stalled_run = [&](const char* smr) {
    WorkloadSpec spec;
    spec.ds = "lazylist";
    spec.smr = smr;
    spec.threads = p;
    spec.duration_ms = 5000;
    spec.key_range = 2048;
    spec.mix = OpMix{50, 50, 0};
    spec.seed = 9;
    spec.stall_tid = 0;
    spec.stall_ms = 5000;  // pinned inside one read phase past the end of the run
    spec.config.limbo_threshold = S;
    spec.config.max_reservations = R;
    return run_trial(spec);
  };
  const TrialMetrics plus = stalled_run("nbrplus");
  note("  c3 nbrplus: peak=%lld (bound %zu)", (long long)plus.peak_unreclaimed, bound);
  const TrialMetrics hp = stalled_run("hp");
  note("  c3 hp:      peak=%lld (bound %zu)", (long long)hp.peak_unreclaimed, bound);
  const TrialMetrics ebr = stalled_run("ebr");
  note("  c3 ebr:     peak=%lld (10x bound = %zu)", (long long)ebr.peak_unreclaimed,
       10 * bound);
  detail = "peaks: nbrplus=" + std::to_string(plus.peak_unreclaimed) +
           ", hp=" + std::to_string(hp.peak_unreclaimed) + " (bound " +
           std::to_string(bound) + "); ebr=" + std::to_string(ebr.peak_unreclaimed) +
           " (> " + std::to_string(10 * bound) + ")";
  return plus.peak_unreclaimed <= (std::int64_t)bound &&
         hp.peak_unreclaimed <= (std::int64_t)bound &&
         ebr.peak_unreclaimed > (std::int64_t)(10 * bound);
}

// -- 4: signal economy -------------------------------------------------
bool criterion4(std::string& detail) {
  auto run_scheme = [&](const char* smr, unsigned trial) {
    WorkloadSpec spec;
    spec.ds = "lazylist";
    spec.smr = smr;
    spec.threads = 8;
    // Long enough that steady-state resident bags are noise next to the
    // cumulative free counts the ratios compare.
    spec.duration_ms = 5000;
    spec.key_range = 2048;
    spec.mix = OpMix{50, 50, 0};
    spec.seed = 100 + trial;
    spec.config.limbo_threshold = 1024;
    spec.config.lo_watermark = 512;
    return run_trial(spec, trial);
  };
  std::vector<double> nbr_bc, plus_bc, nbr_freed, plus_freed;
  for (unsigned trial = 0; trial < 3; ++trial) {
    const TrialMetrics a = run_scheme("nbr", trial);
    const TrialMetrics b = run_scheme("nbrplus", trial);
    note("  c4 trial %u: broadcasts nbr=%llu nbrplus=%llu, freed nbr=%llu nbrplus=%llu",
         trial, (unsigned long long)a.broadcasts, (unsigned long long)b.broadcasts,
         (unsigned long long)a.freed_total, (unsigned long long)b.freed_total);
    nbr_bc.push_back((double)a.broadcasts);
    plus_bc.push_back((double)b.broadcasts);
    nbr_freed.push_back((double)a.freed_total);
    plus_freed.push_back((double)b.freed_total);
  }
  const double bc_ratio = median(plus_bc) / std::max(median(nbr_bc), 1.0);
  const double freed_ratio = median(plus_freed) / std::max(median(nbr_freed), 1.0);
  char buf[160];
  std::snprintf(buf, sizeof buf,
                "median broadcast ratio %.2f (need <= 0.60), freed ratio %.2f "
                "(need >= 0.90)",
                bc_ratio, freed_ratio);
  detail = buf;
  return bc_ratio <= 0.6 && freed_ratio >= 0.9;
}

// -- 5: guarantee-predicate unit suite + three-thread schedule ---------
bool criterion5(std::string& detail) {
  {
    const std::uint64_t scan[] = {4, 2, 6};
    const std::uint64_t cur_a[] = {6, 2, 6};
    const std::uint64_t cur_b[] = {5, 3, 7};
    if (!rgp_detected(scan, cur_a, 99) || rgp_detected(scan, cur_b, 99)) {
      detail = "pinned predicate examples disagree";
      return false;
    }
  }
  {
    const std::uint64_t scan[] = {5};  // odd: normalizes to 6
    const std::uint64_t at7[] = {7};
    const std::uint64_t at8[] = {8};
    if (rgp_detected(scan, at7, 99) || !rgp_detected(scan, at8, 99)) {
      detail = "odd-snapshot normalization boundary disagrees";
      return false;
    }
  }
  Config cfg;
  cfg.max_threads = 8;
  cfg.limbo_threshold = 1u << 20;
  cfg.validation = true;
  SmrDomain dom(cfg);
  NbrPlusReclaimer r(dom);
  InterleaveRunner runner(dom, r);
  const ScriptVerdict v = runner.run(R"(
    0 alloc x
    0 link x
    2 begin_op
    2 begin_read
    2 deref x
    1 begin_op
    1 begin_read
    1 end_read
    1 unlink x
    1 retire x
    1 lo_enter
    1 try_lo           # blocked: no broadcast since the snapshot
    0 begin_op
    0 begin_read
    0 end_read
    0 announce_begin
    0 broadcast
    2 deref x          # neutralized: restarts its read phase
    1 try_lo           # still blocked: the broadcaster's clock is odd
    0 announce_end
    1 try_lo           # now the guarantee holds
    2 expect_poisoned x
    2 end_read
    0 end_op
    1 end_op
    2 end_op
  )", 3);
  const StepOutcome want[] = {
      StepOutcome::ok, StepOutcome::ok, StepOutcome::ok, StepOutcome::ok,
      StepOutcome::ok, StepOutcome::ok, StepOutcome::ok, StepOutcome::ok,
      StepOutcome::ok, StepOutcome::ok, StepOutcome::ok, StepOutcome::blocked,
      StepOutcome::ok, StepOutcome::ok, StepOutcome::ok, StepOutcome::ok,
      StepOutcome::ok, StepOutcome::restarted, StepOutcome::blocked,
      StepOutcome::ok, StepOutcome::ok, StepOutcome::ok, StepOutcome::ok,
      StepOutcome::ok, StepOutcome::ok, StepOutcome::ok};
  if (v.outcomes.size() != std::size(want) ||
      !std::equal(v.outcomes.begin(), v.outcomes.end(), want)) {
    detail = "three-thread schedule produced unexpected outcomes";
    return false;
  }
  if (v.poison_detections != 0) {
    detail = "three-thread schedule detected poison";
    return false;
  }
  detail = "3 predicate examples exact; three-thread schedule: premature "
           "reclaims blocked, no poison";
  return true;
}

// -- 6: set semantics --------------------------------------------------
bool criterion6(std::string& detail) {
  const std::pair<const char*, const char*> combos[] = {
      {"lazylist", "nbr"},     {"lazylist", "nbrplus"}, {"lazylist", "ebr"},
      {"lazylist", "hp"},      {"lazylist", "leaky"},   {"harrislist", "nbr"},
      {"harrislist", "nbrplus"}, {"harrislist", "ebr"}, {"harrislist", "leaky"}};
  for (const auto& [ds, smr] : combos) {
    // Concurrent run: post-run structural invariants.
    Config cfg;
    cfg.limbo_threshold = 512;
    SmrDomain dom(cfg);
    auto rec = make_reclaimer(smr, dom);
    nbr::detail::AnyList list = nbr::detail::AnyList::make(ds, *rec);
    const long long key_range = 512;
    std::size_t prefill = 0;
    {
      ThreadContext& ctx = dom.registry().register_thread();
      for (long long k = 0; k < key_range; k += 2) {
        list.insert(ctx, k);
        ++prefill;
      }
      rec->unregister_drain(ctx);
      dom.registry().unregister_thread(ctx);
    }
    std::atomic<std::uint64_t> inserted{0}, removed{0};
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < 8; ++w) {
      pool.emplace_back([&, w] {
        ThreadContext& ctx = dom.registry().register_thread();
        std::mt19937_64 rng(500 + w);
        std::uint64_t ins = 0, rem = 0;
        for (int i = 0; i < 30000; ++i) {
          const long long key = (long long)(rng() % key_range);
          switch (rng() % 3) {
            case 0: ins += list.insert(ctx, key); break;
            case 1: rem += list.erase(ctx, key); break;
            default: list.contains(ctx, key);
          }
        }
        inserted.fetch_add(ins);
        removed.fetch_add(rem);
        rec->unregister_drain(ctx);
        dom.registry().unregister_thread(ctx);
      });
    }
    for (auto& t : pool) t.join();
    const std::vector<long long> keys =
        list.lazy ? list.lazy->unsafe_keys() : list.harris->unsafe_keys();
    if (!std::is_sorted(keys.begin(), keys.end()) ||
        std::adjacent_find(keys.begin(), keys.end()) != keys.end()) {
      detail = std::string(ds) + "/" + smr + ": not a sorted duplicate-free set";
      return false;
    }
    if (keys.size() != prefill + inserted.load() - removed.load()) {
      detail = std::string(ds) + "/" + smr + ": size " + std::to_string(keys.size()) +
               " != prefill + inserted - removed";
      return false;
    }
    note("  c6 %s/%s: concurrent invariants hold (%zu keys)", ds, smr, keys.size());

    // Single-threaded run against a sequential oracle.
    SmrDomain sdom(cfg);
    auto srec = make_reclaimer(smr, sdom);
    nbr::detail::AnyList slist = nbr::detail::AnyList::make(ds, *srec);
    ThreadContext& ctx = sdom.registry().register_thread();
    std::set<long long> oracle;
    std::mt19937_64 rng(77);
    for (int i = 0; i < 6000; ++i) {
      const long long key = (long long)(rng() % 64);
      bool got, want;
      switch (rng() % 3) {
        case 0:
          got = slist.insert(ctx, key);
          want = oracle.insert(key).second;
          break;
        case 1:
          got = slist.erase(ctx, key);
          want = oracle.erase(key) == 1;
          break;
        default:
          got = slist.contains(ctx, key);
          want = oracle.count(key) == 1;
      }
      if (got != want) {
        detail = std::string(ds) + "/" + smr + ": diverged from the oracle at op " +
                 std::to_string(i);
        return false;
      }
    }
    const std::vector<long long> skeys =
        slist.lazy ? slist.lazy->unsafe_keys() : slist.harris->unsafe_keys();
    if (skeys != std::vector<long long>(oracle.begin(), oracle.end())) {
      detail = std::string(ds) + "/" + smr + ": final content differs from the oracle";
      return false;
    }
    srec->unregister_drain(ctx);
    sdom.registry().unregister_thread(ctx);
  }
  detail = "9 combos: sorted, duplicate-free, size balanced; single-threaded "
           "runs match the sequential oracle exactly";
  return true;
}

// -- 7: multi-phase restart discipline ---------------------------------
bool criterion7(std::string& detail) {
  for (unsigned target_phase = 1; target_phase <= 2; ++target_phase) {
    Config cfg;
    cfg.max_threads = 8;
    cfg.limbo_threshold = 1u << 20;
    cfg.validation = true;  // restart-from-root check armed
    SmrDomain dom(cfg);
    NbrReclaimer r(dom);
    HarrisList list(r);
    ThreadContext& ctx = dom.registry().register_thread();
    for (long long k : {1, 2, 3, 4, 6, 10})
      if (!list.insert(ctx, k)) {
        detail = "setup insert failed";
        return false;
      }
    // Mark 3 so insert(9) runs two distinct read phases: segment unlink,
    // then re-traversal and link.
    HarrisNode* n = harris_ref(list.head()->next.load());
    while (n->key != 3) n = harris_ref(n->next.load());
    n->next.fetch_or(1, std::memory_order_seq_cst);

    bool injected = false;
    ctx.read_phase_hook = [&](ThreadContext& c, unsigned idx) {
      if (idx == target_phase && !injected) {
        injected = true;
        dom.backend().post_one(c);  // neutralize this phase mid-flight
      }
    };
    const std::uint64_t restarts_before = ctx.restart_count();
    bool ok;
    try {
      ok = list.insert(ctx, 9);
    } catch (const std::exception& e) {
      detail = "phase " + std::to_string(target_phase) + " injection: " + e.what();
      return false;
    }
    ctx.read_phase_hook = nullptr;
    const std::uint64_t restarts = ctx.restart_count() - restarts_before;
    note("  c7 phase %u: injected=%d restarts=%llu", target_phase, (int)injected,
         (unsigned long long)restarts);
    const std::vector<long long> want{1, 2, 4, 6, 9, 10};
    if (!ok || !injected || restarts < 1 || list.unsafe_keys() != want) {
      detail = "phase " + std::to_string(target_phase) +
               " injection: wrong result or missing restart";
      return false;
    }
    r.unregister_drain(ctx);
    dom.registry().unregister_thread(ctx);
  }
  detail = "neutralization in each of the two read phases: operation completes, "
           "restarts counted, restart-from-root never violated";
  return true;
}

// -- 8: relative performance sanity ------------------------------------
bool criterion8(std::string& detail) {
  auto run_scheme = [&](const char* smr, unsigned trial) {
    WorkloadSpec spec;
    spec.ds = "lazylist";
    spec.smr = smr;
    spec.threads = 8;
    spec.duration_ms = 3000;
    spec.key_range = 2048;
    spec.mix = OpMix{5, 5, 90};
    spec.seed = 300 + trial;
    spec.config.limbo_threshold = 1024;
    return run_trial(spec, trial);
  };
  std::vector<double> plus_tp, hp_tp;
  for (unsigned trial = 0; trial < 3; ++trial) {
    const double a = run_scheme("nbrplus", trial).throughput;
    const double b = run_scheme("hp", trial).throughput;
    note("  c8 trial %u: nbrplus=%.0f ops/s, hp=%.0f ops/s", trial, a, b);
    plus_tp.push_back(a);
    hp_tp.push_back(b);
  }
  char buf[120];
  std::snprintf(buf, sizeof buf,
                "search-intensive medians: nbrplus %.0f ops/s vs hp %.0f ops/s",
                median(plus_tp), median(hp_tp));
  detail = buf;
  return median(plus_tp) >= median(hp_tp);
}

}  // namespace

int main(int argc, char** argv) {
  int only = 0;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--criterion") == 0 && i + 1 < argc)
      only = std::atoi(argv[++i]);
  }
  using Fn = bool (*)(std::string&);
  const Fn criteria[] = {criterion1, criterion2, criterion3, criterion4,
                         criterion5, criterion6, criterion7, criterion8};
  bool all_ok = true;
  for (int n = 1; n <= 8; ++n) {
    if (only != 0 && only != n) continue;
    std::string detail;
    bool ok;
    try {
      ok = criteria[n - 1](detail);
    } catch (const std::exception& e) {
      ok = false;
      detail = std::string("unexpected exception: ") + e.what();
    }
    std::printf("criterion %d: %s — %s\n", n, ok ? "PASS" : "FAIL", detail.c_str());
    std::fflush(stdout);
    all_ok = all_ok && ok;
  }
  return all_ok ? 0 : 1;
}
