#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <fstream>
#include <memory>
#include <mutex>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "nbr/baselines.hpp"
#include "nbr/harrislist.hpp"
#include "nbr/lazylist.hpp"
#include "nbr/nbrplus.hpp"

namespace nbr {

/// Operation mix in percent; the remainder up to 100 is ignored (the
/// three shares must sum to 100).
struct OpMix {
  unsigned insert = 50;
  unsigned erase = 50;
  unsigned search = 0;

  std::string to_string() const {
    return std::to_string(insert) + ":" + std::to_string(erase) + ":" +
           std::to_string(search);
  }

  static OpMix parse(const std::string& s) {
    OpMix m;
    char c1 = 0, c2 = 0;
    std::istringstream in(s);
    if (!(in >> m.insert >> c1 >> m.erase >> c2 >> m.search) || c1 != ':' || c2 != ':')
      throw invalid_spec("workload must be '<insert>:<erase>:<search>', got '" + s + "'");
    if (m.insert + m.erase + m.search != 100)
      throw invalid_spec("workload shares must sum to 100, got '" + s + "'");
    return m;
  }
};

/// Full specification of one benchmark trial.
struct WorkloadSpec {
  std::string ds = "lazylist";  // lazylist | harrislist
  std::string smr = "nbr";      // nbr | nbrplus | ebr | hp | leaky
  unsigned threads = 4;
  unsigned duration_ms = 1000;
  std::uint64_t op_limit = 0;  // per thread; 0 = run for duration_ms
  long long key_range = 2048;
  OpMix mix;
  std::uint64_t seed = 1;
  int stall_tid = -1;          // worker index to stall, -1 = none
  unsigned stall_ms = 0;       // how long the stalled read phase sleeps
  Config config;               // backend, thresholds, validation

  std::string workload_label() const {
    std::string label = mix.to_string();
    if (stall_tid >= 0) label += "@stall";
    return label;
  }
};

/// Everything measured in one trial. The counter identity
/// retired == freed + unreclaimed holds at capture time (after the
/// workers stop, before their limbo bags are drained).
struct TrialMetrics {
  std::string ds, smr, backend, workload;
  unsigned threads = 0;
  unsigned trial = 0;
  double throughput = 0.0;  // operations per second over the whole run
  std::uint64_t ops = 0;
  std::uint64_t broadcasts = 0;
  std::uint64_t restarts = 0;
  std::int64_t peak_unreclaimed = 0;
  std::uint64_t freed_total = 0;
  std::uint64_t retired_total = 0;
  std::int64_t unreclaimed = 0;
  std::uint64_t handler_skips = 0;
  std::uint64_t poison = 0;  // quarantine detections (validation builds only)
  double duration_s = 0.0;
  // Result-kind counters; used by the fixed-op-count determinism check.
  std::uint64_t insert_hit = 0, insert_miss = 0;
  std::uint64_t erase_hit = 0, erase_miss = 0;
  std::uint64_t search_hit = 0, search_miss = 0;
};

inline std::unique_ptr<Reclaimer> make_reclaimer(const std::string& name,
                                                 SmrDomain& dom) {
  if (name == "nbr") return std::make_unique<NbrReclaimer>(dom);
  if (name == "nbrplus") return std::make_unique<NbrPlusReclaimer>(dom);
  if (name == "ebr") return std::make_unique<EbrReclaimer>(dom);
  if (name == "hp") return std::make_unique<HpReclaimer>(dom);
  if (name == "leaky") return std::make_unique<LeakyReclaimer>(dom);
  throw invalid_spec("unknown reclamation scheme: " + name);
}

namespace detail {

/// Uniform facade over the two list types.
struct AnyList {
  std::unique_ptr<LazyList> lazy;
  std::unique_ptr<HarrisList> harris;

  static AnyList make(const std::string& ds, Reclaimer& r) {
    AnyList l;
    if (ds == "lazylist")
      l.lazy = std::make_unique<LazyList>(r);
    else if (ds == "harrislist")
      l.harris = std::make_unique<HarrisList>(r);
    else
      throw invalid_spec("unknown data structure: " + ds);
    return l;
  }

  bool insert(ThreadContext& ctx, long long k) {
    return lazy ? lazy->insert(ctx, k) : harris->insert(ctx, k);
  }
  bool erase(ThreadContext& ctx, long long k) {
    return lazy ? lazy->erase(ctx, k) : harris->erase(ctx, k);
  }
  bool contains(ThreadContext& ctx, long long k) {
    return lazy ? lazy->contains(ctx, k) : harris->contains(ctx, k);
  }
};

}  // namespace detail

/// Runs one trial: builds a fresh domain, reclaimer and structure,
/// prefills to half the key range, runs the workers, and captures the
/// metrics after the workers stop but before their retired records are
/// drained (so the memory counters describe the steady state, not the
/// teardown).
inline TrialMetrics run_trial(const WorkloadSpec& spec, unsigned trial = 0) {
  SmrDomain dom(spec.config);
  std::unique_ptr<Reclaimer> rec = make_reclaimer(spec.smr, dom);
  detail::AnyList list = detail::AnyList::make(spec.ds, *rec);

  {  // prefill to the expected steady-state size
    ThreadContext& ctx = dom.registry().register_thread();
    std::mt19937_64 rng(spec.seed * 0x9e3779b97f4a7c15ull + 1);
    const long long target = spec.key_range / 2;
    for (long long filled = 0; filled < target;)
      if (list.insert(ctx, static_cast<long long>(rng() % spec.key_range))) ++filled;
    rec->unregister_drain(ctx);
    dom.registry().unregister_thread(ctx);
  }

  struct WorkerStats {
    std::uint64_t ops = 0;
    std::uint64_t results[6] = {0, 0, 0, 0, 0, 0};
    std::uint64_t restarts = 0;
    std::uint64_t broadcasts = 0;
    std::uint64_t handler_skips = 0;
  };
  std::vector<WorkerStats> stats(spec.threads);

  std::atomic<bool> go{false}, stop{false};
  std::atomic<unsigned> measured{0};
  std::mutex mu;
  std::condition_variable cv;
  bool drain_go = false;

  auto worker = [&](unsigned wid) {
    ThreadContext& ctx = dom.registry().register_thread();
    std::mt19937_64 rng(spec.seed * 0x9e3779b97f4a7c15ull + wid + 2);
    WorkerStats local;
    while (!go.load(std::memory_order_acquire)) std::this_thread::yield();

    const auto start = std::chrono::steady_clock::now();
    bool stalled_yet = false;
    for (std::uint64_t i = 0; spec.op_limit == 0 || i < spec.op_limit; ++i) {
      if (spec.op_limit == 0 && stop.load(std::memory_order_relaxed)) break;
      if (static_cast<int>(wid) == spec.stall_tid && !stalled_yet &&
          std::chrono::steady_clock::now() - start >
              std::chrono::milliseconds(spec.duration_ms / 10)) {
        // One read phase that sleeps through the stall window without
        // polling. Under async delivery a neutralize signal interrupts
        // the sleep and restarts the phase; the hook then sleeps only
        // up to the original deadline.
        stalled_yet = true;
        const auto deadline =
            std::chrono::steady_clock::now() + std::chrono::milliseconds(spec.stall_ms);
        ctx.read_phase_hook = [deadline](ThreadContext&, unsigned) {
          while (std::chrono::steady_clock::now() < deadline)
            std::this_thread::sleep_for(std::chrono::milliseconds(1));
        };
        list.contains(ctx, 0);
        ctx.read_phase_hook = nullptr;
      }
      const long long key = static_cast<long long>(rng() % spec.key_range);
      const unsigned dice = static_cast<unsigned>(rng() % 100);
      bool hit;
      unsigned kind;
      if (dice < spec.mix.insert) {
        hit = list.insert(ctx, key);
        kind = 0;
      } else if (dice < spec.mix.insert + spec.mix.erase) {
        hit = list.erase(ctx, key);
        kind = 2;
      } else {
        hit = list.contains(ctx, key);
        kind = 4;
      }
      ++local.results[kind + (hit ? 0 : 1)];
      ++local.ops;
    }
    local.restarts = ctx.restart_count();
    local.broadcasts = ctx.broadcasts_sent.load(std::memory_order_relaxed);
    local.handler_skips = ctx.handler_skips.load(std::memory_order_relaxed);
    stats[wid] = local;
    measured.fetch_add(1, std::memory_order_release);
    {  // hold the slot until the main thread captured the metrics
      std::unique_lock lock(mu);
      cv.wait(lock, [&] { return drain_go; });
    }
    rec->unregister_drain(ctx);
    dom.registry().unregister_thread(ctx);
  };

  std::vector<std::thread> threads;
  for (unsigned i = 0; i < spec.threads; ++i) threads.emplace_back(worker, i);
  const auto t0 = std::chrono::steady_clock::now();
  go.store(true, std::memory_order_release);
  if (spec.op_limit == 0) {
    std::this_thread::sleep_for(std::chrono::milliseconds(spec.duration_ms));
    stop.store(true, std::memory_order_release);
  }
  while (measured.load(std::memory_order_acquire) != spec.threads)
    std::this_thread::sleep_for(std::chrono::milliseconds(1));
  const double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  TrialMetrics m;
  m.ds = spec.ds;
  m.smr = spec.smr;
  m.backend = to_string(dom.backend().kind());
  m.workload = spec.workload_label();
  m.threads = spec.threads;
  m.trial = trial;
  m.duration_s = elapsed;
  for (const auto& s : stats) {
    m.ops += s.ops;
    m.restarts += s.restarts;
    m.broadcasts += s.broadcasts;
    m.handler_skips += s.handler_skips;
    m.insert_hit += s.results[0];
    m.insert_miss += s.results[1];
    m.erase_hit += s.results[2];
    m.erase_miss += s.results[3];
    m.search_hit += s.results[4];
    m.search_miss += s.results[5];
  }
  m.throughput = elapsed > 0 ? static_cast<double>(m.ops) / elapsed : 0.0;
  m.peak_unreclaimed = dom.peak_unreclaimed();
  m.freed_total = dom.freed_total();
  m.retired_total = dom.retired_total();
  m.unreclaimed = dom.unreclaimed();
  m.poison = dom.poison_detections();

  {
    std::lock_guard lock(mu);
    drain_go = true;
  }
  cv.notify_all();
  for (auto& t : threads) t.join();
  return m;
}

// -- CSV --------------------------------------------------------------

inline constexpr const char* kCsvHeader =
    "ds,smr,backend,threads,workload,trial,throughput,broadcasts,restarts,"
    "peak_unreclaimed,freed_total";

inline void export_csv(const std::string& path, const std::vector<TrialMetrics>& rows) {
  std::ofstream out(path);
  if (!out) throw io_failure("cannot open " + path + " for writing");
  out << kCsvHeader << "\n";
  for (const TrialMetrics& m : rows) {
    out << m.ds << ',' << m.smr << ',' << m.backend << ',' << m.threads << ','
        << m.workload << ',' << m.trial << ',' << m.throughput << ',' << m.broadcasts
        << ',' << m.restarts << ',' << m.peak_unreclaimed << ',' << m.freed_total
        << "\n";
  }
  if (!out) throw io_failure("write to " + path + " failed");
}

/// Reads back a results file written by export_csv (used by the plot
/// generator). Only the fixed columns are populated.
inline std::vector<TrialMetrics> import_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_failure("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw malformed_csv(path + ": empty file");
  if (line != kCsvHeader) throw malformed_csv(path + ": unexpected header '" + line + "'");
  std::vector<TrialMetrics> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    TrialMetrics m;
    std::string cell;
    auto next = [&](const char* what) {
      if (!std::getline(ls, cell, ','))
        throw malformed_csv(path + ":" + std::to_string(lineno) + ": missing " + what);
      return cell;
    };
    try {
      m.ds = next("ds");
      m.smr = next("smr");
      m.backend = next("backend");
      m.threads = static_cast<unsigned>(std::stoul(next("threads")));
      m.workload = next("workload");
      m.trial = static_cast<unsigned>(std::stoul(next("trial")));
      m.throughput = std::stod(next("throughput"));
      m.broadcasts = std::stoull(next("broadcasts"));
      m.restarts = std::stoull(next("restarts"));
      m.peak_unreclaimed = std::stoll(next("peak_unreclaimed"));
      m.freed_total = std::stoull(next("freed_total"));
    } catch (const std::logic_error&) {
      throw malformed_csv(path + ":" + std::to_string(lineno) + ": bad numeric field");
    }
    rows.push_back(std::move(m));
  }
  return rows;
}

}  // namespace nbr
