#pragma once

#include <condition_variable>
#include <exception>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "nbr/nbrplus.hpp"

namespace nbr {

/// Record type used by scripted traces: one guarded payload field.
struct ScriptRecord : RecordBase {
  std::atomic<std::uint64_t> payload{0};
};
static_assert(std::is_trivially_destructible_v<ScriptRecord>);

/// One scripted step: a worker id, an operation and its arguments.
struct ScriptStep {
  unsigned tid = 0;
  std::string op;
  std::vector<std::string> args;
  std::size_t line = 0;
};

enum class StepOutcome { ok, restarted, poison, blocked, failed };

inline const char* to_string(StepOutcome o) {
  switch (o) {
    case StepOutcome::ok:        return "ok";
    case StepOutcome::restarted: return "restarted";
    case StepOutcome::poison:    return "poison";
    case StepOutcome::blocked:   return "blocked";
    case StepOutcome::failed:    return "failed";
  }
  return "?";
}

/// Parses an interleaving script: one step per line, `<tid> <op> [args]`,
/// `#` comments and blank lines ignored.
inline std::vector<ScriptStep> parse_script(const std::string& text) {
  std::vector<ScriptStep> steps;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    ScriptStep s;
    s.line = lineno;
    if (!(ls >> s.tid >> s.op))
      throw script_error("line " + std::to_string(lineno) + ": expected '<tid> <op>'");
    std::string a;
    while (ls >> a) s.args.push_back(a);
    steps.push_back(std::move(s));
  }
  return steps;
}

/// Outcome log of a finished script run.
struct ScriptVerdict {
  std::vector<StepOutcome> outcomes;
  std::vector<std::string> messages;  // non-empty for failed steps
  std::uint64_t poison_detections = 0;
  std::uint64_t restarts = 0;
  bool all_ok() const {
    for (auto o : outcomes)
      if (o != StepOutcome::ok) return false;
    return true;
  }
};

/// Deterministic interleaving runner: executes a script one step at a
/// time on a fixed set of worker threads, each owning a registered
/// ThreadContext with a live read-phase checkpoint. A neutralization
/// restart that lands mid-step completes that step with outcome
/// `restarted`.
///
/// Step vocabulary (args in <>):
///   alloc <r>            allocate a record and bind it to a name
///   link <r>             advance the record to reachable
///   begin_op / end_op    operation brackets
///   begin_read           enter a read phase (captures the checkpoint)
///   end_read [<r>...]    leave the read phase reserving the named records
///   deref <r>            guarded access to the record's payload
///   unlink <r>           advance to unlinked (write phase)
///   retire <r>           hand the record to the reclaimer
///   reclaim              forced broadcast + full-tail reclamation
///   post <tid>           deliver a neutralize event to one worker
///   announce_begin/_end  bracket a broadcast on the announce clock (+)
///   lo_enter             start a low-watermark episode (+)
///   try_lo               reclaim the bookmark iff the guarantee holds,
///                        else outcome `blocked` (+)
///   force_lo             reclaim the bookmark unconditionally (+)
///   expect_live <r>      fails unless the record header is unpoisoned
///   expect_poisoned <r>  fails unless the record header is poisoned
/// (+) requires the watermark reclaimer.
class InterleaveRunner {
 public:
  InterleaveRunner(SmrDomain& dom, NbrReclaimer& r)
      : dom_(dom), r_(r), plus_(dynamic_cast<NbrPlusReclaimer*>(&r)) {}

  ~InterleaveRunner() {
    if (!workers_.empty()) {
      stop_workers();
      workers_.clear();
    }
  }

  ScriptVerdict run(const std::vector<ScriptStep>& steps, unsigned workers) {
    ScriptVerdict verdict;
    for (const ScriptStep& s : steps)
      if (s.tid >= workers)
        throw script_error("line " + std::to_string(s.line) + ": worker " +
                           std::to_string(s.tid) + " out of range");
    start_workers(workers);
    for (const ScriptStep& s : steps) {
      Completion done = dispatch(s);
      if (done.fatal) {  // malformed script: shut down, then surface it
        stop_workers();
        workers_.clear();
        std::rethrow_exception(done.fatal);
      }
      verdict.outcomes.push_back(done.outcome);
      verdict.messages.push_back(done.message);
    }
    stop_workers();
    verdict.poison_detections = dom_.poison_detections();
    for (auto& w : workers_) verdict.restarts += w->restarts_seen;
    workers_.clear();
    return verdict;
  }

  ScriptVerdict run(const std::string& script, unsigned workers) {
    return run(parse_script(script), workers);
  }

 private:
  struct Completion {
    StepOutcome outcome = StepOutcome::ok;
    std::string message;
    std::exception_ptr fatal;  // script_error raised while executing
  };

  struct Worker {
    std::thread thread;
    std::mutex mu;
    std::condition_variable cv;
    const ScriptStep* pending = nullptr;  // owned by dispatch()
    bool shutdown = false;
    bool done = false;
    Completion completion;
    ThreadContext* ctx = nullptr;
    std::uint64_t restarts_seen = 0;
  };

  void start_workers(unsigned n) {
    workers_.clear();
    for (unsigned i = 0; i < n; ++i) {
      auto w = std::make_unique<Worker>();
      Worker* wp = w.get();
      wp->thread = std::thread([this, wp] { session(*wp); });
      workers_.push_back(std::move(w));
    }
    // Wait until every worker registered so post targets resolve.
    for (auto& w : workers_) {
      std::unique_lock lock(w->mu);
      w->cv.wait(lock, [&] { return w->ctx != nullptr; });
    }
  }

  void stop_workers() {
    // Notify everyone before joining anyone: a draining worker's
    // broadcast completes only once the others have left their phases.
    for (auto& w : workers_) {
      {
        std::lock_guard lock(w->mu);
        w->shutdown = true;
      }
      w->cv.notify_all();
    }
    for (auto& w : workers_) w->thread.join();
    release_unretired();
  }

  void release_unretired() {
    for (auto& [name, rec] : records_)
      if (!retired_names_.count(name)) dom_.allocator().discard(rec);
    records_.clear();
    retired_names_.clear();
  }

  Completion dispatch(const ScriptStep& s) {
    Worker& w = *workers_[s.tid];
    {
      std::lock_guard lock(w.mu);
      w.pending = &s;
      w.done = false;
    }
    w.cv.notify_all();
    std::unique_lock lock(w.mu);
    w.cv.wait(lock, [&] { return w.done; });
    return w.completion;
  }

  void session(Worker& w) {
    ThreadContext& ctx = dom_.registry().register_thread();
    // Deliberately broken traces must reach the poison detector, not a
    // reservation assertion.
    ctx.strict_reservation_check = false;
    {
      std::lock_guard lock(w.mu);
      w.ctx = &ctx;
    }
    w.cv.notify_all();

    // Checkpoint for the whole session: a restart lands here, completes
    // the interrupted step and returns to the step loop.
    if (NBR_CAPTURE_CHECKPOINT(ctx)) {
      r_.on_read_phase_entry(ctx);
      ++w.restarts_seen;
      complete(w, {StepOutcome::restarted, ""});
    }
    for (;;) {
      const ScriptStep* step = nullptr;
      {
        std::unique_lock lock(w.mu);
        w.cv.wait(lock, [&] { return w.pending != nullptr || w.shutdown; });
        if (w.shutdown && w.pending == nullptr) break;
        step = w.pending;
      }
      Completion c;
      if (step->op == "begin_read") {
        // Handled inline: the checkpoint captured above stays valid for
        // the whole session, so entering the read phase is just the
        // entry bookkeeping.
        try {
          r_.on_read_phase_entry(ctx);
        } catch (const error& e) {
          c = {StepOutcome::failed, e.what()};
        }
      } else {
        try {
          c = execute(ctx, *step);
        } catch (const script_error&) {
          c.fatal = std::current_exception();
        }
      }
      complete(w, c);
    }
    leave_phases(ctx);
    r_.unregister_drain(ctx);
    dom_.registry().unregister_thread(ctx);
  }

  void complete(Worker& w, Completion c) {
    {
      std::lock_guard lock(w.mu);
      w.pending = nullptr;
      w.completion = std::move(c);
      w.done = true;
    }
    w.cv.notify_all();
  }

  ScriptRecord* named(const ScriptStep& s, std::size_t i) {
    if (i >= s.args.size())
      throw script_error("line " + std::to_string(s.line) + ": " + s.op +
                         " needs a record name");
    auto it = records_.find(s.args[i]);
    if (it == records_.end())
      throw script_error("line " + std::to_string(s.line) + ": unknown record '" +
                         s.args[i] + "'");
    return it->second;
  }

  NbrPlusReclaimer& plus(const ScriptStep& s) {
    if (!plus_)
      throw script_error("line " + std::to_string(s.line) + ": '" + s.op +
                         "' needs the watermark reclaimer");
    return *plus_;
  }

  Completion execute(ThreadContext& ctx, const ScriptStep& s) {
    try {
      if (s.op == "alloc") {
        if (s.args.empty())
          throw script_error("line " + std::to_string(s.line) + ": alloc needs a name");
        records_[s.args[0]] = dom_.allocator().create<ScriptRecord>();
      } else if (s.op == "link") {
        lifecycle_advance(*named(s, 0), Lifecycle::reachable);
      } else if (s.op == "begin_op") {
        r_.begin_op(ctx);
      } else if (s.op == "end_op") {
        r_.end_op(ctx);
      } else if (s.op == "end_read") {
        std::vector<RecordBase*> resv;
        for (std::size_t i = 0; i < s.args.size(); ++i) resv.push_back(named(s, i));
        r_.end_read_phase(ctx, resv);
      } else if (s.op == "deref") {
        ScriptRecord* rec = named(s, 0);
        r_.check_access(ctx, rec);
        (void)rec->payload.load(std::memory_order_acquire);
      } else if (s.op == "unlink") {
        r_.mark_unlinked(ctx, named(s, 0));
      } else if (s.op == "retire") {
        r_.retire(ctx, named(s, 0));
        retired_names_.insert(s.args[0]);
      } else if (s.op == "broadcast") {
        // Non-blocking scripted delivery: each target handles the event
        // at its own scripted step. The blocking handshake would
        // deadlock against idle scripted workers.
        for (auto& other : workers_)
          if (other->ctx != &ctx) dom_.backend().post_one(*other->ctx);
        ctx.broadcasts_sent.fetch_add(1, std::memory_order_relaxed);
      } else if (s.op == "reclaim") {
        r_.sweep_full_tail(ctx);
      } else if (s.op == "post") {
        if (s.args.empty())
          throw script_error("line " + std::to_string(s.line) + ": post needs a tid");
        const unsigned target = static_cast<unsigned>(std::stoul(s.args[0]));
        if (target >= workers_.size())
          throw script_error("line " + std::to_string(s.line) + ": post target " +
                             s.args[0] + " out of range");
        dom_.backend().post_one(*workers_[target]->ctx);
      } else if (s.op == "announce_begin") {
        plus(s).announce_begin(ctx);
      } else if (s.op == "announce_end") {
        plus(s).announce_end(ctx);
      } else if (s.op == "lo_enter") {
        plus(s).begin_lo_episode(ctx);
      } else if (s.op == "try_lo") {
        if (!plus(s).guarantee_holds(ctx)) return {StepOutcome::blocked, ""};
        plus(s).reclaim_bookmark(ctx);
      } else if (s.op == "force_lo") {
        plus(s).reclaim_bookmark(ctx);
      } else if (s.op == "expect_live") {
        if (named(s, 0)->poisoned())
          return {StepOutcome::failed, s.args[0] + " is poisoned"};
      } else if (s.op == "expect_poisoned") {
        if (!named(s, 0)->poisoned())
          return {StepOutcome::failed, s.args[0] + " is still live"};
      } else {
        throw script_error("line " + std::to_string(s.line) + ": unknown op '" +
                           s.op + "'");
      }
    } catch (const poison_error& e) {
      return {StepOutcome::poison, e.what()};
    } catch (const script_error&) {
      throw;  // malformed script: abort the run
    } catch (const error& e) {
      return {StepOutcome::failed, e.what()};
    }
    return {StepOutcome::ok, ""};
  }

  /// Best-effort unwinding of whatever phase the script left a worker
  /// in, so the slot can be released cleanly.
  void leave_phases(ThreadContext& ctx) {
    try {
      if (ctx.phase() == Phase::preamble) r_.on_read_phase_entry(ctx);
      if (ctx.phase() == Phase::read) r_.end_read_phase(ctx, {});
      if (ctx.phase() == Phase::write) r_.end_op(ctx);
    } catch (const error&) {
    }
  }

  SmrDomain& dom_;
  NbrReclaimer& r_;
  NbrPlusReclaimer* plus_;
  std::vector<std::unique_ptr<Worker>> workers_;
  std::map<std::string, ScriptRecord*> records_;
  std::set<std::string> retired_names_;
};

}  // namespace nbr
